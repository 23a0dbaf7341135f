"""Posterior realisations and projections of a trained GP."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..seeding import STREAM_PROBE, STREAM_REALIZATION, task_rng
from .kernels import kernel_matrix
from .model import TrainedGP, _cross, cholesky_with_jitter, from_standard, predict_mean

log = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 1024


def _posterior_block(gp: TrainedGP, Xb):
    Xb, Ks = _cross(gp, Xb)
    mean = Ks.T @ gp.alpha
    v = linalg.solve_triangular(gp.chol, Ks, lower=True, check_finite=False)
    cov = kernel_matrix(gp.spec, gp.theta, Xb, Xb) - v.T @ v
    return mean, 0.5 * (cov + cov.T)


def _factor(cov):
    if not np.max(np.diag(cov), initial=0.0) > 0.0:
        return np.zeros_like(cov), 0.0
    return cholesky_with_jitter(cov)


def draw_joint(gp: TrainedGP, X, n_gp: int, rng: np.random.Generator):
    """``n_gp`` joint posterior draws at the rows of ``X``; returns (draws, jitter)."""
    mean, cov = _posterior_block(gp, X)
    L, jitter = _factor(cov)
    z = rng.standard_normal((n_gp, L.shape[0]))
    return mean + z @ L.T, jitter


def sample_realizations(gp: TrainedGP, Xstar, n_gp: int, seed: int,
                        block_size: int | None = None, workers: int = 1,
                        info: dict | None = None) -> np.ndarray:
    """Draw ``n_gp`` posterior realisations at ``Xstar`` (standardised units).

    Points are split into consecutive blocks of ``block_size`` rows; draws
    are joint within a block and independent across blocks.  ``None`` means
    one block holding all points (exact joint sampling).  Returns an array of
    shape ``(n_gp, P)``.
    """
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    P = Xstar.shape[0]
    size = P if block_size is None else max(1, int(block_size))
    starts = list(range(0, P, size))
    out = np.empty((n_gp, P))

    def draw(b):
        s = starts[b]
        draws, jitter = draw_joint(gp, Xstar[s:s + size], n_gp,
                                   task_rng(seed, STREAM_REALIZATION, b))
        out[:, s:s + size] = draws
        return jitter

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            jitters = list(pool.map(draw, range(len(starts))))
    else:
        jitters = [draw(b) for b in range(len(starts))]
    if max(jitters, default=0.0) > 0:
        log.info("realisation covariance needed jitter up to %.1e", max(jitters))
    if info is not None:
        info["max_jitter"] = max(jitters, default=0.0)
        info["blocks"] = len(starts)
    return out


@dataclass(frozen=True)
class ProjectionBin:
    center: float
    mean: float
    lo95: float
    hi95: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def project_mean(gp: TrainedGP, i: int, grid: int = 20, probe: int = 10000, seed: int = 0,
                 space=None) -> list[ProjectionBin]:
    """Bin uniform probes of the posterior mean along dimension ``i`` (0-based).

    Each bin reports the mean and the 2.5/97.5 percentiles of the probed mean
    values falling in it, in model-output units.  Bin centres are in physical
    units when a parameter space is available.  Empty bins get NaN statistics
    and ``count == 0``.
    """
    if not 0 <= i < gp.dim:
        raise IndexError(f"dimension {i} out of range for a {gp.dim}-d GP")
    if grid < 2:
        raise ValueError("need at least two bins")
    space = space or gp.space
    rng = task_rng(seed, STREAM_PROBE, i)
    U = rng.random((probe, gp.dim))
    values = from_standard(gp.train, predict_mean(gp, U))
    edges = np.linspace(0.0, 1.0, grid + 1)
    which = np.clip(np.searchsorted(edges, U[:, i], side="right") - 1, 0, grid - 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    if space is not None:
        p = space.params[i]
        centers = p.lower + centers * (p.upper - p.lower)
    bins = []
    for k in range(grid):
        vals = values[which == k]
        if vals.size == 0:
            bins.append(ProjectionBin(float(centers[k]), np.nan, np.nan, np.nan, 0))
            continue
        lo, hi = np.percentile(vals, [2.5, 97.5])
        bins.append(ProjectionBin(float(centers[k]), float(vals.mean()), float(lo), float(hi),
                                  int(vals.size)))
    return bins
