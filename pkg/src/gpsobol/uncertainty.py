"""Index estimates from GP realisations and bootstrap resamples.

For every realisation ``k`` of the metamodel and every bootstrap list ``b``
the Sobol' indices are recomputed, giving an ``(N_GP, B)`` matrix per index.
Its spread across ``k`` measures metamodel uncertainty and its spread across
``b`` the Monte-Carlo integration error.

Bootstrap resamples are never materialised.  A resample only changes how
often each design row is counted, and every estimator is a ratio of
count-weighted sums of per-row features, so one matrix product of the
``(B, M)`` count matrix with the feature array yields all resamples at once.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import DesignIncomplete, ShapeMismatch
from .estimators import DEGENERATE_RTOL
from .gp.sampling import DEFAULT_BLOCK_SIZE, draw_joint
from .gp.model import predict_mean
from .seeding import STREAM_BOOTSTRAP, STREAM_REALIZATION, task_rng
from .space import PickFreezeDesign, to_unit


class Target(NamedTuple):
    """Index to estimate; ``j`` is only used for second order (0-based indices)."""

    order: str
    i: int
    j: int | None = None

    @property
    def label(self) -> str:
        if self.order == "second":
            return f"S{self.i + 1},{self.j + 1}"
        return f"{'ST' if self.order == 'total' else 'S'}{self.i + 1}"


def default_targets(dim: int, second: bool) -> list[Target]:
    out = [Target("first", i) for i in range(dim)] + [Target("total", i) for i in range(dim)]
    if second:
        out += [Target("second", i, j) for i in range(dim) for j in range(i + 1, dim)]
    return out


def bootstrap_indices(m: int, b: int, seed: int) -> np.ndarray:
    """``(b, m)`` array of row indices drawn uniformly with replacement.

    List ``k`` only depends on ``(seed, k)``.  One list is applied jointly to
    every design block so pick-freeze partners stay paired.
    """
    if m < 1 or b < 1:
        raise ValueError("need m >= 1 and b >= 1")
    return np.stack([task_rng(seed, STREAM_BOOTSTRAP, k).integers(0, m, m) for k in range(b)])


def bootstrap_weights(m: int, b: int, seed: int) -> np.ndarray:
    """Counts of every row in every bootstrap list, shape ``(b, m)``."""
    idx = bootstrap_indices(m, b, seed)
    return np.stack([np.bincount(row, minlength=m) for row in idx]).astype(float)


@dataclass
class IndexMatrix:
    """Estimates ``s[k, b]`` for one target; NaN marks degenerate cells.

    ``point`` holds the estimate on the full (non-resampled) design for each
    realisation.
    """

    target: Target
    s: np.ndarray
    point: np.ndarray
    mean_only: bool = False

    @property
    def n_gp(self) -> int:
        return self.s.shape[0]

    @property
    def n_boot(self) -> int:
        return self.s.shape[1]


class _Features:
    """Column layout of the per-row feature array."""

    def __init__(self, dim, pairs):
        self.dim = dim
        self.pairs = pairs
        self.n = 3 + 3 * dim + 2 * len(pairs)

    def compute(self, y, with_ba):
        """``y`` has shape (K, c, nb); returns (K, c, n_features)."""
        d = self.dim
        yA, yB = y[..., 0], y[..., 1]
        yAB = y[..., 2:2 + d]
        diff = yAB - yA[..., None]
        cols = [yA[..., None], yB[..., None], (yA * yA + yB * yB)[..., None],
                diff, yB[..., None] * diff, diff * diff]
        if self.pairs:
            if not with_ba:
                raise DesignIncomplete("second-order targets need the BA design blocks")
            yBA = y[..., 2 + d:2 + 2 * d]
            ii = [p[0] for p in self.pairs]
            jj = [p[1] for p in self.pairs]
            cols.append(yBA[..., ii] * yAB[..., jj] - (yA * yB)[..., None])
            cols.append(yBA[..., ii] + yAB[..., jj] - (yA + yB)[..., None])
        return np.concatenate(cols, axis=-1)

    def indices(self, S, m):
        """Index estimates from weighted feature sums ``S`` (..., n_features)."""
        d = self.dim
        sa, sb, q = S[..., 0], S[..., 1], S[..., 2]
        s_diff = S[..., 3:3 + d]
        s_prod = S[..., 3 + d:3 + 2 * d]
        s_sq = S[..., 3 + 2 * d:3 + 3 * d]
        c = (sa + sb) / (2 * m)
        var = (q - 2 * m * c * c) / (2 * m - 1)
        degenerate = ~(var > DEGENERATE_RTOL * q / (2 * m))
        var = np.where(degenerate, np.nan, var)
        first = (s_prod - c[..., None] * s_diff) / m / var[..., None]
        total = 0.5 * s_sq / m / var[..., None]
        second = None
        if self.pairs:
            k = len(self.pairs)
            s_closed = S[..., 3 + 3 * d:3 + 3 * d + k]
            s_lin = S[..., 3 + 3 * d + k:]
            closed = (s_closed - c[..., None] * s_lin) / m / var[..., None]
            ii = [p[0] for p in self.pairs]
            jj = [p[1] for p in self.pairs]
            second = closed - first[..., ii] - first[..., jj]
        return first, total, second


def _assemble(features, S_full, S_boot, m, targets, mean_only):
    f_full, t_full, s_full = features.indices(S_full, m)
    f_boot, t_boot, s_boot = features.indices(S_boot, m)
    pair_pos = {p: n for n, p in enumerate(features.pairs)}
    out = {}
    for t in targets:
        if t.order == "first":
            s, pt = f_boot[..., t.i], f_full[..., t.i]
        elif t.order == "total":
            s, pt = t_boot[..., t.i], t_full[..., t.i]
        else:
            n = pair_pos[(min(t.i, t.j), max(t.i, t.j))]
            s, pt = s_boot[..., n], s_full[..., n]
        out[t] = IndexMatrix(t, np.ascontiguousarray(s), np.asarray(pt).copy(), mean_only)
    return out


def _check_targets(targets, dim, design):
    for t in targets:
        if t.order not in ("first", "total", "second"):
            raise ValueError(f"unknown index order {t.order!r}")
        if not 0 <= t.i < dim or (t.order == "second" and not (t.j is not None and 0 <= t.j < dim)):
            raise IndexError(f"target {t} out of range for dimension {dim}")
        if t.order == "second":
            if t.i == t.j:
                raise DesignIncomplete("second-order index needs two distinct parameters")
            if not design.second_order:
                raise DesignIncomplete("second-order targets need the BA design blocks")


def _pairs(targets):
    return sorted({(min(t.i, t.j), max(t.i, t.j)) for t in targets if t.order == "second"})


def index_matrix_from_values(values, design: PickFreezeDesign, b: int, seed: int,
                             targets=None) -> dict:
    """Bootstrap index matrices from evaluations ordered like ``design.rows()``.

    ``values`` is a vector (one model) or a ``(K, n_rows)`` array (K
    realisations, e.g. exact model outputs with K=1).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != design.n_rows:
        raise ShapeMismatch(f"expected {design.n_rows} values per row, got {values.shape[1]}")
    dim, m = design.space.dim, design.m
    if targets is None:
        targets = default_targets(dim, design.second_order)
    targets = [Target(*t) for t in targets]
    _check_targets(targets, dim, design)
    features = _Features(dim, _pairs(targets))
    y = values.reshape(values.shape[0], design.n_blocks, m).transpose(0, 2, 1)
    y = _center_scale(y)
    F = features.compute(y, design.second_order)
    W = bootstrap_weights(m, b, seed)
    S_full = F.sum(axis=1)
    S_boot = np.einsum("bm,kmf->kbf", W, F)
    return _assemble(features, S_full, S_boot, m, targets, False)


def _center_scale(y):
    """Shift and scale each realisation by its A/B statistics; indices are invariant."""
    ab = y[:, :, :2]
    c = ab.mean(axis=(1, 2), keepdims=True)
    s = ab.std(axis=(1, 2), keepdims=True)
    s = np.where(s > 0, s, 1.0)
    return (y - c) / s


@dataclass
class RunInfo:
    blocks: int = 0
    max_jitter: float = 0.0
    points_per_block: int = 0


def compute_index_matrix(gp, design: PickFreezeDesign, n_gp: int, b: int, seed: int,
                         targets=None, mean_only: bool = False,
                         block_size: int = DEFAULT_BLOCK_SIZE, workers: int = 1,
                         info: RunInfo | None = None) -> dict:
    """``(N_GP, B)`` index matrices for every target.

    Realisations are drawn jointly for groups of Monte-Carlo samples holding
    about ``block_size`` design rows; all pick-freeze partners of a sample
    are in the same group, groups are sampled independently.  With
    ``mean_only`` the posterior mean replaces the realisations and the result
    has a single row.
    """
    dim, m = design.space.dim, design.m
    if gp.dim != dim:
        raise ShapeMismatch(f"GP has dimension {gp.dim}, design {dim}")
    if targets is None:
        targets = default_targets(dim, design.second_order)
    targets = [Target(*t) for t in targets]
    _check_targets(targets, dim, design)
    features = _Features(dim, _pairs(targets))
    with_ba = bool(features.pairs)
    nb = 2 + dim + (dim if with_ba else 0)
    per = max(1, block_size // nb)
    chunks = [np.arange(s, min(s + per, m)) for s in range(0, m, per)]
    K = 1 if mean_only else n_gp
    if not mean_only and n_gp < 1:
        raise ValueError("need n_gp >= 1")

    W = bootstrap_weights(m, b, seed)
    Wf = np.vstack([np.ones((1, m)), W])  # row 0: full design

    def work(ci):
        idx = chunks[ci]
        X = to_unit(design.rows_for(idx, with_ba=with_ba), design.space)
        if mean_only:
            draws, jitter = predict_mean(gp, X)[None, :], 0.0
        else:
            draws, jitter = draw_joint(gp, X, n_gp, task_rng(seed, STREAM_REALIZATION, ci))
        F = features.compute(draws.reshape(K, idx.size, nb), with_ba)
        # (B+1, c) @ (c, K*nf)
        part = Wf[:, idx] @ F.transpose(1, 0, 2).reshape(idx.size, -1)
        return part.reshape(b + 1, K, features.n), jitter

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(len(chunks))))
    else:
        parts = [work(ci) for ci in range(len(chunks))]
    S = np.zeros((b + 1, K, features.n))
    for part, _ in parts:  # fixed summation order keeps results scheduling-independent
        S += part
    if info is not None:
        info.blocks = len(chunks)
        info.points_per_block = per * nb
        info.max_jitter = max(j for _, j in parts)
    return _assemble(features, S[0], S[1:].transpose(1, 0, 2), m, targets, mean_only)


@dataclass
class SobolEstimate:
    target: Target
    mean: float
    var_gp: float | None
    var_mc: float
    var_total: float
    var_pooled: float
    ci_gp: float | None
    ci_total: float
    ci_low: float
    ci_high: float
    level: float = 0.95
    n_missing: int = 0
    mean_only: bool = False

    @property
    def out_of_range(self) -> bool:
        return not 0.0 <= self.mean <= 1.0

    def to_dict(self):
        return {
            "mean": self.mean,
            "var_gp": self.var_gp,
            "var_mc": self.var_mc,
            "var_total": self.var_total,
            "var_pooled": self.var_pooled,
            "ci95_gp": self.ci_gp,
            "ci95_total": self.ci_total,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_missing": self.n_missing,
            "mean_only": self.mean_only,
            "out_of_range": self.out_of_range,
        }


def _nanvar_rows(x):
    """Mean over rows of the unbiased variance of each row; rows with < 2 values skipped."""
    counts = np.sum(np.isfinite(x), axis=1)
    ok = counts >= 2
    if not np.any(ok):
        return 0.0
    with np.errstate(invalid="ignore"):
        v = np.nanvar(x[ok], axis=1, ddof=1)
    return float(np.mean(v))


def decompose(matrix, level: float = 0.95, ci: str = "normal") -> SobolEstimate:
    """Mean, metamodel and Monte-Carlo variance of one index matrix.

    ``var_gp`` averages the variance across realisations over bootstrap
    columns; ``var_mc`` averages the variance across bootstrap samples over
    realisations; ``var_total`` is their sum.  ``ci`` selects normal
    (mean +- z sigma) or percentile bounds for ``ci_low``/``ci_high``.
    """
    if isinstance(matrix, IndexMatrix):
        s, target, mean_only = matrix.s, matrix.target, matrix.mean_only
    else:
        s, target, mean_only = np.asarray(matrix, dtype=float), None, False
    n_gp, n_boot = s.shape
    if n_boot < 2 or (n_gp < 2 and not mean_only):
        raise ValueError("need N_GP >= 2 and B >= 2 for the variance decomposition")
    finite = np.isfinite(s)
    n_missing = int(s.size - finite.sum())
    if not finite.any():
        raise ValueError("every cell of the index matrix is degenerate")
    mean = float(np.mean(s[finite]))
    var_mc = _nanvar_rows(s)
    var_gp = None if mean_only else _nanvar_rows(s.T)
    var_total = var_mc + (var_gp or 0.0)
    var_pooled = float(np.var(s[finite], ddof=1)) if finite.sum() > 1 else 0.0
    z = float(stats.norm.ppf(0.5 + level / 2))
    ci_total = z * math.sqrt(var_total)
    ci_gp = None if var_gp is None else z * math.sqrt(var_gp)
    if ci == "normal":
        lo, hi = mean - ci_total, mean + ci_total
    elif ci == "percentile":
        lo, hi = (float(v) for v in np.percentile(s[finite], [50 * (1 - level), 50 * (1 + level)]))
    else:
        raise ValueError(f"unknown CI method {ci!r}")
    return SobolEstimate(target, mean, var_gp, var_mc, var_total, var_pooled, ci_gp, ci_total,
                         lo, hi, level, n_missing, mean_only)


@dataclass
class SobolReport:
    names: list[str]
    estimates: dict = field(default_factory=dict)  # Target -> SobolEstimate
    metadata: dict = field(default_factory=dict)

    def get(self, order, i, j=None) -> SobolEstimate:
        if order == "second":
            i, j = min(i, j), max(i, j)
        return self.estimates[Target(order, i, j)]

    def means(self, order) -> np.ndarray:
        return np.array([self.estimates[Target(order, i)].mean for i in range(len(self.names))])

    def to_dict(self):
        params = {}
        for i, name in enumerate(self.names):
            entry = {}
            for order in ("first", "total"):
                est = self.estimates.get(Target(order, i))
                if est is not None:
                    entry[order] = est.to_dict()
            params[name] = entry
        second = []
        for t, est in self.estimates.items():
            if t.order == "second":
                second.append({"i": self.names[t.i], "j": self.names[t.j], **est.to_dict()})
        return {
            "format": "gpsobol.sobol_report",
            "version": 1,
            "parameters": params,
            "second_order": second,
            "third_order": None,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=True) + "\n"

    def csv_rows(self):
        header = ["order", "param_i", "param_j", "mean", "var_gp", "var_mc", "var_total",
                  "ci95_gp", "ci95_total", "ci_low", "ci_high", "n_missing", "mean_only"]
        rows = []
        for t, est in self.estimates.items():
            rows.append([t.order, self.names[t.i], "" if t.j is None else self.names[t.j],
                         est.mean, est.var_gp, est.var_mc, est.var_total, est.ci_gp,
                         est.ci_total, est.ci_low, est.ci_high, est.n_missing, est.mean_only])
        return header, rows


def build_report(matrices: dict, names, metadata=None, level=0.95, ci="normal") -> SobolReport:
    report = SobolReport(list(names), metadata=dict(metadata or {}))
    for t, mat in matrices.items():
        report.estimates[t] = decompose(mat, level, ci)
    return report
