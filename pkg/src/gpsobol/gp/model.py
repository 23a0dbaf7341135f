"""Zero-mean GP regression on standardised outputs.

Inputs live in the unit cube and outputs are standardised to zero mean and
unit sample variance before training, which makes the zero prior mean a sound
default for arbitrary models.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from ..errors import DegenerateVariance, FitFailed, IllConditionedKernel, ShapeMismatch
from ..seeding import STREAM_FIT, task_rng
from ..space import ParameterSpace
from .kernels import Hyperparameters, KernelSpec, kernel_matrix

log = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
JSON_FORMAT = "gpsobol.trained_gp"
JSON_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y_raw: np.ndarray
    y_std: np.ndarray
    out_mean: float
    out_scale: float

    @classmethod
    def from_raw(cls, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ShapeMismatch(f"{X.shape[0]} inputs but {y.size} outputs")
        if y.size == 0:
            raise ValueError("empty training set")
        mean = float(y.mean())
        scale = float(y.std(ddof=1)) if y.size > 1 else 0.0
        if not scale > 0:
            scale = 1.0
        return cls(X, y, (y - mean) / scale, mean, scale)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def to_standard(train: TrainingSet, y):
    return (np.asarray(y, dtype=float) - train.out_mean) / train.out_scale


def from_standard(train: TrainingSet, y):
    return np.asarray(y, dtype=float) * train.out_scale + train.out_mean


def cholesky_with_jitter(K):
    """Lower Cholesky factor of ``K``, escalating diagonal jitter on failure.

    Returns ``(L, jitter)``; ``jitter`` is 0 when none was needed.
    """
    jitter = 0.0
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
            return linalg.cholesky(Kj, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise IllConditionedKernel(
                    f"matrix not positive definite with jitter up to {JITTER_MAX:g}",
                    jitter=JITTER_MAX,
                ) from None


def _factorize(train, spec, theta, with_grad=False):
    out = kernel_matrix(spec, theta, train.X, train.X, with_grad=with_grad)
    K, grads = out if with_grad else (out, None)
    K_eps = K + theta.nugget * np.eye(train.n)
    L, jitter = cholesky_with_jitter(K_eps)
    alpha = linalg.cho_solve((L, True), train.y_std, check_finite=False)
    return K, grads, L, jitter, alpha


def _lml_from_factor(y, L, alpha):
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * y.size * LOG_2PI)


def log_marginal_likelihood(train: TrainingSet, spec: KernelSpec, theta: Hyperparameters) -> float:
    _, _, L, _, alpha = _factorize(train, spec, theta)
    return _lml_from_factor(train.y_std, L, alpha)


def lml_and_gradient(train, spec, theta):
    """LML and its gradient in (log sigma_f^2 [D], log ell [D], log sigma_y^2)."""
    K, grads, L, _, alpha = _factorize(train, spec, theta, with_grad=True)
    lml = _lml_from_factor(train.y_std, L, alpha)
    Kinv = linalg.cho_solve((L, True), np.eye(train.n), check_finite=False)
    inner = np.outer(alpha, alpha) - Kinv  # dLML/dK_eps
    d = spec.dim
    g_amp = 0.5 * float(np.sum(inner * K))
    g_len = [0.5 * float(np.sum(inner * K * G)) for G in grads]
    g_nug = 0.5 * theta.nugget * float(np.trace(inner))
    return lml, np.array([g_amp] * d + g_len + [g_nug])


def lml_gradient(train: TrainingSet, spec: KernelSpec, theta: Hyperparameters) -> np.ndarray:
    return lml_and_gradient(train, spec, theta)[1]


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 10
    length_scale_bounds: tuple[float, float] = (1e-2, 1e2)
    signal_variance_bounds: tuple[float, float] = (1e-4, 1e4)
    nugget_bounds: tuple[float, float] = (1e-10, 1e-2)
    seed: int = 0
    workers: int = 1
    gtol: float = 1e-6
    maxiter: int = 500

    def log_bounds(self, dim):
        b = ([tuple(np.log(self.signal_variance_bounds))] * dim
             + [tuple(np.log(self.length_scale_bounds))] * dim
             + [tuple(np.log(self.nugget_bounds))])
        return b


@dataclass(frozen=True)
class TrainedGP:
    spec: KernelSpec
    theta: Hyperparameters
    train: TrainingSet
    chol: np.ndarray
    alpha: np.ndarray
    lml: float
    jitter: float = 0.0
    space: ParameterSpace | None = None
    diagnostics: list = field(default_factory=list, compare=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def to_json(self, meta: dict | None = None) -> str:
        """Versioned JSON document; ``meta`` is stored verbatim and ignored on load."""
        doc = {
            "format": JSON_FORMAT,
            "version": JSON_VERSION,
            "kernel": self.spec.kind.value,
            "dim": self.spec.dim,
            "hyperparameters": self.theta.to_dict(),
            "standardization": {"mean": self.train.out_mean, "scale": self.train.out_scale},
            "training": {"X_unit": self.train.X.tolist(), "y": self.train.y_raw.tolist()},
            "lml": self.lml,
            "jitter": self.jitter,
            "space": None if self.space is None else self.space.to_dict(),
        }
        if meta:
            doc["meta"] = meta
        return json.dumps(doc, indent=1)

    def save(self, path, meta: dict | None = None) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(meta))

    @classmethod
    def from_json(cls, text: str) -> "TrainedGP":
        doc = json.loads(text)
        if doc.get("format") != JSON_FORMAT or doc.get("version") != JSON_VERSION:
            raise ValueError("not a gpsobol trained-GP document of a supported version")
        X = np.asarray(doc["training"]["X_unit"], dtype=float)
        y = np.asarray(doc["training"]["y"], dtype=float)
        std = doc["standardization"]
        train = TrainingSet(X, y, (y - std["mean"]) / std["scale"], std["mean"], std["scale"])
        space = None if doc.get("space") is None else ParameterSpace.from_dict(doc["space"])
        return condition(train, KernelSpec(doc["kernel"], doc["dim"]),
                         Hyperparameters.from_dict(doc["hyperparameters"]), space=space)

    @classmethod
    def load(cls, path) -> "TrainedGP":
        with open(path) as fh:
            return cls.from_json(fh.read())


def condition(train: TrainingSet, spec: KernelSpec, theta: Hyperparameters, space=None,
              diagnostics=None) -> TrainedGP:
    """Condition the prior on ``train`` with fixed hyperparameters."""
    if train.dim != spec.dim:
        raise ShapeMismatch(f"training inputs have {train.dim} columns, kernel {spec.dim}")
    _, _, L, jitter, alpha = _factorize(train, spec, theta)
    if jitter:
        log.info("training covariance needed jitter %.1e", jitter)
    lml = _lml_from_factor(train.y_std, L, alpha)
    return TrainedGP(spec, theta, train, L, alpha, lml, jitter, space, diagnostics or [])


def _initial_point(cfg: FitConfig, dim: int, restart: int) -> np.ndarray:
    bounds = np.array(cfg.log_bounds(dim))
    if restart == 0:
        x0 = np.concatenate([np.zeros(dim), np.full(dim, np.log(0.5)), [np.log(1e-6)]])
    else:
        rng = task_rng(cfg.seed, STREAM_FIT, restart)
        # draw inside a central box so random starts avoid flat corners of the bounds
        x0 = np.concatenate([
            rng.uniform(np.log(0.1), np.log(10.0), dim) / dim,
            rng.uniform(np.log(0.05), np.log(5.0), dim),
            rng.uniform(bounds[-1, 0], bounds[-1, 1], 1),
        ])
    return np.clip(x0, bounds[:, 0], bounds[:, 1])


def _run_restart(train, spec, cfg, restart):
    dim = spec.dim
    x0 = _initial_point(cfg, dim, restart)

    def objective(vec):
        lml, grad = lml_and_gradient(train, spec, Hyperparameters.from_log_vector(vec, dim))
        return -lml, -grad

    try:
        res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B",
                                bounds=cfg.log_bounds(dim),
                                options={"gtol": cfg.gtol, "maxiter": cfg.maxiter})
    except (IllConditionedKernel, FloatingPointError, ValueError) as exc:
        return {"restart": restart, "ok": False, "error": str(exc), "x0": x0.tolist()}
    ok = bool(np.isfinite(res.fun))
    return {"restart": restart, "ok": ok, "lml": float(-res.fun), "x": res.x,
            "nit": int(res.nit), "message": str(res.message), "x0": x0.tolist()}


def fit(train: TrainingSet, spec: KernelSpec, config: FitConfig | None = None,
        space=None) -> TrainedGP:
    """Maximise the LML from ``config.restarts`` starts and keep the best one."""
    cfg = config or FitConfig()
    if train.n < 2:
        raise ValueError("need at least two training points")
    if np.ptp(train.y_raw) == 0:
        raise DegenerateVariance("training outputs are constant")
    if cfg.restarts < 1:
        raise ValueError("need at least one restart")
    restarts = range(cfg.restarts)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda r: _run_restart(train, spec, cfg, r), restarts))
    else:
        results = [_run_restart(train, spec, cfg, r) for r in restarts]
    good = [r for r in results if r["ok"]]
    if not good:
        raise FitFailed("all hyperparameter restarts failed", results)
    best = max(good, key=lambda r: (r["lml"], -r["restart"]))
    theta = Hyperparameters.from_log_vector(best["x"], spec.dim)
    diags = [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in r.items()}
             for r in results]
    return condition(train, spec, theta, space=space, diagnostics=diags)


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    cov: np.ndarray
    clipped: float = 0.0


def _cross(gp: TrainedGP, Xstar):
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xstar.shape[1] != gp.dim:
        raise ShapeMismatch(f"prediction points have {Xstar.shape[1]} columns, GP has {gp.dim}")
    return Xstar, kernel_matrix(gp.spec, gp.theta, gp.train.X, Xstar)


def predict_mean(gp: TrainedGP, Xstar, chunk: int = 20000) -> np.ndarray:
    """Posterior mean in standardised units; memory bounded by ``chunk`` rows."""
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    out = np.empty(Xstar.shape[0])
    for s in range(0, Xstar.shape[0], chunk):
        _, Ks = _cross(gp, Xstar[s:s + chunk])
        out[s:s + chunk] = Ks.T @ gp.alpha
    return out


def predict(gp: TrainedGP, Xstar, full_cov: bool = True) -> Prediction:
    """Posterior mean and covariance in standardised units.

    The covariance is symmetrised and its eigenvalues floored at zero; the
    largest clipped magnitude is returned in ``clipped``.  With
    ``full_cov=False`` only the (floored) variances are returned.
    """
    Xstar, Ks = _cross(gp, Xstar)
    mean = Ks.T @ gp.alpha
    v = linalg.solve_triangular(gp.chol, Ks, lower=True, check_finite=False)
    if not full_cov:
        var = gp.theta.prior_variance - np.sum(v * v, axis=0)
        clipped = float(max(0.0, -var.min()))
        return Prediction(mean, np.maximum(var, 0.0), clipped)
    cov = kernel_matrix(gp.spec, gp.theta, Xstar, Xstar) - v.T @ v
    cov = 0.5 * (cov + cov.T)
    w, U = linalg.eigh(cov, check_finite=False)
    clipped = float(max(0.0, -w.min()))
    if clipped > 0:
        cov = (U * np.maximum(w, 0.0)) @ U.T
        cov = 0.5 * (cov + cov.T)
    return Prediction(mean, cov, clipped)


def predict_raw(gp: TrainedGP, Xstar, full_cov: bool = True) -> Prediction:
    """Like :func:`predict` but in model-output units."""
    p = predict(gp, Xstar, full_cov)
    s = gp.train.out_scale
    return Prediction(from_standard(gp.train, p.mean), p.cov * s * s, p.clipped * s * s)
