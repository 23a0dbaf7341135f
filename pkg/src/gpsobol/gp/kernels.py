"""Tensorised stationary kernels with per-dimension hyperparameters."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalDomain, ShapeMismatch

SQRT5 = np.sqrt(5.0)


class KernelKind(str, enum.Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    MATERN52 = "matern52"

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        aliases = {"se": "squared_exponential", "rbf": "squared_exponential",
                   "matern": "matern52", "matern5/2": "matern52"}
        value = str(value).lower()
        return cls(aliases.get(value, value))


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if self.dim < 1:
            raise ValueError("kernel dimension must be >= 1")


@dataclass(frozen=True)
class Hyperparameters:
    """Per-dimension signal variances and length scales, plus a nugget.

    Length scales are in unit-cube coordinates and the nugget is in
    standardised-output variance units.
    """

    signal_variances: np.ndarray
    length_scales: np.ndarray
    nugget: float = 1e-8

    def __post_init__(self):
        sv = np.atleast_1d(np.asarray(self.signal_variances, dtype=float))
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "signal_variances", sv)
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "nugget", float(self.nugget))
        if sv.shape != ls.shape or sv.ndim != 1:
            raise ShapeMismatch("signal variances and length scales need one entry per dimension")
        if not (np.all(np.isfinite(sv)) and np.all(np.isfinite(ls)) and np.isfinite(self.nugget)):
            raise NumericalDomain("hyperparameters must be finite")
        if np.any(sv <= 0) or np.any(ls <= 0) or self.nugget < 0:
            raise ValueError("need positive signal variances and length scales, nugget >= 0")

    @property
    def dim(self) -> int:
        return self.signal_variances.size

    @property
    def prior_variance(self) -> float:
        return float(np.prod(self.signal_variances))

    def to_log_vector(self) -> np.ndarray:
        """(log sigma_f^2 [D], log ell [D], log sigma_y^2)."""
        return np.concatenate([np.log(self.signal_variances), np.log(self.length_scales),
                               [np.log(self.nugget)]])

    @classmethod
    def from_log_vector(cls, vec, dim):
        vec = np.asarray(vec, dtype=float)
        return cls(np.exp(vec[:dim]), np.exp(vec[dim:2 * dim]), float(np.exp(vec[2 * dim])))

    def to_dict(self):
        return {
            "signal_variances": self.signal_variances.tolist(),
            "length_scales": self.length_scales.tolist(),
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["signal_variances"], data["length_scales"], data["nugget"])


def _check(spec, theta, X1, X2):
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != spec.dim or X2.shape[1] != spec.dim or theta.dim != spec.dim:
        raise ShapeMismatch(f"kernel of dimension {spec.dim} got inputs {X1.shape}, {X2.shape}")
    if not (np.all(np.isfinite(X1)) and np.all(np.isfinite(X2))):
        raise NumericalDomain("kernel inputs must be finite")
    return X1, X2


def kernel_matrix(spec: KernelSpec, theta: Hyperparameters, X1, X2, with_grad=False):
    """Cross-covariance ``k(X1, X2)`` without nugget.

    With ``with_grad`` also returns a list of D arrays ``G_i`` such that
    ``dK/dlog(ell_i) = K * G_i``.
    """
    X1, X2 = _check(spec, theta, X1, X2)
    amp = theta.prior_variance
    if spec.kind is KernelKind.SQUARED_EXPONENTIAL:
        log_k = np.zeros((X1.shape[0], X2.shape[0]))
        grads = []
        for i, ell in enumerate(theta.length_scales):
            q = (X1[:, i, None] - X2[None, :, i]) ** 2 / ell**2
            log_k -= 0.5 * q
            if with_grad:
                grads.append(q)
        K = amp * np.exp(log_k)
    else:
        K = np.full((X1.shape[0], X2.shape[0]), amp)
        grads = []
        for i, ell in enumerate(theta.length_scales):
            u = SQRT5 * np.abs(X1[:, i, None] - X2[None, :, i]) / ell
            poly = 1.0 + u + u**2 / 3.0
            K *= poly * np.exp(-u)
            if with_grad:
                grads.append(u**2 * (1.0 + u) / (3.0 * poly))
    return (K, grads) if with_grad else K


def kernel_eval(spec: KernelSpec, theta: Hyperparameters, x, x_prime) -> float:
    """Kernel value for a single pair of points."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    x_prime = np.asarray(x_prime, dtype=float).reshape(1, -1)
    return float(kernel_matrix(spec, theta, x, x_prime)[0, 0])
