"""Analytic benchmark functions with exact Sobol' indices, and the Q2 score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from urllib.parse import parse_qs

import numpy as np

from .errors import ConfigError, DegenerateVariance, DomainError, ShapeMismatch
from .space import ParameterSpace


@dataclass(frozen=True)
class AnalyticIndices:
    first: np.ndarray
    total: np.ndarray
    second: np.ndarray  # symmetric (D, D), zero diagonal
    variance: float


@dataclass(frozen=True)
class BenchmarkFn:
    """Base class; subclasses define ``__call__`` on an (n, D) array."""

    def __call__(self, x):
        raise NotImplementedError

    @property
    def space(self) -> ParameterSpace:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        return self.space.dim

    def evaluate(self, x):
        """Evaluate at one point or a batch of points, checking the domain."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.dim:
            raise ShapeMismatch(f"{self.name} takes {self.dim} inputs, got {x2.shape[1]}")
        lo, hi = self.space.lower, self.space.upper
        slack = 1e-12 * (hi - lo)
        if not np.all(np.isfinite(x2)) or np.any(x2 < lo - slack) or np.any(x2 > hi + slack):
            raise DomainError(f"input outside the domain of {self.name}")
        y = self(x2)
        return float(y[0]) if single else y

    def analytic_indices(self) -> AnalyticIndices:
        raise NotImplementedError


@dataclass(frozen=True)
class Ishigami(BenchmarkFn):
    a: float = 7.0
    b: float = 0.1
    name: str = field(default="ishigami", init=False)

    @property
    def space(self):
        return ParameterSpace.from_bounds([(-math.pi, math.pi)] * 3)

    def __call__(self, x):
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        return np.sin(x1) + self.a * np.sin(x2) ** 2 + self.b * x3**4 * np.sin(x1)

    def analytic_indices(self):
        a, b, pi = self.a, self.b, math.pi
        v1 = b * pi**4 / 5 + b**2 * pi**8 / 50 + 0.5
        v2 = a**2 / 8
        v13 = 8 * b**2 * pi**8 / 225
        var = a**2 / 8 + b * pi**4 / 5 + b**2 * pi**8 / 18 + 0.5
        if var <= 0:
            raise DegenerateVariance("Ishigami variance is zero")
        first = np.array([v1, v2, 0.0]) / var
        second = np.zeros((3, 3))
        second[0, 2] = second[2, 0] = v13 / var
        total = np.array([v1 + v13, v2, v13]) / var
        return AnalyticIndices(first, total, second, var)


@dataclass(frozen=True)
class GFunction(BenchmarkFn):
    """Sobol' G-function on [0, 1]^D."""

    a: tuple[float, ...] = (0.0, 1.0, 4.5, 9.0, 99.0, 99.0)
    name: str = field(default="gfunction", init=False)

    @property
    def space(self):
        return ParameterSpace.from_bounds([(0.0, 1.0)] * len(self.a))

    def __call__(self, x):
        a = np.asarray(self.a, dtype=float)
        return np.prod((np.abs(4 * x - 2) + a) / (1 + a), axis=1)

    def analytic_indices(self):
        a = np.asarray(self.a, dtype=float)
        vi = (1 / 3) / (1 + a) ** 2
        var = float(np.prod(1 + vi) - 1)
        if var <= 0:
            raise DegenerateVariance("G-function variance is zero")
        d = len(a)
        first = vi / var
        second = np.outer(vi, vi) / var
        np.fill_diagonal(second, 0.0)
        total = np.array([vi[i] * np.prod(np.delete(1 + vi, i)) for i in range(d)]) / var
        return AnalyticIndices(first, total, second, var)


@dataclass(frozen=True)
class LinearAdditive(BenchmarkFn):
    w: tuple[float, ...] = (1.0, 2.0)
    name: str = field(default="linear", init=False)

    @property
    def space(self):
        return ParameterSpace.from_bounds([(0.0, 1.0)] * len(self.w))

    def __call__(self, x):
        return x @ np.asarray(self.w, dtype=float)

    def analytic_indices(self):
        vi = np.asarray(self.w, dtype=float) ** 2 / 12
        var = float(vi.sum())
        if var <= 0:
            raise DegenerateVariance("all weights are zero")
        first = vi / var
        return AnalyticIndices(first, first.copy(), np.zeros((len(vi), len(vi))), var)


def _floats(values):
    return tuple(float(v) for v in values.split(","))


def from_selector(selector: str) -> BenchmarkFn:
    """Parse selectors such as ``builtin:ishigami?a=7&b=0.1`` or ``builtin:linear?w=1,2``."""
    body = selector.removeprefix("builtin:")
    name, _, query = body.partition("?")
    opts = {k: v[-1] for k, v in parse_qs(query, keep_blank_values=True, strict_parsing=bool(query)).items()}
    try:
        if name == "ishigami":
            unknown = set(opts) - {"a", "b"}
            fn = Ishigami(**{k: float(v) for k, v in opts.items() if k in "ab"})
        elif name in ("gfunction", "g"):
            unknown = set(opts) - {"a"}
            fn = GFunction(_floats(opts["a"])) if "a" in opts else GFunction()
        elif name == "linear":
            unknown = set(opts) - {"w"}
            fn = LinearAdditive(_floats(opts["w"])) if "w" in opts else LinearAdditive()
        else:
            raise ConfigError(f"unknown builtin model {name!r}")
    except ValueError as exc:
        raise ConfigError(f"bad builtin selector {selector!r}: {exc}") from None
    if unknown:
        raise ConfigError(f"unknown options {sorted(unknown)} for builtin {name!r}")
    return fn


def nash_sutcliffe(pred, truth) -> float:
    """Nash-Sutcliffe efficiency with the truth-based denominator."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ShapeMismatch("pred and truth must be 1-d arrays of equal length")
    if pred.size < 2:
        raise ValueError("need at least two points")
    ss_tot = np.sum((truth - truth.mean()) ** 2)
    if ss_tot <= 1e-300 or ss_tot <= 1e-28 * np.sum(truth**2):
        raise DegenerateVariance("truth values are constant")
    return float(1.0 - np.sum((pred - truth) ** 2) / ss_tot)
