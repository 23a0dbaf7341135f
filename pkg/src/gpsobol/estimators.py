"""Pick-freeze estimators of first-, total- and second-order Sobol' indices.

All estimators share the pooled sample variance of ``[f(A); f(B)]`` as the
denominator.  First- and second-order numerators are computed on outputs
centred by the pooled mean of ``[f(A); f(B)]``; the total-order (Jansen)
numerator only involves differences and needs no centring.  Estimates are
returned raw, so sampling noise can push them slightly below 0 or above 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateVariance, DesignIncomplete, ShapeMismatch

DEGENERATE_RTOL = 1e-14


@dataclass(frozen=True)
class DesignEvaluations:
    yA: np.ndarray
    yB: np.ndarray
    yAB: tuple[np.ndarray, ...]
    yBA: tuple[np.ndarray, ...] | None = None
    centered: bool = False
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yA", np.asarray(self.yA, dtype=float))
        object.__setattr__(self, "yB", np.asarray(self.yB, dtype=float))
        object.__setattr__(self, "yAB", tuple(np.asarray(v, dtype=float) for v in self.yAB))
        if self.yBA is not None:
            object.__setattr__(self, "yBA", tuple(np.asarray(v, dtype=float) for v in self.yBA))
        m = self.yA.shape
        vecs = [self.yB, *self.yAB, *(self.yBA or ())]
        if len(m) != 1 or any(v.shape != m for v in vecs):
            raise ShapeMismatch("all evaluation vectors must be 1-d with a common length")
        if self.yBA is not None and len(self.yBA) != len(self.yAB):
            raise ShapeMismatch("yBA and yAB must have one vector per parameter")

    @classmethod
    def from_design(cls, design, values):
        """Wrap a flat vector ordered like ``design.rows()``."""
        parts = design.split(values)
        return cls(parts["A"], parts["B"], tuple(parts["AB"]),
                   None if parts["BA"] is None else tuple(parts["BA"]))

    @property
    def m(self) -> int:
        return self.yA.shape[0]

    @property
    def dim(self) -> int:
        return len(self.yAB)

    def resample(self, idx) -> "DesignEvaluations":
        """Apply one list of row indices jointly to every block."""
        idx = np.asarray(idx)
        return DesignEvaluations(
            self.yA[idx], self.yB[idx], tuple(v[idx] for v in self.yAB),
            None if self.yBA is None else tuple(v[idx] for v in self.yBA),
        )

    def centered_copy(self) -> "DesignEvaluations":
        if self.centered:
            return self
        c = float(np.concatenate([self.yA, self.yB]).mean())
        return replace(
            self,
            yA=self.yA - c,
            yB=self.yB - c,
            yAB=tuple(v - c for v in self.yAB),
            yBA=None if self.yBA is None else tuple(v - c for v in self.yBA),
            centered=True,
            center=self.center + c,
        )


def pooled_variance(evals: DesignEvaluations) -> float:
    """Unbiased sample variance of ``concat(yA, yB)``."""
    if evals.m < 2:
        raise ValueError("need at least two Monte-Carlo samples")
    y = np.concatenate([evals.yA, evals.yB])
    var = float(np.var(y, ddof=1))
    scale = float(np.max(np.abs(y))) + abs(evals.center)
    if not var > DEGENERATE_RTOL * scale**2:
        raise DegenerateVariance(f"pooled output variance {var:.3e} is degenerate")
    return var


def _check_index(evals, i):
    if not 0 <= i < evals.dim:
        raise IndexError(f"parameter index {i} out of range for dimension {evals.dim}")


def _first_order_numerator(ev: DesignEvaluations, i: int) -> float:
    return float(np.mean(ev.yB * (ev.yAB[i] - ev.yA)))


def first_order(evals: DesignEvaluations, i: int, variance: float | None = None) -> float:
    """First-order index of parameter ``i`` (0-based)."""
    _check_index(evals, i)
    ev = evals.centered_copy()
    if variance is None:
        variance = pooled_variance(ev)
    return _first_order_numerator(ev, i) / variance


def total_order(evals: DesignEvaluations, i: int, variance: float | None = None) -> float:
    """Total-order index of parameter ``i`` (0-based)."""
    _check_index(evals, i)
    if variance is None:
        variance = pooled_variance(evals.centered_copy())
    return float(0.5 * np.mean((evals.yA - evals.yAB[i]) ** 2)) / variance


def second_order(evals: DesignEvaluations, i: int, j: int, variance: float | None = None) -> float:
    """Second-order index of the pair ``(i, j)``; needs the ``BA`` blocks."""
    if evals.yBA is None:
        raise DesignIncomplete("second-order indices need the BA design blocks")
    if i == j:
        raise DesignIncomplete("second-order index needs two distinct parameters")
    _check_index(evals, i)
    _check_index(evals, j)
    ev = evals.centered_copy()
    if variance is None:
        variance = pooled_variance(ev)
    closed = float(np.mean(ev.yBA[i] * ev.yAB[j] - ev.yA * ev.yB)) / variance
    s_i = _first_order_numerator(ev, i) / variance
    s_j = _first_order_numerator(ev, j) / variance
    return closed - s_i - s_j


def all_indices(evals: DesignEvaluations, second: bool | None = None):
    """First, total and (optionally) second-order indices in one pass.

    Returns ``(first, total, second)`` where ``second`` is a symmetric
    ``(D, D)`` array with NaN on the diagonal, or ``None``.
    """
    if second is None:
        second = evals.yBA is not None
    ev = evals.centered_copy()
    var = pooled_variance(ev)
    d = evals.dim
    first = np.array([first_order(ev, i, var) for i in range(d)])
    total = np.array([total_order(ev, i, var) for i in range(d)])
    s2 = None
    if second:
        s2 = np.full((d, d), np.nan)
        for i in range(d):
            for j in range(i + 1, d):
                s2[i, j] = s2[j, i] = second_order(ev, i, j, var)
    return first, total, s2
