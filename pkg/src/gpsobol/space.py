"""Parameter spaces, Sobol' low-discrepancy points and pick-freeze designs.

The Sobol' generator uses the Joe & Kuo (2008) direction numbers shipped in
``data/new-joe-kuo-6.1024.txt`` and enumerates points in Gray-code order, so
point ``n`` of dimension 1 is the van der Corput radical inverse of ``n``'s
Gray code.  Sequences are unscrambled and start at the origin; callers that
want to drop the origin pass ``skip=1``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionUnsupported, ShapeMismatch

SOBOL_BITS = 32
_DIRECTION_FILE = "new-joe-kuo-6.1024.txt"


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float
    upper: float


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered list of independent uniform parameters with physical bounds."""

    params: tuple[Parameter, ...]

    def __post_init__(self):
        params = tuple(
            p if isinstance(p, Parameter) else Parameter(*p) for p in self.params
        )
        object.__setattr__(self, "params", params)
        if not params:
            raise ValueError("parameter space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        for p in params:
            if not (np.isfinite(p.lower) and np.isfinite(p.upper)) or not p.lower < p.upper:
                raise ValueError(f"parameter {p.name!r} needs finite lower < upper")

    @classmethod
    def from_bounds(cls, bounds, names=None):
        bounds = list(bounds)
        if names is None:
            names = [f"x{i + 1}" for i in range(len(bounds))]
        return cls(tuple(Parameter(n, float(lo), float(hi)) for n, (lo, hi) in zip(names, bounds)))

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params])

    def to_dict(self):
        return [{"name": p.name, "lower": p.lower, "upper": p.upper} for p in self.params]

    @classmethod
    def from_dict(cls, items):
        return cls(tuple(Parameter(d["name"], float(d["lower"]), float(d["upper"])) for d in items))


@dataclass(frozen=True)
class UnitSamples:
    points: np.ndarray
    skip: int = 0

    @property
    def m(self) -> int:
        return self.points.shape[0]


@functools.lru_cache(maxsize=None)
def _direction_table():
    """Parse the shipped table into a list of (s, a, m_1..m_s) tuples for dims 2.."""
    text = resources.files("gpsobol").joinpath("data", _DIRECTION_FILE).read_text()
    rows = []
    for line in text.splitlines()[1:]:
        if not line.strip():
            continue
        d, s, a, *m = (int(tok) for tok in line.split())
        rows.append((s, a, tuple(m)))
    return tuple(rows)


def max_sobol_dimension() -> int:
    return len(_direction_table()) + 1


@functools.lru_cache(maxsize=64)
def _direction_numbers(d: int) -> np.ndarray:
    """(d, SOBOL_BITS) array of direction integers v_k scaled to 2**SOBOL_BITS."""
    table = _direction_table()
    v = np.zeros((d, SOBOL_BITS), dtype=np.uint64)
    # first dimension: all m_k = 1
    for k in range(SOBOL_BITS):
        v[0, k] = 1 << (SOBOL_BITS - 1 - k)
    for j in range(1, d):
        s, a, m = table[j - 1]
        mm = list(m)
        for k in range(s, SOBOL_BITS):
            new = mm[k - s] ^ (mm[k - s] << s)
            for t in range(1, s):
                if (a >> (s - 1 - t)) & 1:
                    new ^= mm[k - t] << t
            mm.append(new)
        for k in range(SOBOL_BITS):
            v[j, k] = mm[k] << (SOBOL_BITS - 1 - k)
    v.setflags(write=False)
    return v


def sobol_points(d: int, m: int, skip: int = 0) -> UnitSamples:
    """Return points ``skip .. skip+m-1`` of the ``d``-dimensional Sobol' sequence."""
    if d < 1 or m < 1 or skip < 0:
        raise ValueError(f"need d >= 1, m >= 1, skip >= 0 (got {d}, {m}, {skip})")
    if d > max_sobol_dimension():
        raise DimensionUnsupported(
            f"dimension {d} exceeds direction-number table ({max_sobol_dimension()})"
        )
    if skip + m > 2**SOBOL_BITS:
        raise ValueError("requested points exceed the sequence period")
    v = _direction_numbers(d)
    n = np.arange(skip, skip + m, dtype=np.uint64)
    gray = n ^ (n >> np.uint64(1))
    x = np.zeros((m, d), dtype=np.uint64)
    for k in range(int(gray.max()).bit_length() if m else 0):
        bit = ((gray >> np.uint64(k)) & np.uint64(1)).astype(bool)
        x[bit] ^= v[:, k]
    points = x.astype(np.float64) / float(2**SOBOL_BITS)
    return UnitSamples(points, skip)


def _as_points(u) -> np.ndarray:
    return u.points if isinstance(u, UnitSamples) else np.atleast_2d(np.asarray(u, dtype=float))


def scale_to_space(u, space: ParameterSpace) -> np.ndarray:
    """Map unit-cube points to physical coordinates, column by column."""
    pts = _as_points(u)
    if pts.shape[1] != space.dim:
        raise ShapeMismatch(f"samples have {pts.shape[1]} columns, space has {space.dim}")
    lo, hi = space.lower, space.upper
    return lo + pts * (hi - lo)


def to_unit(x, space: ParameterSpace) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != space.dim:
        raise ShapeMismatch(f"points have {x.shape[1]} columns, space has {space.dim}")
    lo, hi = space.lower, space.upper
    return (x - lo) / (hi - lo)


@dataclass
class PickFreezeDesign:
    """Pick-freeze matrices in physical coordinates.

    ``AB[i]`` is ``A`` with column ``i`` taken from ``B``; ``BA[i]`` is the
    mirror image and is only present for second-order analyses.
    """

    space: ParameterSpace
    A: np.ndarray
    B: np.ndarray
    AB: list[np.ndarray]
    BA: list[np.ndarray] | None = None
    skip: int = 0
    _blocks: list[tuple[str, int | None]] = field(init=False, repr=False)

    def __post_init__(self):
        d = self.space.dim
        blocks = [("A", None), ("B", None)] + [("AB", i) for i in range(d)]
        if self.BA is not None:
            blocks += [("BA", i) for i in range(d)]
        self._blocks = blocks

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def second_order(self) -> bool:
        return self.BA is not None

    @property
    def n_blocks(self) -> int:
        return len(self._blocks)

    @property
    def n_rows(self) -> int:
        return self.m * self.n_blocks

    def block_labels(self) -> list[str]:
        return [name if i is None else f"{name}_{i + 1}" for name, i in self._blocks]

    def block_matrices(self) -> Iterator[np.ndarray]:
        yield self.A
        yield self.B
        yield from self.AB
        if self.BA is not None:
            yield from self.BA

    def rows(self) -> np.ndarray:
        """All evaluation rows, block by block (A, B, AB_1..AB_D, BA_1..BA_D)."""
        return np.vstack(list(self.block_matrices()))

    def rows_for(self, idx, with_ba: bool = True) -> np.ndarray:
        """Rows for sample indices ``idx`` grouped per index.

        Row ``r * nb + b`` holds block ``b`` of sample ``idx[r]`` so that all
        pick-freeze partners of one sample are contiguous.  With
        ``with_ba=False`` the BA blocks are left out.
        """
        blocks = list(self.block_matrices())
        if not with_ba:
            blocks = blocks[: 2 + self.space.dim]
        stacked = np.stack([blk[idx] for blk in blocks], axis=1)
        return stacked.reshape(-1, self.space.dim)

    def split(self, values) -> dict:
        """Split a flat vector ordered like :meth:`rows` into named blocks."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n_rows:
            raise ShapeMismatch(f"expected {self.n_rows} values, got {values.shape[-1]}")
        parts = np.split(values, self.n_blocks, axis=-1)
        d = self.space.dim
        out = {"A": parts[0], "B": parts[1], "AB": parts[2 : 2 + d], "BA": None}
        if self.BA is not None:
            out["BA"] = parts[2 + d :]
        return out

    def to_csv(self, path, meta=None) -> None:
        with open(path, "w", newline="") as fh:
            for k, v in (meta or {}).items():
                fh.write(f"# {k}={v}\n")
            writer = csv.writer(fh)
            writer.writerow(["block", *self.space.names])
            for label, blk in zip(self.block_labels(), self.block_matrices()):
                for row in blk:
                    writer.writerow([label, *(repr(float(v)) for v in row)])


def _swap_column(base: np.ndarray, donor: np.ndarray, i: int) -> np.ndarray:
    out = base.copy()
    out[:, i] = donor[:, i]
    return out


def build_design(
    space: ParameterSpace, m: int, include_second_order: bool = False, skip: int = 0
) -> PickFreezeDesign:
    """Pick-freeze design from one ``2D``-dimensional Sobol' sequence.

    ``A`` takes coordinates ``1..D`` and ``B`` coordinates ``D+1..2D`` of the
    same points.  Splitting rows into consecutive blocks instead would make
    ``B`` a digital shift of ``A`` whenever ``m`` is a power of two.
    """
    if m < 2:
        raise ValueError(f"need at least 2 Monte-Carlo samples, got {m}")
    d = space.dim
    pts = sobol_points(2 * d, m, skip).points
    A = scale_to_space(pts[:, :d], space)
    B = scale_to_space(pts[:, d:], space)
    AB = [_swap_column(A, B, i) for i in range(space.dim)]
    BA = [_swap_column(B, A, i) for i in range(space.dim)] if include_second_order else None
    return PickFreezeDesign(space, A, B, AB, BA, skip)


def read_design_csv(path, space: ParameterSpace) -> PickFreezeDesign:
    """Inverse of :meth:`PickFreezeDesign.to_csv`."""
    from .errors import SchemaError

    blocks: dict[str, list[list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != ["block", *space.names]:
            raise SchemaError(f"design header {header} does not match {space.names}")
        for row in reader:
            blocks.setdefault(row[0], []).append([float(v) for v in row[1:]])
    d = space.dim
    try:
        A = np.array(blocks["A"])
        B = np.array(blocks["B"])
        AB = [np.array(blocks[f"AB_{i + 1}"]) for i in range(d)]
    except KeyError as exc:
        raise SchemaError(f"design file lacks block {exc}") from None
    BA = None
    if "BA_1" in blocks:
        BA = [np.array(blocks[f"BA_{i + 1}"]) for i in range(d)]
    return PickFreezeDesign(space, A, B, AB, BA)


def training_points(space: ParameterSpace, n: int, skip: int = 0) -> np.ndarray:
    """``n`` training inputs in physical coordinates from the Sobol' sequence."""
    return scale_to_space(sobol_points(space.dim, n, skip), space)


def design_row_count(d: int, m: int, include_second_order: bool) -> int:
    return m * (2 * d + 2) if include_second_order else m * (d + 2)


__all__: Sequence[str] = [
    "Parameter",
    "ParameterSpace",
    "UnitSamples",
    "PickFreezeDesign",
    "sobol_points",
    "scale_to_space",
    "to_unit",
    "build_design",
    "read_design_csv",
    "training_points",
    "design_row_count",
    "max_sobol_dimension",
]
