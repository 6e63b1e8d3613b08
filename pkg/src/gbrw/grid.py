"""Shared uniform grid, grid-aligned pmfs and tail curves.

Every distribution and curve in the package lives on one uniform grid
``x_i = (lo + i) * h``.  Displacements are stored in integer grid units, so
convolution never interpolates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, NonProbability

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[xmin, xmax]`` with step ``h``.

    Both endpoints must be integer multiples of ``h`` and the grid must
    contain 0, since the starting tail ``1{x<0}`` jumps there.
    """

    xmin: float = -60.0
    xmax: float = 60.0
    h: float = 0.05

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"grid step must be positive, got {self.h}")
        for name in ("xmin", "xmax"):
            v = getattr(self, name) / self.h
            if abs(v - round(v)) > 1e-9 * max(1.0, abs(v)):
                raise ValueError(f"{name}={getattr(self, name)} is not a multiple of h={self.h}")
        if not (self.xmin < 0 < self.xmax):
            raise ValueError("grid must contain 0 strictly inside [xmin, xmax]")

    @property
    def lo(self) -> int:
        return int(round(self.xmin / self.h))

    @property
    def hi(self) -> int:
        return int(round(self.xmax / self.h))

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def points(self) -> np.ndarray:
        return (self.lo + np.arange(self.size)) * self.h

    def units(self, x: float) -> int:
        """Integer grid coordinate of ``x``; ``x`` must be grid aligned."""
        v = x / self.h
        r = int(round(v))
        if abs(v - r) > 1e-9 * max(1.0, abs(v)):
            raise DomainError(f"x={x} is not aligned with grid step {self.h}")
        return r

    def index(self, x: float) -> int:
        """Array index of grid point ``x`` (may fall outside ``[0, size)``)."""
        return self.units(x) - self.lo

    def floor_index(self, x) -> np.ndarray:
        """Index of the grid cell ``[x_i, x_{i+1})`` containing ``x``."""
        return np.floor(np.asarray(x, dtype=float) / self.h + 1e-9).astype(np.int64) - self.lo

    def to_dict(self) -> dict:
        return {"xmin": self.xmin, "xmax": self.xmax, "h": self.h}


@dataclass(frozen=True, eq=False)
class GridPmf:
    """Probability mass function on grid points ``(lo + j) * h``."""

    lo: int
    weights: np.ndarray
    h: float

    def __post_init__(self):
        w = _frozen(self.weights)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise NonProbability("pmf weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NonProbability("pmf weights must be finite and non-negative")
        s = float(w.sum())
        if abs(s - 1.0) > PROB_TOL:
            raise NonProbability(f"pmf weights sum to {s!r}, not 1")

    # -- constructors -------------------------------------------------------

    @classmethod
    def point_mass(cls, x: float, h: float) -> "GridPmf":
        return cls.from_points({x: 1.0}, h)

    @classmethod
    def from_points(cls, points: Mapping[float, float], h: float) -> "GridPmf":
        if not points:
            raise NonProbability("empty pmf")
        units = {}
        for x, w in points.items():
            v = float(x) / h
            r = int(round(v))
            if abs(v - r) > 1e-9 * max(1.0, abs(v)):
                raise DomainError(f"atom at {x} is not aligned with grid step {h}")
            units[r] = units.get(r, 0.0) + float(w)
        lo, hi = min(units), max(units)
        w = np.zeros(hi - lo + 1)
        for r, p in units.items():
            w[r - lo] += p
        return cls(lo, w, h)

    @classmethod
    def rasterize(cls, dist, h: float, lower: float, upper: float) -> "GridPmf":
        """Cell-mass discretization of a continuous scipy distribution.

        Grid point ``x_j`` receives the mass of ``[x_j - h/2, x_j + h/2)``
        (midpoint cells).  Mass below ``lower`` or above ``upper`` is lumped
        into the end cells, so the result is an exact probability vector.
        """
        lo = int(np.floor(lower / h + 1e-9))
        hi = int(np.ceil(upper / h - 1e-9))
        if hi < lo:
            raise ValueError("empty rasterization range")
        centers = (lo + np.arange(hi - lo + 1)) * h
        edges = np.concatenate([centers - h / 2, [centers[-1] + h / 2]])
        cdf = dist.cdf(edges)
        sf = dist.sf(edges)
        med = float(dist.median())
        # differences of the cdf on the left half, of the sf on the right half
        w = np.where(centers <= med, np.diff(cdf), -np.diff(sf))
        w[0] = cdf[1]
        w[-1] = sf[-2]
        w = np.clip(w, 0.0, None)
        return cls(lo, w / w.sum(), h)

    # -- queries ------------------------------------------------------------

    @property
    def hi(self) -> int:
        return self.lo + self.weights.size - 1

    @property
    def units(self) -> np.ndarray:
        return self.lo + np.arange(self.weights.size)

    @property
    def values(self) -> np.ndarray:
        return self.units * self.h

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def survival(self) -> np.ndarray:
        """``P(X > x_j)`` at each support point, summed from the right."""
        w = self.weights
        out = np.zeros_like(w)
        out[:-1] = np.cumsum(w[::-1])[::-1][1:]
        return out

    def tail_at(self, units) -> np.ndarray:
        """``P(X > x)`` for integer grid coordinates ``units``."""
        u = np.asarray(units, dtype=np.int64)
        sv = self.survival()
        idx = np.clip(u - self.lo, 0, self.weights.size - 1)
        return np.where(u < self.lo, 1.0, np.where(u > self.hi, 0.0, sv[idx]))

    def cdf_at(self, units) -> np.ndarray:
        """``P(X <= x)``."""
        return 1.0 - self.tail_at(units)

    def at_least(self, units) -> np.ndarray:
        """``P(X >= x)`` (left limit of the survival function)."""
        return self.tail_at(np.asarray(units, dtype=np.int64) - 1)

    def shifted(self, units: int) -> "GridPmf":
        return GridPmf(self.lo + int(units), self.weights, self.h)

    def convolve(self, other: "GridPmf") -> "GridPmf":
        _check_same_h(self.h, other.h)
        w = np.convolve(self.weights, other.weights)
        return GridPmf(self.lo + other.lo, w / w.sum(), self.h)

    def trimmed(self, tol: float = 0.0) -> "GridPmf":
        """Drop leading and trailing weights ``<= tol`` (mass is renormalized)."""
        nz = np.nonzero(self.weights > tol)[0]
        w = self.weights[nz[0] : nz[-1] + 1]
        return GridPmf(self.lo + int(nz[0]), w / w.sum(), self.h)

    def same_as(self, other: "GridPmf") -> bool:
        return (
            self.h == other.h
            and self.lo == other.lo
            and self.weights.shape == other.weights.shape
            and bool(np.all(self.weights == other.weights))
        )

    def to_full(self, grid: Grid) -> np.ndarray:
        """Weights laid out on ``grid`` (raises if the support leaves it)."""
        _check_same_h(self.h, grid.h)
        if self.lo < grid.lo or self.hi > grid.hi:
            raise DomainError("pmf support extends beyond the grid")
        out = np.zeros(grid.size)
        out[self.lo - grid.lo : self.hi - grid.lo + 1] = self.weights
        return out

    def __repr__(self):
        return f"GridPmf(lo={self.lo}, n={self.weights.size}, h={self.h}, mean={self.mean():.6g})"


def mixture(pmfs, weights) -> GridPmf:
    """Convex combination of pmfs on the same grid step."""
    pmfs = list(pmfs)
    h = pmfs[0].h
    lo = min(p.lo for p in pmfs)
    hi = max(p.hi for p in pmfs)
    w = np.zeros(hi - lo + 1)
    for p, c in zip(pmfs, weights):
        _check_same_h(h, p.h)
        w[p.lo - lo : p.hi - lo + 1] += c * p.weights
    return GridPmf(lo, w / w.sum(), h)


def _check_same_h(h1, h2):
    if h1 != h2:
        raise DomainError(f"grid steps differ: {h1} vs {h2}")


def convolve_values(pmf: GridPmf, values: np.ndarray, left: float, right: float) -> np.ndarray:
    """``sum_j w_j f(x_i - y_j)`` for a grid function ``f``.

    ``f`` equals ``values`` on the grid and is extended by ``left`` below the
    grid and ``right`` above it.  Direct summation over the pmf support.
    """
    values = np.asarray(values, dtype=float)
    dmin, dmax = pmf.lo, pmf.hi
    lpad = max(dmax, 0)
    rpad = max(-dmin, 0)
    padded = np.concatenate([np.full(lpad, left), values, np.full(rpad, right)])
    full = np.convolve(padded, pmf.weights)
    start = lpad - dmin
    return full[start : start + values.size]


@dataclass(frozen=True, eq=False)
class TailCurve:
    """Non-increasing right-continuous step function with values in [0, 1].

    ``values[i]`` is the value on ``[x_i, x_{i+1})``.  Left of the grid the
    curve equals ``left`` (1 for every tail of a maximum), right of it 0.
    """

    grid: Grid
    values: np.ndarray
    approximate: bool = False
    stderr: np.ndarray | None = None
    correction: float = 0.0
    meta: dict = field(default_factory=dict)
    left: float = 1.0

    def __post_init__(self):
        v = _frozen(self.values)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.size,):
            raise ValueError(f"curve has {v.size} values, grid has {self.grid.size}")
        if np.any(~np.isfinite(v)) or v.min() < -PROB_TOL or v.max() > 1 + PROB_TOL:
            raise DomainError("tail curve values must lie in [0, 1]")

    def at_index(self, idx) -> np.ndarray:
        """Values at (possibly out-of-range) array indices, with extension."""
        idx = np.asarray(idx, dtype=np.int64)
        n = self.values.size
        inner = self.values[np.clip(idx, 0, n - 1)]
        return np.where(idx < 0, self.left, np.where(idx >= n, 0.0, inner))

    def __call__(self, x) -> np.ndarray:
        return self.at_index(self.grid.floor_index(x))

    def shifted_values(self, units: int) -> np.ndarray:
        """Values of ``x -> u(x - units*h)`` on the grid."""
        return self.at_index(np.arange(self.grid.size) - units)

    def is_monotone(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def cdf(self) -> np.ndarray:
        return 1.0 - self.values
