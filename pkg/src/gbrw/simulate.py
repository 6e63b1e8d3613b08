"""Monte Carlo sampling of the maximal displacement.

One replicate explores the tree depth first and keeps only the running
maximum, so memory stays O(depth * k0).  Subtrees that cannot beat the
current maximum, even if every remaining step took the largest possible
displacement, are skipped without drawing their randomness.  The skipped
nodes cannot change the maximum, so it has exactly the law of the
full-tree maximum (the individual draws differ from an unpruned run).

Seeding: replicate r of a run with seed s uses the 32-bit seed
``splitmix64(s * 0x9E3779B97F4A7C15 + r) >> 32`` (all arithmetic mod 2^64),
so every replicate is reproducible on its own and the result does not
depend on the worker count.  ``sample_max(seed)`` is replicate 0.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

from .errors import PopulationCapExceeded
from .grid import TailCurve
from .laws import BranchingLaw, CommonShift, DisplacementLaw, Independent, MonteCarlo, ProductMixture

DEFAULT_NODE_CAP = 1_000_000

_INDEPENDENT, _COMMON_SHIFT, _PRODUCT = 0, 1, 2


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def replicate_seeds(seed: int, r) -> np.ndarray:
    """Per-replicate 32-bit seeds (splitmix64 finalizer of ``seed * golden + r``)."""
    r = np.atleast_1d(np.asarray(r, dtype=np.uint64))
    # array arithmetic wraps mod 2^64 silently
    z = np.full(r.shape, seed % 2**64, dtype=np.uint64) * _GOLDEN + r
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(32)).astype(np.int64)


def replicate_seed(seed: int, r: int) -> int:
    return int(replicate_seeds(seed, [r])[0])


# ---------------------------------------------------------------------------
# flattened law tables for the compiled kernel
# ---------------------------------------------------------------------------


@dataclass
class _Tables:
    off_cdf: np.ndarray  # (depth, K+1)
    jtype: np.ndarray  # (depth, K+1)
    ja: np.ndarray
    jb: np.ndarray
    pool_lo: np.ndarray
    pool_start: np.ndarray
    pool_len: np.ndarray
    pool_cdf: np.ndarray
    mix_start: np.ndarray  # first weight index of mixture id
    mix_ncomp: np.ndarray
    mix_cdf: np.ndarray
    mix_ids_start: np.ndarray  # first pmf-id index of mixture id
    mix_ids: np.ndarray
    suffix_max: np.ndarray  # (depth+1,)


def _cdf(weights):
    c = np.cumsum(weights)
    c[-1] = 1.0
    return c


def _build_tables(branching: BranchingLaw, displacement: DisplacementLaw, m: int, n: int) -> _Tables:
    depth = n - m
    pmfs = {}
    pool = []

    def pid(p):
        key = (p.lo, p.weights.tobytes())
        if key not in pmfs:
            pmfs[key] = len(pool)
            pool.append(p)
        return pmfs[key]

    mixtures = []
    kmax = max(branching.pmf(m + d).size - 1 for d in range(depth))
    off_cdf = np.ones((depth, kmax + 1))
    jtype = np.full((depth, kmax + 1), -1, dtype=np.int64)
    ja = np.zeros((depth, kmax + 1), dtype=np.int64)
    jb = np.zeros((depth, kmax + 1), dtype=np.int64)
    step_max = np.zeros(depth, dtype=np.int64)
    for d in range(depth):
        p = branching.pmf(m + d)
        off_cdf[d, : p.size] = _cdf(p)
        best = None
        for k in np.nonzero(p > 0)[0]:
            k = int(k)
            joint = displacement.joint(m + d, k)
            if isinstance(joint, Independent):
                jtype[d, k], ja[d, k] = _INDEPENDENT, pid(joint.marginal)
            elif isinstance(joint, CommonShift):
                jtype[d, k], ja[d, k], jb[d, k] = _COMMON_SHIFT, pid(joint.shift), pid(joint.noise)
            elif isinstance(joint, ProductMixture):
                jtype[d, k], ja[d, k] = _PRODUCT, len(mixtures)
                mixtures.append(joint)
            else:
                raise TypeError(f"no compiled sampler for {type(joint).__name__}")
            mu = joint.max_units(k)
            best = mu if best is None else max(best, mu)
        step_max[d] = best
    suffix = np.zeros(depth + 1, dtype=np.int64)
    suffix[:depth] = np.cumsum(step_max[::-1])[::-1]

    mix_start, mix_ncomp, mix_cdf, mix_ids_start, mix_ids = [], [], [], [], []
    for mx in mixtures:
        mix_start.append(len(mix_cdf))
        mix_ncomp.append(len(mx.components))
        mix_cdf.extend(_cdf(np.array([w for w, _ in mx.components])))
        mix_ids_start.append(len(mix_ids))
        for _, ms in mx.components:
            mix_ids.extend(pid(g) for g in ms)

    starts = np.cumsum([0] + [p.weights.size for p in pool])[:-1]
    return _Tables(
        off_cdf=off_cdf,
        jtype=jtype,
        ja=ja,
        jb=jb,
        pool_lo=np.array([p.lo for p in pool], dtype=np.int64),
        pool_start=np.asarray(starts, dtype=np.int64),
        pool_len=np.array([p.weights.size for p in pool], dtype=np.int64),
        pool_cdf=np.concatenate([_cdf(p.weights) for p in pool]),
        mix_start=np.array(mix_start, dtype=np.int64),
        mix_ncomp=np.array(mix_ncomp, dtype=np.int64),
        mix_cdf=np.array(mix_cdf, dtype=float),
        mix_ids_start=np.array(mix_ids_start, dtype=np.int64),
        mix_ids=np.array(mix_ids, dtype=np.int64),
        suffix_max=suffix,
    )


# ---------------------------------------------------------------------------
# compiled kernel
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _draw(cdf, start, length):
    i = np.searchsorted(cdf[start : start + length], np.random.random(), side="right")
    return min(i, length - 1)


@numba.njit(cache=True)
def _draw_pmf(pid, pool_lo, pool_start, pool_len, pool_cdf):
    return pool_lo[pid] + _draw(pool_cdf, pool_start[pid], pool_len[pid])


@numba.njit(cache=True)
def _max_one(seed, node_cap, off_cdf, jtype, ja, jb, pool_lo, pool_start, pool_len, pool_cdf,
             mix_start, mix_ncomp, mix_cdf, mix_ids_start, mix_ids, suffix_max):
    """Max leaf position in grid units; returns (max, nodes) with nodes = -1 on cap overflow."""
    np.random.seed(seed)
    depth_total = off_cdf.shape[0]
    kmax = off_cdf.shape[1] - 1
    cap = depth_total * kmax + 2
    st_depth = np.empty(cap, dtype=np.int64)
    st_pos = np.empty(cap, dtype=np.int64)
    kids = np.empty(kmax + 1, dtype=np.int64)
    top = 0
    st_depth[0] = 0
    st_pos[0] = 0
    top = 1
    best = np.iinfo(np.int64).min
    nodes = 0
    while top > 0:
        top -= 1
        d = st_depth[top]
        pos = st_pos[top]
        nodes += 1
        if nodes > node_cap:
            return best, -1
        if d == depth_total:
            if pos > best:
                best = pos
            continue
        if pos + suffix_max[d] <= best:
            continue
        k = np.searchsorted(off_cdf[d], np.random.random(), side="right")
        if k > kmax:
            k = kmax
        t = jtype[d, k]
        if t == 0:
            for i in range(k):
                kids[i] = _draw_pmf(ja[d, k], pool_lo, pool_start, pool_len, pool_cdf)
        elif t == 1:
            y = _draw_pmf(ja[d, k], pool_lo, pool_start, pool_len, pool_cdf)
            for i in range(k):
                kids[i] = y + _draw_pmf(jb[d, k], pool_lo, pool_start, pool_len, pool_cdf)
        else:
            mid = ja[d, k]
            c = _draw(mix_cdf, mix_start[mid], mix_ncomp[mid])
            base = mix_ids_start[mid] + c * k
            for i in range(k):
                kids[i] = _draw_pmf(mix_ids[base + i], pool_lo, pool_start, pool_len, pool_cdf)
        # ascending insertion sort, so the largest child is popped first
        for i in range(1, k):
            v = kids[i]
            j = i - 1
            while j >= 0 and kids[j] > v:
                kids[j + 1] = kids[j]
                j -= 1
            kids[j + 1] = v
        for i in range(k):
            st_depth[top] = d + 1
            st_pos[top] = pos + kids[i]
            top += 1
    return best, nodes


@numba.njit(cache=True, parallel=True)
def _max_many(seeds, node_cap, off_cdf, jtype, ja, jb, pool_lo, pool_start, pool_len, pool_cdf,
              mix_start, mix_ncomp, mix_cdf, mix_ids_start, mix_ids, suffix_max):
    R = seeds.size
    out = np.empty(R, dtype=np.int64)
    nodes = np.empty(R, dtype=np.int64)
    for r in numba.prange(R):
        out[r], nodes[r] = _max_one(seeds[r], node_cap, off_cdf, jtype, ja, jb, pool_lo, pool_start,
                                    pool_len, pool_cdf, mix_start, mix_ncomp, mix_cdf, mix_ids_start,
                                    mix_ids, suffix_max)
    return out, nodes


def _table_args(t: _Tables):
    return (t.off_cdf, t.jtype, t.ja, t.jb, t.pool_lo, t.pool_start, t.pool_len, t.pool_cdf,
            t.mix_start, t.mix_ncomp, t.mix_cdf, t.mix_ids_start, t.mix_ids, t.suffix_max)


# ---------------------------------------------------------------------------
# Monte Carlo joints: level-order fallback in numpy
# ---------------------------------------------------------------------------


def _max_generic(branching, displacement, m, n, seed, node_cap):
    rng = np.random.default_rng(seed)
    h = displacement.grid.h
    pos = np.zeros(1)
    nodes = 1
    for d in range(n - m):
        t = m + d
        p = branching.pmf(t)
        ks = rng.choice(p.size, size=pos.size, p=p)
        children = []
        for k in np.unique(ks):
            parents = pos[ks == k]
            joint = displacement.joint(t, int(k))
            if isinstance(joint, MonteCarlo):
                X = joint.sample(rng, t, int(k), parents.size)
            else:
                X = _sample_structured(joint, rng, int(k), parents.size) * h
            children.append((parents[:, None] + X).ravel())
        pos = np.concatenate(children)
        nodes += pos.size
        if nodes > node_cap:
            raise PopulationCapExceeded(f"more than {node_cap} nodes by generation {t + 1}")
    return float(pos.max())


def _sample_structured(joint, rng, k, size):
    def draw(g, shape):
        return g.lo + rng.choice(g.weights.size, size=shape, p=g.weights)

    if isinstance(joint, Independent):
        return draw(joint.marginal, (size, k))
    if isinstance(joint, CommonShift):
        return draw(joint.shift, (size, 1)) + draw(joint.noise, (size, k))
    ws = np.array([w for w, _ in joint.components])
    comp = rng.choice(ws.size, size=size, p=ws / ws.sum())
    out = np.empty((size, k), dtype=np.int64)
    for c, (_, ms) in enumerate(joint.components):
        rows = np.nonzero(comp == c)[0]
        for i, g in enumerate(ms):
            out[rows, i] = draw(g, rows.size)
    return out


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def set_threads(threads: int | None = None):
    """Cap compiled parallelism at ``threads`` (or ``$GBRW_THREADS``)."""
    if threads is None:
        env = os.environ.get("GBRW_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _uses_generic(displacement: DisplacementLaw) -> bool:
    return "monte_carlo_generic" in displacement.families


def _replicates(branching, displacement, m, n, seeds, node_cap) -> np.ndarray:
    if m > n:
        raise ValueError(f"start generation m={m} exceeds horizon n={n}")
    if m == n:
        return np.zeros(len(seeds))
    if _uses_generic(displacement):
        return np.array([_max_generic(branching, displacement, m, n, s, node_cap) for s in seeds])
    t = _build_tables(branching, displacement, m, n)
    best, nodes = _max_many(np.asarray(seeds, dtype=np.int64), int(node_cap), *_table_args(t))
    if np.any(nodes < 0):
        r = int(np.argmax(nodes < 0))
        raise PopulationCapExceeded(f"replicate {r} visited more than {node_cap} nodes")
    return best * displacement.grid.h


def sample_max(branching: BranchingLaw, displacement: DisplacementLaw, m: int, n: int, seed: int, node_cap: int = DEFAULT_NODE_CAP) -> float:
    """One draw of the maximal displacement at generation n of a walk started at generation m."""
    return float(_replicates(branching, displacement, m, n, [replicate_seed(seed, 0)], node_cap)[0])


@dataclass(frozen=True, eq=False)
class EmpiricalCDF:
    samples: np.ndarray
    seed: int
    n: int
    m: int = 0

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        if s.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def R(self) -> int:
        return self.samples.size

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.R

    def left_limit(self, x):
        return np.searchsorted(self.samples, x, side="left") / self.R

    def quantile(self, p: float) -> float:
        """Lower quantile: order statistic ``ceil(p R)`` (at least the first)."""
        j = max(1, math.ceil(p * self.R - 1e-12))
        return float(self.samples[min(j, self.R) - 1])


def empirical_cdf(
    branching: BranchingLaw,
    displacement: DisplacementLaw,
    m: int,
    n: int,
    R: int,
    seed: int,
    node_cap: int = DEFAULT_NODE_CAP,
    threads: int | None = None,
) -> EmpiricalCDF:
    if R < 1:
        raise ValueError("R must be at least 1")
    set_threads(threads)
    seeds = replicate_seeds(seed, np.arange(R))
    return EmpiricalCDF(_replicates(branching, displacement, m, n, seeds, node_cap), seed, n, m)


def median(cdf) -> float:
    """Smallest x with ``F(x) >= 1/2``."""
    if isinstance(cdf, EmpiricalCDF):
        return cdf.quantile(0.5)
    if isinstance(cdf, TailCurve):
        ok = np.nonzero(1.0 - cdf.values >= 0.5)[0]
        return float(cdf.grid.points[ok[0]]) if ok.size else math.inf
    raise TypeError("median needs an EmpiricalCDF or a TailCurve")


def sup_distance(ecdf: EmpiricalCDF, curve: TailCurve) -> float:
    """``sup_x |F_R(x) - (1 - u(x))|`` over grid points, sample points and their left limits."""
    grid = curve.grid
    pts = np.union1d(grid.points, ecdf.samples)
    F = 1.0 - curve(pts)
    d = np.abs(ecdf(pts) - F)
    idx = grid.floor_index(pts)
    on_grid = np.isclose(pts, grid.points[np.clip(idx, 0, grid.size - 1)], rtol=0, atol=1e-9)
    F_left = 1.0 - np.where(on_grid, curve.at_index(idx - 1), curve.at_index(idx))
    d_left = np.abs(ecdf.left_limit(pts) - F_left)
    return float(max(d.max(), d_left.max()))


def dkw_epsilon(R: int, alpha: float = 0.01) -> float:
    """Half-width of the two-sided DKW band at confidence ``1 - alpha``."""
    return math.sqrt(math.log(2 / alpha) / (2 * R))


@dataclass(frozen=True)
class TightnessRow:
    n: int
    median: float
    q_lo: float
    q_hi: float
    width: float
    reps: int
    seed: int


@dataclass
class TightnessTable:
    """Quantiles of ``M_n - Med(M_n)``; ``q_lo``/``q_hi`` are recentered at the median."""

    rows: list
    delta: float

    @property
    def widths(self) -> dict:
        return {r.n: r.width for r in self.rows}

    def csv_rows(self):
        return [(r.n, r.median, r.q_lo, r.q_hi, r.width, r.reps, r.seed) for r in self.rows]


def tightness_report(
    branching: BranchingLaw,
    displacement: DisplacementLaw,
    horizons,
    R: int,
    delta: float,
    seed: int,
    node_cap: int = DEFAULT_NODE_CAP,
    threads: int | None = None,
) -> TightnessTable:
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    rows = []
    for n in horizons:
        e = empirical_cdf(branching, displacement, 0, int(n), R, seed, node_cap, threads)
        med = median(e)
        lo = e.quantile(delta) - med
        hi = e.quantile(1 - delta) - med
        rows.append(TightnessRow(int(n), med, lo, hi, hi - lo, R, seed))
    return TightnessTable(rows, delta)
