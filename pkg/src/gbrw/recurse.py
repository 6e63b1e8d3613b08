"""Tail-curve recursions on the shared grid.

``F_n^m(x) = P(max displacement from generation m to n > x)`` satisfies a
backward recursion in m started from the indicator ``1{x < 0}`` at m = n.
Besides the exact map, two one-step maps bracket it: the lower map
``sum_k p_k g_k * Q1k(u)`` and the upper map ``sum_k p_k g_k * (k u)``.
Each chain in :func:`run` iterates its own map from the indicator, so by
monotonicity of all three maps ``lower <= exact <= upper`` at every m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GridOverflow, MissingMode, NotScheduled
from .grid import Grid, TailCurve, convolve_values
from .laws import BranchingLaw, CommonShift, DisplacementLaw, Independent, MonteCarlo, ProductMixture
from .report import RunReport

__all__ = [
    "TailCurve",
    "SandwichRun",
    "base_tail",
    "q_transform",
    "q1",
    "step_exact",
    "step_lower",
    "step_upper",
    "run",
    "check_sandwich",
    "pointwise_bounds_check",
]

EDGE_TOL = 1e-9
SANDWICH_TOL = 1e-9
MODES = ("lower", "exact", "upper")


def q1(k, u):
    """``1 - (1-u)^k`` evaluated as ``-expm1(k log1p(-u))`` (accurate for small u)."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(k * np.log1p(-u))


def _pmf_terms(k_or_pmf):
    p = np.asarray(k_or_pmf, dtype=float)
    ks = np.nonzero(p > 0)[0]
    return ks, p[ks]


def q_transform(kind: str, k_or_pmf, u):
    """Evaluate one of the Q maps at ``u`` in [0, 1].

    ``Q1k`` = 1-(1-u)^k, ``Q2k`` = ku (not clamped); ``Qm`` and ``Qm1`` are the
    pmf averages of Q1k, ``Qm2`` the pmf average of Q2k.  For the ``Qm*``
    kinds ``k_or_pmf`` is a pmf indexed by k.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise DomainError("u must lie in [0, 1]")
    if kind == "Q1k":
        return q1(int(k_or_pmf), u)
    if kind == "Q2k":
        return int(k_or_pmf) * u
    ks, ps = _pmf_terms(k_or_pmf)
    if kind in ("Qm", "Qm1"):
        return sum(p * q1(k, u) for k, p in zip(ks, ps))
    if kind == "Qm2":
        return sum(p * k for k, p in zip(ks, ps)) * u
    raise ValueError(f"unknown Q kind {kind!r}")


def base_tail(n: int = 0, grid: Grid | None = None) -> TailCurve:
    """The indicator ``1{x < 0}``, the tail of the maximum after zero steps."""
    grid = grid or Grid()
    return TailCurve(grid, (grid.points < -grid.h / 2).astype(float), meta={"m": n, "n": n})


def _smooth(g, values, left=1.0, clip=True):
    """``(g * u)(x) = sum_y g(y) u(x - y)``; ``u`` is ``left`` below the grid and 0 above it."""
    out = convolve_values(g, values, left, 0.0)
    return np.clip(out, 0.0, 1.0) if clip else out


def _finish(raw: np.ndarray, grid: Grid, *, left=1.0, cap_at_one=False, check_edges=True, **attrs) -> TailCurve:
    """Clamp, re-monotonize and check that no mass reached the grid edges.

    ``left`` is the image of the input's left extension under the step; the
    leftmost value must be within ``EDGE_TOL`` of it.
    """
    v = np.minimum(raw, 1.0) if cap_at_one else raw
    left = min(float(left), 1.0)
    fixed = np.maximum.accumulate(np.clip(v, 0.0, 1.0)[::-1])[::-1]
    correction = float(np.max(np.abs(fixed - v))) if v.size else 0.0
    if check_edges and (fixed[0] < left - EDGE_TOL or fixed[-1] > EDGE_TOL):
        raise GridOverflow(
            f"tail mass leaked past the grid: u(x_min)={fixed[0]:.3g}, u(x_max)={fixed[-1]:.3g}"
        )
    return TailCurve(grid, fixed, correction=correction, left=left, **attrs)


def _branching_terms(branching: BranchingLaw, m: int):
    ks, ps = _pmf_terms(branching.pmf(m))
    return [(int(k), float(p)) for k, p in zip(ks, ps)]


def _mc_exact(joint: MonteCarlo, m, k, u: TailCurve, budget: int, seed: int):
    """Monte Carlo estimate of ``1 - E prod_i (1 - u(x - X_i))`` and its standard error."""
    grid = u.grid
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m, k)))
    X = joint.sample(rng, m, k, budget)
    # u(x_j - X) = values[j + floor(-X/h)] for grid-aligned x_j
    offsets = np.floor(-X / grid.h + 1e-9).astype(np.int64)
    offsets.sort(axis=1)
    uniq, counts = np.unique(offsets, axis=0, return_inverse=False, return_counts=True)
    base = np.arange(grid.size)
    s1 = np.zeros(grid.size)
    s2 = np.zeros(grid.size)
    for start in range(0, uniq.shape[0], 256):
        chunk = uniq[start : start + 256]
        c = counts[start : start + 256][:, None]
        prod = np.ones((chunk.shape[0], grid.size))
        for i in range(k):
            prod *= 1.0 - u.at_index(base[None, :] + chunk[:, i : i + 1])
        s1 += (c * prod).sum(axis=0)
        s2 += (c * prod * prod).sum(axis=0)
    mean = s1 / budget
    var = np.maximum(s2 / budget - mean * mean, 0.0)
    return 1.0 - mean, np.sqrt(var / budget)


def _exact_term(joint, k, u: TailCurve, m, mc_budget, seed):
    """``P(max_i (X_i + M^{(i)}) > x)`` for one k; returns (values, stderr or None)."""
    vals, left = u.values, u.left
    if isinstance(joint, Independent):
        return q1(k, _smooth(joint.marginal, vals, left)), None
    if isinstance(joint, CommonShift):
        inner = q1(k, _smooth(joint.noise, vals, left))
        return _smooth(joint.shift, inner, q1(k, left)), None
    if isinstance(joint, ProductMixture):
        out = np.zeros(vals.size)
        for w, ms in joint.components:
            with np.errstate(divide="ignore"):
                logs = sum(np.log1p(-_smooth(g, vals, left)) for g in ms)
            out += w * -np.expm1(logs)
        return out, None
    if isinstance(joint, MonteCarlo):
        return _mc_exact(joint, m, k, u, mc_budget, seed)
    raise NotScheduled(f"unsupported joint law {type(joint).__name__}")


def step_exact(m: int, u: TailCurve, branching: BranchingLaw, displacement: DisplacementLaw, mc_budget: int = 20000, seed: int = 0) -> TailCurve:
    """One exact backward step ``F^{m+1} -> F^m``.

    Structured families are evaluated by grid convolution; Monte Carlo
    joints by ``mc_budget`` sampled displacement vectors per k with a sub-seed
    derived from ``(seed, m, k)``.  Those curves are flagged approximate and
    carry the standard error.
    """
    total = np.zeros(u.grid.size)
    var = None
    terms = _branching_terms(branching, m)
    for k, p in terms:
        vals, se = _exact_term(displacement.joint(m, k), k, u, m, mc_budget, seed)
        total += p * vals
        if se is not None:
            var = (0.0 if var is None else var) + (p * se) ** 2
    stderr = None if var is None else np.sqrt(var)
    left = sum(p * q1(k, u.left) for k, p in terms)
    return _finish(total, u.grid, left=left, approximate=stderr is not None or u.approximate, stderr=stderr, meta={"m": m})


def _marginals(branching, displacement, m):
    terms = _branching_terms(branching, m)
    return [(k, p, displacement.joint(m, k).marginal_for(k)) for k, p in terms]


def _bound_step(m, u, branching, displacement, which):
    terms = _marginals(branching, displacement, m)
    vals = u.values

    lower = which == "lower"

    def q(k, v):
        return q1(k, v) if lower else k * v

    generic = np.zeros(vals.size)
    for k, p, g in terms:
        generic += p * _smooth(g, q(k, vals), left=q(k, u.left), clip=lower)
    meta = {"m": m}
    g0 = terms[0][2]
    if all(g.same_as(g0) for _, _, g in terms[1:]):
        # identical marginals: g * Q_{m,(i)}(u)
        mixed = sum(p * q(k, vals) for k, p, _ in terms)
        factored = _smooth(g0, mixed, left=sum(p * q(k, u.left) for k, p, _ in terms), clip=lower)
        meta["factored_gap"] = float(np.max(np.abs(factored - generic)))
        generic = factored
    left = sum(p * q(k, u.left) for k, p, _ in terms)
    return _finish(generic, u.grid, left=left, cap_at_one=which == "upper", meta=meta)


def step_lower(m: int, u: TailCurve, branching: BranchingLaw, displacement: DisplacementLaw) -> TailCurve:
    """``sum_k p_{m,k} g_{m,k} * Q1k(u)``."""
    return _bound_step(m, u, branching, displacement, "lower")


def step_upper(m: int, u: TailCurve, branching: BranchingLaw, displacement: DisplacementLaw) -> TailCurve:
    """``sum_k p_{m,k} g_{m,k} * (k u)``, clamped at 1."""
    return _bound_step(m, u, branching, displacement, "upper")


@dataclass
class SandwichRun:
    """Curves ``curves[mode][m]`` for m = 0..n (index m)."""

    n: int
    grid: Grid
    modes: tuple
    curves: dict
    branching: BranchingLaw
    displacement: DisplacementLaw
    corrections: dict = field(default_factory=dict)
    approximate: bool = False
    error_budget: float = 0.0

    def curve(self, mode: str, m: int) -> TailCurve:
        if mode not in self.curves:
            raise MissingMode(f"run has no {mode!r} curves")
        return self.curves[mode][m]

    def require(self, *modes):
        for mode in modes:
            if mode not in self.curves:
                raise MissingMode(f"run has no {mode!r} curves")

    def table(self):
        """Rows ``(m, x, lower, exact, upper)``; absent modes are None."""
        pts = self.grid.points
        rows = []
        for m in range(self.n, -1, -1):
            cols = [self.curves[mode][m].values if mode in self.curves else None for mode in MODES]
            for i, x in enumerate(pts):
                rows.append((m, x, *[None if c is None else c[i] for c in cols]))
        return rows


def run(
    branching: BranchingLaw,
    displacement: DisplacementLaw,
    n: int,
    modes=MODES,
    mc_budget: int = 20000,
    seed: int = 0,
) -> SandwichRun:
    """Iterate the requested chains from ``base_tail`` at m = n down to m = 0."""
    modes = tuple(mode for mode in MODES if mode in set(modes))
    if not modes:
        raise MissingMode("no recursion mode requested")
    grid = displacement.grid
    base = base_tail(n, grid)
    curves = {mode: [None] * (n + 1) for mode in modes}
    for mode in modes:
        curves[mode][n] = base
    corrections = {mode: 0.0 for mode in modes}
    for m in range(n - 1, -1, -1):
        for mode in modes:
            u = curves[mode][m + 1]
            if mode == "exact":
                v = step_exact(m, u, branching, displacement, mc_budget, seed)
            elif mode == "lower":
                v = step_lower(m, u, branching, displacement)
            else:
                v = step_upper(m, u, branching, displacement)
            v.meta.update(m=m, n=n)
            corrections[mode] = max(corrections[mode], v.correction)
            curves[mode][m] = v
    approx = any(c.approximate for cs in curves.values() for c in cs)
    return SandwichRun(
        n=n,
        grid=grid,
        modes=modes,
        curves=curves,
        branching=branching,
        displacement=displacement,
        corrections=corrections,
        approximate=approx,
        error_budget=branching.truncation_error * n,
    )


def _worst(diff: np.ndarray, m: int, grid: Grid, best):
    i = int(np.argmax(diff))
    if best is None or diff[i] > best[0]:
        return (float(diff[i]), {"m": m, "x": float(grid.points[i])})
    return best


def check_sandwich(data: SandwichRun, tol: float = SANDWICH_TOL) -> RunReport:
    """Largest violations of ``lower <= exact`` and ``exact <= upper``.

    Approximate (Monte Carlo) exact curves are judged against a band of
    three standard errors instead of ``tol``.
    """
    data.require("exact")
    rep = RunReport("sandwich")
    grid = data.grid
    for lo_mode, hi_mode, name in (("lower", "exact", "lower<=exact"), ("exact", "upper", "exact<=upper")):
        if lo_mode not in data.curves or hi_mode not in data.curves:
            continue
        worst = None
        for m in range(data.n + 1):
            e = data.curves["exact"][m]
            slack = tol + (3 * e.stderr if e.stderr is not None else 0.0) + data.error_budget
            diff = data.curves[lo_mode][m].values - data.curves[hi_mode][m].values - (slack - tol)
            worst = _worst(diff, m, grid, worst)
        rep.add(name, worst[0] <= tol, {**worst[1], "violation": worst[0]}, margin=tol - worst[0])
    rep.info.update(
        n=data.n,
        tol=tol,
        approximate=data.approximate,
        corrections=data.corrections,
        factored_gap=max((c.meta.get("factored_gap", 0.0) for mode in ("lower", "upper") if mode in data.curves for c in data.curves[mode]), default=0.0),
    )
    return rep


def pointwise_bounds_check(data: SandwichRun, B: float, eta1: float, tol: float = 1e-9) -> RunReport:
    """Check ``Q_m(F^{m+1})(x+B) - eta1 <= F^m(x) <= Q_m(F^{m+1})(x-B) + eta1``.

    Here ``Q_m(u) = sum_k p_{m,k} (1 - (1-u)^k)`` and both sides are taken on
    the exact curves at every grid x and every m < n.
    """
    data.require("exact")
    grid = data.grid
    b = grid.units(B)
    rep = RunReport("pointwise bounds")
    lo_worst = hi_worst = None
    idx = np.arange(grid.size)
    for m in range(data.n):
        u = data.curves["exact"][m + 1]
        F = data.curves["exact"][m].values
        pmf = data.branching.pmf(m)
        q_plus = q_transform("Qm", pmf, u.at_index(idx + b))
        q_minus = q_transform("Qm", pmf, u.at_index(idx - b))
        lo_worst = _worst(q_plus - eta1 - F, m, grid, lo_worst)
        hi_worst = _worst(F - q_minus - eta1, m, grid, hi_worst)
    if lo_worst is None:
        rep.add("lower", True, {"note": "no steps"}, margin=float("inf"))
        rep.add("upper", True, {"note": "no steps"}, margin=float("inf"))
    else:
        rep.add("lower", -lo_worst[0] >= -tol, {**lo_worst[1], "excess": lo_worst[0]}, margin=-lo_worst[0])
        rep.add("upper", -hi_worst[0] >= -tol, {**hi_worst[1], "excess": hi_worst[0]}, margin=-hi_worst[0])
    rep.info.update(B=B, eta1=eta1, n=data.n, tol=tol)
    return rep
