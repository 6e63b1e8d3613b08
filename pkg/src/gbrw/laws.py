"""Branching and displacement laws, and the assumption checkers.

A law is a time schedule of per-generation rules.  Schedules are
``constant`` (one rule for every n), ``periodic`` (rules cycled) or
``explicit`` (rule n for n < len, nothing beyond).  Assumption checks run
over the representative generations of a schedule: the whole period for
periodic schedules and ``range(horizon)`` for explicit ones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import GridTooNarrow, KTooLarge, NonProbability, NotScheduled, PreconditionError, ZeroOffspring
from .grid import PROB_TOL, Grid, GridPmf, convolve_values, mixture
from .report import AssumptionReport

# declared_m0 = inf_n mean - M0_MARGIN, declared_m1 = sup_n second moment + M1_MARGIN
M0_MARGIN = 1e-6
M1_MARGIN = 1e-6
TRUNCATION_TAIL = 1e-10
MAX_SYMMETRIZE_K = 4
EDGE_MASS_TOL = 1e-12


# ---------------------------------------------------------------------------
# time schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    kind: str
    entries: tuple

    def __post_init__(self):
        if self.kind not in ("constant", "periodic", "explicit"):
            raise ValueError(f"unknown schedule type {self.kind!r}")
        if not self.entries:
            raise ValueError("schedule has no entries")
        if self.kind == "constant" and len(self.entries) != 1:
            raise ValueError("a constant schedule holds exactly one entry")

    def at(self, n: int):
        if n < 0:
            raise NotScheduled(f"generation {n} < 0")
        if self.kind == "constant":
            return self.entries[0]
        if self.kind == "periodic":
            return self.entries[n % len(self.entries)]
        if n >= len(self.entries):
            raise NotScheduled(f"generation {n} is beyond the explicit schedule ({len(self.entries)} entries)")
        return self.entries[n]

    @property
    def period(self) -> int | None:
        if self.kind == "constant":
            return 1
        if self.kind == "periodic":
            return len(self.entries)
        return None

    def generations(self, horizon: int | None = None) -> range:
        return representative_generations([self], horizon)


def representative_generations(schedules: Sequence[Schedule], horizon: int | None = None) -> range:
    """Generations a "for all n" check has to visit for these schedules."""
    explicit = [len(s.entries) for s in schedules if s.kind == "explicit"]
    if explicit:
        n = min(explicit)
        return range(n if horizon is None else min(n, horizon))
    period = 1
    for s in schedules:
        period = math.lcm(period, s.period)
    return range(period)


# ---------------------------------------------------------------------------
# branching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchingLaw:
    """Time-indexed offspring pmfs; ``pmf(n)[k] = p_{n,k}`` with ``p_{n,0} = 0``."""

    schedule: Schedule
    k_max: int | None
    declared_m0: float
    declared_m1: float | None
    truncation_error: float = 0.0
    inf_mean: float = float("nan")

    def pmf(self, n: int) -> np.ndarray:
        return self.schedule.at(n)

    def support(self, n: int) -> np.ndarray:
        return np.nonzero(self.pmf(n) > 0)[0]

    def mean(self, n: int) -> float:
        p = self.pmf(n)
        return float(np.dot(np.arange(p.size), p))

    def second_moment(self, n: int) -> float:
        p = self.pmf(n)
        k = np.arange(p.size)
        return float(np.dot(k * k, p))

    @property
    def bounded(self) -> bool:
        return self.k_max is not None

    def k0(self, horizon: int | None = None) -> int:
        """Largest offspring number with positive probability (at least 2)."""
        return max(2, max(int(self.support(n).max()) for n in self.schedule.generations(horizon)))


def _parse_pmf(desc) -> tuple[np.ndarray, bool, float]:
    """Return (pmf indexed by k, bounded, truncation error)."""
    if isinstance(desc, Mapping) and "dist" in desc:
        name = desc["dist"]
        if name == "geometric":
            p = float(desc["p"])
            if not 0 < p <= 1:
                raise NonProbability("geometric success probability must lie in (0, 1]")
            tail = lambda k: (1 - p) ** k  # noqa: E731  P(K > k)
            mass = lambda k: (1 - p) ** (k - 1) * p  # noqa: E731
        elif name == "poisson1":
            from scipy import stats

            lam = float(desc["lam"])
            tail = lambda k: float(stats.poisson.sf(k - 1, lam))  # noqa: E731
            mass = lambda k: float(stats.poisson.pmf(k - 1, lam))  # noqa: E731
        else:
            raise NonProbability(f"unknown offspring distribution {name!r}")
        K = 1
        while tail(K) >= TRUNCATION_TAIL:
            K += 1
            if K > 100_000:
                raise NonProbability("offspring tail does not decay")
        pmf = np.zeros(K + 1)
        for k in range(1, K + 1):
            pmf[k] = mass(k)
        err = float(tail(K))
        return pmf / pmf.sum(), False, err
    if isinstance(desc, Mapping):
        items = {int(k): float(v) for k, v in desc.items()}
        if any(k < 0 for k in items):
            raise NonProbability("offspring numbers must be non-negative")
        pmf = np.zeros(max(items) + 1)
        for k, v in items.items():
            pmf[k] += v
    else:
        pmf = np.asarray(desc, dtype=float).copy()
    if pmf.ndim != 1 or pmf.size == 0:
        raise NonProbability("offspring pmf must be a non-empty vector")
    if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
        raise NonProbability("offspring probabilities must be finite and non-negative")
    s = float(pmf.sum())
    if abs(s - 1.0) > PROB_TOL:
        raise NonProbability(f"offspring probabilities sum to {s!r}, not 1")
    if pmf[0] > 0:
        raise ZeroOffspring(f"p_0 = {pmf[0]} > 0: every particle must have a child")
    nz = np.nonzero(pmf)[0]
    pmf = pmf[: nz[-1] + 1]
    pmf.setflags(write=False)
    return pmf, True, 0.0


def make_branching_schedule(desc) -> BranchingLaw:
    """Build a :class:`BranchingLaw` from a schedule descriptor.

    ``desc`` is ``{"type": "constant"|"periodic"|"explicit", "pmfs": [...]}``.
    Each pmf is a mapping ``{k: p_k}``, a list indexed by k (entry 0 must be
    0), or ``{"dist": "geometric", "p": ...}`` / ``{"dist": "poisson1",
    "lam": ...}`` for unbounded offspring, truncated at the first K with tail
    mass below 1e-10.
    """
    if isinstance(desc, Mapping) and "pmfs" in desc:
        kind = desc.get("type", "constant")
        raw = list(desc["pmfs"])
    else:
        kind, raw = "constant", [desc]
    parsed = [_parse_pmf(p) for p in raw]
    pmfs = []
    for p, _, _ in parsed:
        p = np.array(p)
        p.setflags(write=False)
        pmfs.append(p)
    sched = Schedule(kind, tuple(pmfs))
    bounded = all(b for _, b, _ in parsed)
    trunc = max(e for _, _, e in parsed)
    means = [float(np.dot(np.arange(p.size), p)) for p in pmfs]
    seconds = [float(np.dot(np.arange(p.size) ** 2, p)) for p in pmfs]
    inf_mean = min(means)
    return BranchingLaw(
        schedule=sched,
        k_max=max(p.size - 1 for p in pmfs) if bounded else None,
        declared_m0=inf_mean - M0_MARGIN,
        declared_m1=max(seconds) + M1_MARGIN,
        truncation_error=trunc,
        inf_mean=inf_mean,
    )


def constant_branching(pmf) -> BranchingLaw:
    return make_branching_schedule({"type": "constant", "pmfs": [pmf]})


def check_branching_assumptions(law: BranchingLaw, variant: str = "bounded", horizon: int | None = None) -> AssumptionReport:
    """B1/B2 (``variant="bounded"``) or B1' (``variant="identical_marginal"``)."""
    gens = list(law.schedule.generations(horizon))
    means = np.array([law.mean(n) for n in gens])
    seconds = np.array([law.second_moment(n) for n in gens])
    i_min = int(np.argmin(means))
    inf_mean = float(means[i_min])
    m0 = inf_mean - M0_MARGIN
    rep = AssumptionReport(f"branching assumptions ({variant})")
    rep.info.update(
        generations=gens,
        inf_mean=inf_mean,
        sup_second_moment=float(seconds.max()),
        m0_margin=M0_MARGIN,
        truncation_error=law.truncation_error,
    )
    mean_ok = m0 > 1.0
    mean_witness = None if mean_ok else {"n": gens[i_min], "mean": inf_mean}
    if variant == "bounded":
        k0 = law.k0(horizon)
        if law.bounded:
            rep.add("B1", True, {"k0": k0})
        else:
            rep.add("B1", False, {"k_max": "unbounded", "truncated_at": k0, "truncation_error": law.truncation_error})
        rep.add("B2", mean_ok, mean_witness or {"m0": m0}, margin=inf_mean - 1.0)
        rep.info.update(k0=k0, m0=m0)
    elif variant == "identical_marginal":
        m1 = float(seconds.max()) + M1_MARGIN
        rep.add("B1'", mean_ok, mean_witness or {"m0": m0, "m1": m1}, margin=inf_mean - 1.0)
        rep.info.update(m0=m0, m1=m1, k0=law.k0(horizon))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return rep


# ---------------------------------------------------------------------------
# joint displacement laws
# ---------------------------------------------------------------------------


def _pmf_key(p: GridPmf):
    return (p.lo, p.weights.tobytes())


@dataclass(frozen=True)
class Independent:
    """Siblings displaced by i.i.d. copies of ``marginal``."""

    marginal: GridPmf
    family = "independent"
    k = None

    def marginal_for(self, k):
        return self.marginal

    def max_units(self, k):
        return self.marginal.hi

    def shifted(self, units):
        return Independent(self.marginal.shifted(units))

    def pmfs(self):
        return [self.marginal]


@dataclass(frozen=True)
class CommonShift:
    """``X_i = Y + Z_i``: one shared draw ``Y ~ shift`` plus i.i.d. ``Z_i ~ noise``."""

    shift: GridPmf
    noise: GridPmf
    family = "common_shift"
    k = None

    def marginal_for(self, k):
        return self.shift.convolve(self.noise)

    def max_units(self, k):
        return self.shift.hi + self.noise.hi

    def shifted(self, units):
        return CommonShift(self.shift.shifted(units), self.noise)

    def pmfs(self):
        return [self.shift, self.noise]


@dataclass(frozen=True)
class ProductMixture:
    """Mixture of product laws: weight ``w_c`` on ``H_c1 x ... x H_ck``.

    A single component with distinct factors is the non-exchangeable input of
    :func:`symmetrize`; the permutation average is again of this form.
    """

    components: tuple

    family = "product"

    def __post_init__(self):
        comps = tuple((float(w), tuple(ms)) for w, ms in self.components)
        object.__setattr__(self, "components", comps)
        ks = {len(ms) for _, ms in comps}
        if len(ks) != 1:
            raise ValueError("all mixture components must have the same dimension")
        s = sum(w for w, _ in comps)
        if abs(s - 1) > PROB_TOL or any(w < 0 for w, _ in comps):
            raise NonProbability("mixture weights must be a probability vector")

    @property
    def k(self) -> int:
        return len(self.components[0][1])

    def coordinate_marginal(self, i: int) -> GridPmf:
        return mixture([ms[i] for _, ms in self.components], [w for w, _ in self.components])

    def marginal_for(self, k=None):
        """Average of the coordinate marginals, i.e. the marginal of the symmetrized law."""
        pmfs, ws = [], []
        for w, ms in self.components:
            for m in ms:
                pmfs.append(m)
                ws.append(w / self.k)
        return mixture(pmfs, ws)

    def max_units(self, k):
        return max(m.hi for _, ms in self.components for m in ms)

    def shifted(self, units):
        return ProductMixture(tuple((w, tuple(m.shifted(units) for m in ms)) for w, ms in self.components))

    def pmfs(self):
        return [m for _, ms in self.components for m in ms]

    def is_exchangeable(self) -> bool:
        table = {}
        for w, ms in self.components:
            key = tuple(_pmf_key(m) for m in ms)
            table[key] = table.get(key, 0.0) + w
        for key, w in table.items():
            for perm in itertools.permutations(key):
                if table.get(perm) != w:
                    return False
        return True


@dataclass(frozen=True)
class MonteCarlo:
    """Arbitrary joint law given by a sampler.

    ``sampler(rng, n, k, size)`` returns a ``(size, k)`` array of sibling
    displacements (reals, not necessarily grid aligned).  ``marginal`` is an
    optional grid pmf used by the bound recursions; ``max_step`` bounds the
    displacements when known.
    """

    sampler: Callable
    marginal: GridPmf | None = None
    max_step: float | None = None
    offset: float = 0.0
    family = "monte_carlo_generic"
    k = None

    def sample(self, rng, n, k, size):
        return np.asarray(self.sampler(rng, n, k, size), dtype=float).reshape(size, k) + self.offset

    def marginal_for(self, k):
        if self.marginal is None:
            raise NotScheduled("Monte Carlo joint law has no grid marginal")
        return self.marginal

    def max_units(self, k):
        return None

    def shifted(self, units):
        h = self.marginal.h if self.marginal is not None else None
        m = self.marginal.shifted(units) if self.marginal is not None else None
        if h is None:
            raise ValueError("cannot shift a Monte Carlo law without a grid marginal")
        return replace(self, marginal=m, offset=self.offset + units * h)

    def pmfs(self):
        return [self.marginal] if self.marginal is not None else []


@dataclass(frozen=True)
class JointRule:
    """Joint laws of one generation: ``per_k[k]`` overrides ``default``."""

    default: object | None = None
    per_k: Mapping[int, object] = field(default_factory=dict)

    def joint(self, k: int):
        if k in self.per_k:
            return self.per_k[k]
        if self.default is not None and getattr(self.default, "k", None) in (None, k):
            return self.default
        raise NotScheduled(f"no joint law for k={k}")

    def joints(self):
        out = [] if self.default is None else [(self.default.k, self.default)]
        out += sorted(self.per_k.items(), key=lambda t: t[0])
        return out

    def map(self, fn) -> "JointRule":
        return JointRule(None if self.default is None else fn(self.default), {k: fn(j) for k, j in self.per_k.items()})


@dataclass(frozen=True)
class DisplacementLaw:
    grid: Grid
    schedule: Schedule

    def rule(self, n: int) -> JointRule:
        return self.schedule.at(n)

    def joint(self, n: int, k: int):
        return self.rule(n).joint(k)

    @property
    def families(self) -> set:
        return {j.family for rule in self.schedule.entries for _, j in rule.joints()}

    @property
    def family(self) -> str:
        f = self.families
        return f.pop() if len(f) == 1 else "mixed"

    @property
    def identical_marginals(self) -> bool:
        """True when, for every n, the marginal does not depend on k."""
        for rule in self.schedule.entries:
            ms = []
            for _, j in rule.joints():
                try:
                    ms.append(j.marginal_for(None))
                except NotScheduled:
                    return False
            if any(not m.same_as(ms[0]) for m in ms[1:]):
                return False
        return True

    def shifted(self, x: float) -> "DisplacementLaw":
        """Law with every displacement increased by the grid-aligned ``x``."""
        units = self.grid.units(x)
        rules = tuple(r.map(lambda j: j.shifted(units)) for r in self.schedule.entries)
        return DisplacementLaw(self.grid, Schedule(self.schedule.kind, rules))

    def validate(self):
        for rule in self.schedule.entries:
            for _, j in rule.joints():
                for p in j.pmfs():
                    if p.h != self.grid.h:
                        raise ValueError("pmf grid step differs from the law's grid")
                    if p.lo < self.grid.lo or p.hi > self.grid.hi:
                        raise ValueError("pmf support extends beyond the grid")
        return self


def displacement_law(grid: Grid, joints, kind: str = "constant") -> DisplacementLaw:
    """Convenience constructor.

    ``joints`` is one joint (applied to every k), a mapping ``{k: joint}``,
    or, for non-constant schedules, a list of either.
    """

    def as_rule(j):
        if isinstance(j, JointRule):
            return j
        if isinstance(j, Mapping):
            return JointRule(None, dict(j))
        return JointRule(j)

    entries = [joints] if kind == "constant" else list(joints)
    return DisplacementLaw(grid, Schedule(kind, tuple(as_rule(j) for j in entries))).validate()


def marginal(law: DisplacementLaw, n: int, k: int) -> GridPmf:
    """The marginal ``g_{n,k}`` shared by every coordinate."""
    return law.joint(n, k).marginal_for(k)


def scheduled_pairs(displacement: DisplacementLaw, branching: BranchingLaw | None = None, horizon: int | None = None, k_cap: int | None = None):
    """(n, k, joint) triples an assumption has to hold for.

    With a branching law only pairs with ``p_{n,k} > 0`` are listed.  Without
    one, explicit ``per_k`` entries are listed, plus default joints for
    ``k = 1..k_cap`` (or ``k=None`` when ``k_cap`` is None).
    """
    scheds = [displacement.schedule] + ([branching.schedule] if branching is not None else [])
    out = []
    for n in representative_generations(scheds, horizon):
        rule = displacement.rule(n)
        if branching is not None:
            for k in branching.support(n):
                out.append((n, int(k), rule.joint(int(k))))
        else:
            for k, j in rule.joints():
                if k is None and k_cap is not None:
                    out.extend((n, kk, j) for kk in range(1, k_cap + 1) if kk not in rule.per_k)
                else:
                    out.append((n, k, j))
    return out


# ---------------------------------------------------------------------------
# assumption checkers
# ---------------------------------------------------------------------------


def check_marginal_assumptions(
    law: DisplacementLaw,
    eps0: float,
    a: float,
    M0: float,
    branching: BranchingLaw | None = None,
    horizon: int | None = None,
) -> AssumptionReport:
    """MT1 (find x0) and MT2 (exponential right-tail decay beyond x0).

    MT1 uses ``P(X >= x0) >= 1 - eps0``: the largest such grid x0 is
    reported together with the shift ``-x0`` that moves it to 0.  The law is
    not modified.  MT2 scans every grid ``x >= x0`` and grid ``M > M0``.
    """
    if not 0 < eps0 < 1:
        raise PreconditionError("eps0 must lie in (0, 1)")
    grid = law.grid
    rep = AssumptionReport("marginal assumptions")
    if branching is not None:
        m0 = branching.declared_m0
        bound = min(0.25 * math.log(m0), 1.0) if m0 > 1 else -math.inf
        rep.add("eps0_range", eps0 < bound, {"eps0": eps0, "bound": bound, "m0": m0}, margin=bound - eps0)

    marginals = []
    for n, k, joint in scheduled_pairs(law, branching, horizon):
        try:
            g = joint.marginal_for(k)
        except NotScheduled:
            rep.add("MT1", False, {"n": n, "k": k, "reason": "joint law has no grid marginal"})
            return rep
        if g.hi >= grid.hi and g.weights[-1] > EDGE_MASS_TOL:
            raise GridTooNarrow(f"marginal (n={n}, k={k}) puts mass {g.weights[-1]:.3g} on the grid edge x={grid.xmax}")
        marginals.append((n, k, g))

    # MT1
    x0_units = None
    per_pair = []
    for n, k, g in marginals:
        units = np.arange(g.lo, g.hi + 1)
        ok = units[g.at_least(units) >= 1 - eps0]
        u0 = int(ok.max())
        per_pair.append({"n": n, "k": k, "x0": u0 * grid.h})
        x0_units = u0 if x0_units is None else min(x0_units, u0)
    x0 = x0_units * grid.h
    mt1_margin = min(float(g.at_least(x0_units)) for _, _, g in marginals) - (1 - eps0)
    shift = 0.0 - x0
    rep.add("MT1", True, {"x0": x0, "shift": shift, "per_pair": per_pair}, margin=mt1_margin)
    rep.info.update(x0=x0, shift=shift, shift_units=-x0_units)

    # MT2, in log space: log g(x+M) - log g(x) + aM <= 0
    d_min = int(math.floor(M0 / grid.h + 1e-9)) + 1
    worst = (-math.inf, None)
    for n, k, g in marginals:
        units = np.arange(x0_units, g.hi + 1)
        tail = g.tail_at(units)
        pos = tail > 0
        if not pos.any():
            continue
        logt = np.full(tail.size, -math.inf)
        logt[pos] = np.log(tail[pos])
        L = int(np.nonzero(pos)[0].max()) + 1  # beyond this the tail is 0
        for d in range(d_min, L):
            diff = logt[d:L] - logt[: L - d] + a * d * grid.h
            i = int(np.argmax(diff))
            if diff[i] > worst[0]:
                worst = (float(diff[i]), {"n": n, "k": k, "x": (x0_units + i) * grid.h, "M": d * grid.h})
    max_ratio = math.exp(worst[0]) if worst[0] > -math.inf else 0.0
    ok = worst[0] <= 1e-9
    wit = dict(worst[1] or {})
    wit["scaled_ratio"] = max_ratio
    rep.add("MT2", ok, wit, margin=1.0 - max_ratio, note="scaled_ratio = max g(x+M) e^{aM} / g(x); pass iff <= 1")
    rep.info.update(a=a, M0=M0, eps0=eps0, max_scaled_ratio=max_ratio)
    return rep


def _joint_tail_functions(joint, k: int, B_units: np.ndarray, variant: str):
    """P(all X_i <= B) and the lower-side probability as functions of B."""
    if isinstance(joint, Independent):
        g = joint.marginal
        upper = g.cdf_at(B_units) ** k
        lower = g.at_least(-B_units) ** k if variant == "GT" else g.tail_at(-B_units)
        return upper, lower
    if isinstance(joint, CommonShift):
        Y, Z = joint.shift, joint.noise
        y = Y.units[:, None]
        w = Y.weights[:, None]
        upper = (w * Z.cdf_at(B_units[None, :] - y) ** k).sum(axis=0)
        if variant == "GT":
            lower = (w * Z.at_least(-B_units[None, :] - y) ** k).sum(axis=0)
        else:
            lower = joint.marginal_for(k).tail_at(-B_units)
        return upper, lower
    if isinstance(joint, ProductMixture):
        upper = np.zeros(B_units.size)
        lower = np.zeros(B_units.size)
        for w, ms in joint.components:
            upper += w * np.prod([m.cdf_at(B_units) for m in ms], axis=0)
            if variant == "GT":
                lower += w * np.prod([m.at_least(-B_units) for m in ms], axis=0)
        if variant != "GT":
            lower = joint.marginal_for(k).tail_at(-B_units)
        return upper, lower
    return None


def check_joint_tail(
    law: DisplacementLaw,
    eta1: float,
    variant: str = "GT",
    branching: BranchingLaw | None = None,
    horizon: int | None = None,
    k_cap: int = 16,
) -> AssumptionReport:
    """Smallest grid ``B > 0`` certifying (GT) or (GT') for every scheduled pair.

    (GT): ``P(all X_i <= B) >= 1-eta1`` and ``P(all X_i >= -B) >= 1-eta1``.
    (GT'): the first condition and ``P(X > -B) >= 1-eta1`` for the marginal.
    ``B`` ranges over grid multiples strictly inside the grid.  Without a
    branching law, k runs up to ``k_cap`` and the result is flagged partial.
    """
    if variant not in ("GT", "GT_prime"):
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 < eta1 < 1:
        raise PreconditionError("eta1 must lie in (0, 1)")
    grid = law.grid
    b_max = min(grid.hi, -grid.lo) - 1
    B_units = np.arange(1, b_max + 1)
    rep = AssumptionReport(f"joint tail ({variant})")
    partial = branching is None
    best = 0
    worst_margin = math.inf
    per_pair = []
    pairs = scheduled_pairs(law, branching, horizon, k_cap=k_cap)
    for n, k, joint in pairs:
        fns = _joint_tail_functions(joint, k, B_units, variant)
        if fns is None:
            rep.add(variant, False, {"n": n, "k": k, "reason": "no closed form for this family"})
            return rep
        upper, lower = fns
        ok = (upper >= 1 - eta1) & (lower >= 1 - eta1)
        if not ok.any():
            rep.add(
                variant,
                False,
                {"n": n, "k": k, "B": b_max * grid.h, "P_upper": float(upper[-1]), "P_lower": float(lower[-1])},
                note="no B inside the grid certifies this pair",
            )
            rep.info.update(partial=partial, eta1=eta1)
            return rep
        i = int(np.argmax(ok))
        per_pair.append({"n": n, "k": k, "B": int(B_units[i]) * grid.h})
        best = max(best, int(B_units[i]))
    for n, k, joint in pairs:
        upper, lower = _joint_tail_functions(joint, k, np.array([best]), variant)
        worst_margin = min(worst_margin, float(min(upper[0], lower[0])) - (1 - eta1))
    B = best * grid.h
    rep.add(variant, True, {"B": B, "per_pair": per_pair}, margin=worst_margin, note="partial: k <= k_cap only" if partial else "")
    rep.info.update(B=B, B_units=best, eta1=eta1, partial=partial, k_cap=k_cap if partial else None)
    return rep


# ---------------------------------------------------------------------------
# symmetrization
# ---------------------------------------------------------------------------


def symmetrize_joint(joint):
    """Permutation average of a product-mixture joint law (k <= 4)."""
    if not isinstance(joint, ProductMixture):
        return joint
    k = joint.k
    if k > MAX_SYMMETRIZE_K:
        raise KTooLarge(f"explicit joints with k={k} > {MAX_SYMMETRIZE_K} are not supported")
    if joint.is_exchangeable():
        return joint
    perms = list(itertools.permutations(range(k)))
    table: dict = {}
    order = []
    for w, ms in joint.components:
        for perm in perms:
            arranged = tuple(ms[i] for i in perm)
            key = tuple(_pmf_key(m) for m in arranged)
            if key not in table:
                table[key] = [0.0, arranged]
                order.append(key)
            table[key][0] += w / len(perms)
    return ProductMixture(tuple((table[key][0], table[key][1]) for key in order))


def symmetrize(law: DisplacementLaw) -> DisplacementLaw:
    rules = tuple(r.map(symmetrize_joint) for r in law.schedule.entries)
    return DisplacementLaw(law.grid, Schedule(law.schedule.kind, rules))
