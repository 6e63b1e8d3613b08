"""Lyapunov functional, its parameter system and the checks built on it.

For a tail curve u the pointwise term is

    l(u; x) = log(1/u(x)) + log_b((1 + eps1 - u(x - M)/u(x))_+),   log 0 = -inf,

and ``L(u)`` is its supremum over grid points with ``u(x)`` in (0, 1/2].
The bundle (eps1, b, M, kappa) must satisfy six inequalities, named here
``M1``, ``b1``, ``b2``, ``eps1_kappa``, ``M2`` and ``b4``;
:func:`choose_params` finds one by halving searches and re-checks it by
substitution.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, Infeasible, PreconditionError, PremiseUnmet
from .grid import Grid, GridPmf, TailCurve
from .recurse import SandwichRun, _smooth, q1, q_transform
from .report import RunReport

C_DEFAULT = math.log(2.0)
EPS1_START = 0.01
EPS1_FLOOR = 1e-8
BMINUS1_FLOOR = 1e-10
M_CEILING = 1e7
# without an explicit minimum mean, (b2) is checked against this gap above m0
DEFAULT_MEAN_GAP = 1e-12


def c1_for(k0: int) -> float:
    """``max(1, k0(k0-1)/2)``: ``ku - c1 u^2 <= 1-(1-u)^k`` for all k <= k0."""
    return float(max(1, k0 * (k0 - 1) // 2))


@dataclass(frozen=True)
class LyapunovParams:
    eps0: float
    eps1: float
    b: float
    M: float
    kappa: float
    a: float
    M0: float
    k0: int
    m0: float
    c1: float
    C: float = C_DEFAULT
    beta: float | None = None
    min_mean: float | None = None
    h: float | None = None
    clamp: str = "argument"
    audit: tuple = field(default=(), compare=False, repr=False)

    @property
    def log_b(self) -> float:
        return math.log(self.b)

    @property
    def M_units(self) -> int:
        h = self.h if self.h is not None else 1.0
        return int(round(self.M / h))

    def constraints(self) -> dict:
        """Each constraint as ``(holds, slack)``; slack >= 0 (> 0 for strict) iff it holds."""
        return constraint_table(self)

    def violated(self) -> list:
        return [name for name, (ok, _) in self.constraints().items() if not ok]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("audit")
        d["constraints"] = {k: {"holds": ok, "slack": s} for k, (ok, s) in self.constraints().items()}
        return d


def _b1_log_lhs(eps0, eps1, log_b, kappa, k0):
    """Log of the left side of (b1); ``eps1`` is raised to ``1/(2 log b) - 3/2``."""
    return (
        math.log(8.0)
        + 2.5 * math.log(2 * k0)
        + (1.0 / (2.0 * log_b) - 1.5) * math.log(eps1)
        - math.log1p(-eps0)
        - 1.5 * math.log(kappa)
    )


def _b2_log_lhs(eps0, eps1, log_b, c1):
    return math.log(c1) + math.log1p(eps1) - math.log1p(-eps0) + math.log(eps1) / log_b


def constraint_table(p: LyapunovParams) -> dict:
    lb = p.log_b
    log4k = math.log(4 * p.k0)
    out = {}
    # M1: M > 4 M0 and (4k0)^4 e^{-aM/2} <= 1/100 (the first bound e^{-aM/2} <= (4k0)^4 e^{-aM/2} is automatic)
    s1 = p.M - 4 * p.M0
    s2 = math.log(0.01) - (4 * log4k - p.a * p.M / 2)
    out["M1"] = (s1 > 0 and s2 >= 0, min(s1, s2))
    # b1 (strict), in logs
    s = -math.log(2 * p.c1) - _b1_log_lhs(p.eps0, p.eps1, lb, p.kappa, p.k0)
    out["b1"] = (s > 0, s)
    # b2: c1 (1+eps1)/(1-eps0) eps1^{1/log b} <= min mean - m0
    gap = (p.min_mean if p.min_mean is not None else p.m0 + DEFAULT_MEAN_GAP) - p.m0
    s = (math.log(gap) - _b2_log_lhs(p.eps0, p.eps1, lb, p.c1)) if gap > 0 else -math.inf
    out["b2"] = (s >= 0, s)
    # eps1_kappa: log(m0)/2 >= 2(eps1+eps0) + 6 kappa / log b
    s = math.log(p.m0) / 2 - 2 * (p.eps1 + p.eps0) - 6 * p.kappa / lb
    out["eps1_kappa"] = (s >= 0, s)
    # M2: aM/(16 log b) >= 2(eps1 + eps0 + log 4k0) - log(kappa)/log b
    s = p.a * p.M / (16 * lb) - (2 * (p.eps1 + p.eps0 + log4k) - math.log(p.kappa) / lb)
    out["M2"] = (s >= 0, s)
    # b4: a/(16 log b) >= 2 log(4k0)/M
    s = p.a / (16 * lb) - 2 * log4k / p.M
    out["b4"] = (s >= 0, s)
    # ranges required of the bundle
    s = min(0.01 - p.eps1, 0.01 - p.kappa, p.M - 100.0, p.b - 1.0)
    out["ranges"] = (s > 0, s)
    return out


def choose_params(
    k0: int,
    m0: float,
    eps0: float,
    a: float,
    M0: float,
    c1: float | None = None,
    h: float = 0.05,
    min_mean: float | None = None,
    clamp: str = "argument",
) -> LyapunovParams:
    """Pick (eps1, kappa, b, M) satisfying the six constraints.

    Order: eps1 = 0.01 * 2^-j with room left in ``eps1_kappa``, then
    beta = 2^-j with ``6 beta`` inside that room (kappa = beta log b), then
    b - 1 = 2^-j until (b1), (b2) and kappa < 1/100 hold, and finally the
    smallest M on the 2h lattice above the closed-form lower bounds from
    (M1), (M2), (b4) and M > 100.  ``min_mean`` is the smallest mean
    offspring number used in (b2); when omitted it is taken as
    ``m0 + 1e-12``.
    """
    if not m0 > 1:
        raise PreconditionError(f"m0={m0} must exceed 1")
    bound = min(0.25 * math.log(m0), 1.0)
    if not 0 < eps0 < bound:
        raise PreconditionError(f"eps0={eps0} must lie in (0, min(log(m0)/4, 1) = {bound:.6g})")
    if a <= 0 or M0 <= 0 or k0 < 1:
        raise PreconditionError("a, M0 must be positive and k0 >= 1")
    c1 = c1_for(k0) if c1 is None else float(c1)
    audit = []

    def fail(constraint, msg):
        audit.append(msg)
        raise Infeasible(msg, constraint=constraint, audit=tuple(audit))

    # eps1 with positive room in eps1_kappa
    half_log = math.log(m0) / 2
    eps1 = EPS1_START
    while True:
        room = half_log - 2 * (eps1 + eps0)
        if eps1 < 0.01 and room > 0:
            break
        audit.append(f"eps1={eps1:.3g}: room {room:.3g}")
        eps1 /= 2
        if eps1 < EPS1_FLOOR:
            fail("eps1_kappa", f"no eps1 >= {EPS1_FLOOR} leaves room in eps1_kappa")
    audit.append(f"eps1={eps1:.6g}, room={room:.6g}")

    beta = 1.0
    while 6 * beta > room:
        beta /= 2
        if beta < 1e-300:
            fail("eps1_kappa", "no beta fits")
    audit.append(f"beta={beta:.6g}")

    bm1 = 1.0
    while True:
        log_b = math.log1p(bm1)
        kappa = beta * log_b
        ok_kappa = kappa < 0.01
        ok_b1 = _b1_log_lhs(eps0, eps1, log_b, kappa, k0) < -math.log(2 * c1)
        gap = (min_mean if min_mean is not None else m0 + DEFAULT_MEAN_GAP) - m0
        ok_b2 = gap > 0 and _b2_log_lhs(eps0, eps1, log_b, c1) <= math.log(gap)
        if ok_kappa and ok_b1 and ok_b2:
            break
        audit.append(f"b-1={bm1:.3g}: kappa<0.01 {ok_kappa}, b1 {ok_b1}, b2 {ok_b2}")
        bm1 /= 2
        if bm1 < BMINUS1_FLOOR:
            first = "b2" if not ok_b2 else ("b1" if not ok_b1 else "ranges")
            fail(first, f"b-1 fell below {BMINUS1_FLOOR} with {first} still violated")
    b = 1.0 + bm1
    log_b = math.log(b)
    kappa = beta * log_b
    audit.append(f"b=1+{bm1:.6g}, kappa={kappa:.6g}")

    log4k = math.log(4 * k0)
    lower = max(
        100.0,
        4 * M0,
        (2 / a) * (4 * log4k - math.log(0.01)),
        (16 * log_b / a) * (2 * (eps1 + eps0 + log4k) - math.log(kappa) / log_b),
        32 * log4k * log_b / a,
    )
    step = 2 * h
    M = (math.floor(lower / step + 1e-9) + 1) * step
    M = round(M / step) * step
    audit.append(f"M lower bound {lower:.6g} -> M={M:.6g}")
    params = None
    for _ in range(1000):
        if M > M_CEILING:
            fail("M2", f"M exceeds {M_CEILING:g}")
        params = LyapunovParams(eps0, eps1, b, M, kappa, a, M0, k0, m0, c1, C_DEFAULT, beta, min_mean, h, clamp)
        bad = params.violated()
        if not bad:
            break
        if any(c not in ("M1", "M2", "b4") for c in bad):
            fail(bad[0], f"constraint {bad[0]} fails after the search")
        audit.append(f"M={M:.6g} fails {bad} on substitution; next lattice point")
        M = round((M + step) / step) * step
    else:
        fail("M2", "M search did not converge")
    return LyapunovParams(eps0, eps1, b, M, kappa, a, M0, k0, m0, c1, C_DEFAULT, beta, min_mean, h, clamp, tuple(audit))


# ---------------------------------------------------------------------------
# the functional
# ---------------------------------------------------------------------------


def _l_values(ux, uxm, p: LyapunovParams):
    arg = 1.0 + p.eps1 - uxm / ux
    with np.errstate(divide="ignore", invalid="ignore"):
        size = -np.log(ux)
        if p.clamp == "argument":
            flat = np.where(arg > 0, np.log(np.where(arg > 0, arg, 1.0)) / p.log_b, -np.inf)
        elif p.clamp == "output":
            flat = np.where(arg > 0, np.maximum(np.log(np.where(arg > 0, arg, 1.0)) / p.log_b, 0.0), 0.0)
        else:
            raise ValueError(f"unknown clamp {p.clamp!r}")
    return size + flat


def _m_units(u: TailCurve, p: LyapunovParams) -> int:
    return u.grid.units(p.M)


def lyapunov_l(u: TailCurve, x: float, params: LyapunovParams) -> float:
    """``l(u; x)`` at grid point x; ``u(x - M)`` is 1 left of the grid."""
    i = u.grid.index(x)
    ux = float(u.at_index(i))
    if ux <= 0:
        raise DomainError(f"u({x}) = 0")
    uxm = float(u.at_index(i - _m_units(u, params)))
    return float(_l_values(np.array([ux]), np.array([uxm]), params)[0])


def lyapunov_L(u: TailCurve, params: LyapunovParams):
    """``(L(u), argmax x)``; ``(-inf, None)`` when no grid point has u in (0, 1/2]."""
    v = u.values
    idx = np.nonzero((v > 0) & (v <= 0.5))[0]
    if idx.size == 0:
        return -math.inf, None
    vals = _l_values(v[idx], u.at_index(idx - _m_units(u, params)), params)
    j = int(np.argmax(vals))
    if vals[j] == -math.inf:
        return -math.inf, None
    return float(vals[j]), float(u.grid.points[idx[j]])


# ---------------------------------------------------------------------------
# Q-map inequalities
# ---------------------------------------------------------------------------


def _inner_sums(k, u):
    """``sum_{1<=j<k} (1-u)^j`` and ``sum_{j=1}^{k-1} sum_{i<j} (1-u)^i``."""
    w = 1.0 - u
    s1 = np.zeros_like(u)
    s2 = np.zeros_like(u)
    power = np.ones_like(u)
    partial = np.zeros_like(u)  # sum_{i<j} w^i
    for j in range(1, k):
        partial = partial + power
        s2 = s2 + partial
        power = power * w
        s1 = s1 + power
    return s1, s2


def check_q_lemma(k0: int | None = None, pmf=None, m1: float | None = None, n_grid: int = 10_000) -> RunReport:
    """Bounds on ``Q1k`` for k <= k0 and, given a pmf, on the averaged maps.

    Every margin is evaluated through an algebraic rearrangement whose sign
    is exact in floating point (sums of non-negative terms), e.g.
    ``Q1k(u) - u = u * sum_{1<=j<k} (1-u)^j``.
    """
    u = np.linspace(0.0, 1.0, n_grid)
    rep = RunReport("Q-map bounds")
    if k0 is not None:
        c1 = c1_for(k0)
        m_lb1 = m_lo = m_hi = math.inf
        wit = {}
        for k in range(1, k0 + 1):
            s1, s2 = _inner_sums(k, u)
            for name, marg in (("lb1", u * s1), ("lo", u * u * (c1 - s2)), ("hi", u * u * s2)):
                i = int(np.argmin(marg))
                val = float(marg[i])
                cur = {"lb1": m_lb1, "lo": m_lo, "hi": m_hi}[name]
                if val < cur:
                    wit[name] = {"k": k, "u": float(u[i])}
                    if name == "lb1":
                        m_lb1 = val
                    elif name == "lo":
                        m_lo = val
                    else:
                        m_hi = val
        rep.add("Q1k>=u", m_lb1 >= 0, wit.get("lb1"), margin=m_lb1)
        rep.add("ku-c1u^2<=Q1k", m_lo >= 0, wit.get("lo"), margin=m_lo)
        rep.add("Q1k<=ku", m_hi >= 0, wit.get("hi"), margin=m_hi)
        rep.info.update(k0=k0, c1=c1)
    if pmf is not None:
        p = np.asarray(pmf, dtype=float)
        ks = np.nonzero(p > 0)[0]
        second = float(np.dot(np.arange(p.size) ** 2, p))
        mean = float(np.dot(np.arange(p.size), p))
        m1 = second + 1e-6 if m1 is None else float(m1)
        c2 = m1 / 2
        S1 = np.zeros_like(u)
        S2 = np.zeros_like(u)
        for k in ks:
            s1, s2 = _inner_sums(int(k), u)
            S1 += p[k] * s1
            S2 += p[k] * s2
        interior = (u > 0) & (u < 1)
        checks = [
            ("Qm1>u", (u * S1)[interior], u[interior], True),
            ("Qm2-c2u^2<=Qm1", u * u * (c2 - S2), u, False),
            ("Qm1<=Qm2", u * u * S2, u, False),
            ("Qm2<=sqrt(m1)u", (math.sqrt(m1) - mean) * u, u, False),
        ]
        for name, marg, uu, strict in checks:
            i = int(np.argmin(marg))
            val = float(marg[i])
            ok = val > 0 if strict else val >= 0
            rep.add(name, ok, {"u": float(uu[i])}, margin=val)
        rep.info.update(m1=m1, c2=c2, second_moment=second, mean=mean)
        rep.info["moment_precondition"] = second < m1
    return rep


def g_delta(delta: float, eps: float, k0: int) -> float:
    """The explicit modulus ``(1-(1-d)^k0)/(k0 d) * ((1+e)/(d+e))^(k0-1) * e``."""
    return (1 - (1 - delta) ** k0) / (k0 * delta) * ((1 + eps) / (delta + eps)) ** (k0 - 1) * eps


def check_T1_T2(pmf, delta: float, eps: float, k0: int | None = None, m0: float | None = None, n_grid: int = 10_000) -> RunReport:
    """Uniform growth (T1') and flatness transfer (T2') of ``Q_m``."""
    p = np.asarray(pmf, dtype=float)
    ks = np.nonzero(p > 0)[0]
    k0 = max(2, int(ks.max())) if k0 is None else k0
    mean = float(np.dot(np.arange(p.size), p))
    m0 = mean - 1e-6 if m0 is None else m0
    rep = RunReport("T1'/T2'")
    x = np.linspace(0.0, 1.0, n_grid)

    # T1': Q(x) - c x = x * (sum_k p_k sum_{1<=j<k} (1-x)^j - (m0-1) delta / k0)
    sel = x[(x > 0) & (x <= 1 - delta)]
    if sel.size == 0:
        rep.add("T1'", True, {"vacuous": True}, note="no grid x in (0, 1-delta]")
    else:
        S1 = sum(p[k] * _inner_sums(int(k), sel)[0] for k in ks)
        inner = S1 - (m0 - 1) * delta / k0
        i = int(np.argmin(inner))
        rep.add("T1'", bool(inner[i] > 0), {"x": float(sel[i]), "c_delta": 1 + (m0 - 1) * delta / k0}, margin=float(inner[i]))

    # T2'
    g = g_delta(delta, eps, k0)
    xs = x[x >= delta]
    y = (1 + g) * xs
    inside = y <= 1
    xs, y = xs[inside], y[inside]
    qy = q_transform("Qm", p, y) if y.size else y
    active = qy <= (1 - delta) / (1 + eps)
    if not active.any():
        rep.add("T2'", True, {"vacuous": True, "g": g}, note="premise never met on the grid")
    else:
        xa, qa = xs[active], qy[active]
        marg = qa - (1 + eps) * q_transform("Qm", p, xa)
        i = int(np.argmin(marg))
        rep.add("T2'", bool(marg[i] >= 0), {"x": float(xa[i]), "g": g}, margin=float(marg[i]))
    rep.info.update(delta=delta, eps=eps, k0=k0, m0=m0)
    return rep


# ---------------------------------------------------------------------------
# run-level checks
# ---------------------------------------------------------------------------


def verify_bounded(data: SandwichRun, params: LyapunovParams, assumptions_ok: bool | None = None) -> RunReport:
    """``max_m L(F_n^m) <= C`` over the exact curves of a run."""
    data.require("exact")
    values = []
    best = (-math.inf, None, None)
    for m in range(data.n + 1):
        val, x = lyapunov_L(data.curves["exact"][m], params)
        values.append(val)
        if best[1] is None or val > best[0]:
            best = (val, m, x)
    rep = RunReport("Lyapunov boundedness")
    note = "" if assumptions_ok in (None, True) else "assumptions unmet: result is informative only"
    rep.add("sup L <= C", best[0] <= params.C, {"L": best[0], "m": best[1], "x": best[2]}, margin=params.C - best[0], note=note)
    rep.info.update(C=params.C, L_by_m=values, finite=sum(1 for v in values if v > -math.inf), assumptions_ok=assumptions_ok)
    return rep


def default_delta1_candidates():
    return [2.0**-j for j in range(3, 21)]


def right_tail_check(data: SandwichRun, params: LyapunovParams, candidates=None) -> RunReport:
    """Largest candidate ``delta1`` with ``F(x) <= delta1 => F(x-M) >= (1+eps1/2) F(x)``.

    The implication is checked at every grid x with ``F(x) > 0`` and every m.
    A candidate passes iff no violating point has ``F(x) <= delta1``, so the
    passing set is closed under taking smaller candidates.
    """
    data.require("exact")
    cands = sorted(default_delta1_candidates() if candidates is None else candidates, reverse=True)
    lowest = (math.inf, None)  # smallest F(x) among violating points
    for m in range(data.n + 1):
        u = data.curves["exact"][m]
        v = u.values
        idx = np.nonzero(v > 0)[0]
        left = u.at_index(idx - _m_units(u, params))
        bad = idx[left < (1 + params.eps1 / 2) * v[idx]]
        if bad.size:
            j = bad[int(np.argmin(v[bad]))]
            if v[j] < lowest[0]:
                lowest = (float(v[j]), {"m": m, "x": float(u.grid.points[j]), "F": float(v[j])})
    passing = [c for c in cands if c < lowest[0]]
    rep = RunReport("right-tail certificate")
    if passing:
        rep.add("delta1", True, {"delta1": passing[0]}, margin=lowest[0] - passing[0] if lowest[1] else math.inf)
    else:
        rep.add("delta1", False, lowest[1], margin=lowest[0] - cands[-1])
    rep.info.update(
        candidates=cands,
        passed={c: c < lowest[0] for c in cands},
        eps1=params.eps1,
        M=params.M,
        smallest_violating_value=lowest[0],
        violation=lowest[1],
    )
    return rep


# ---------------------------------------------------------------------------
# flatness diagnostics and the one-step implication
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatnessDiagnostics:
    x1: float
    x2: float
    eps: float
    f0: float
    delta: float
    eps_1: float
    eps_2: float
    eps_3: float
    y0: float
    q: float
    r: float
    l_v: float
    r_steep_holds: bool | None
    r_steep_witness: dict | None = None


def flatness_diagnostics(v: TailCurve, u: TailCurve, params: LyapunovParams) -> FlatnessDiagnostics:
    """Location and size of the flat piece of v, and the first steep place of u left of it."""
    Lv, x1 = lyapunov_L(v, params)
    if not Lv > params.C:
        raise PremiseUnmet(f"L(v) = {Lv} <= C = {params.C}")
    grid = v.grid
    h = grid.h
    Mu = _m_units(v, params)
    i1 = grid.index(x1)
    i2 = i1 - Mu
    f0 = float(v.at_index(i1))
    eps = float(v.at_index(i2)) / f0 - 1.0
    delta = params.kappa * (params.eps1 - eps)
    y0 = (1.0 / params.a) * math.log(2 * params.k0 / (delta * f0))
    k4 = 4 * params.k0
    half = Mu // 2
    # q: first grid y >= M/2 with u(x2 - y) > (4k0)^2 u(x1 - y); beyond x1 - y < x_min both sides are 1
    ys = np.arange(half, i1 + 2)
    hit = np.nonzero(u.at_index(i2 - ys) > k4**2 * u.at_index(i1 - ys))[0]
    if hit.size == 0:
        q = math.inf
        r = y0
    else:
        qu = int(ys[hit[0]])
        q = qu * h
        left_limit = float(u.at_index(i2 - qu - 1))
        cand = q if left_limit >= k4 * float(u.at_index(i1 - qu - half)) else q - half * h
        r = min(y0, cand)
    steep, wit = None, None
    if r < y0:
        ru = int(round(r / h))
        yy = np.arange(ru + 1, ru + half + 1)
        lhs = u.at_index(i2 - yy)
        rhs = k4 * u.at_index(i1 - yy)
        bad = np.nonzero(lhs < rhs)[0]
        steep = bad.size == 0
        if not steep:
            wit = {"y": float(yy[bad[0]] * h)}
    return FlatnessDiagnostics(
        x1=x1,
        x2=x1 - params.M,
        eps=eps,
        f0=f0,
        delta=delta,
        eps_1=eps + delta,
        eps_2=eps + 2 * delta,
        eps_3=eps + 3 * delta,
        y0=y0,
        q=q,
        r=r,
        l_v=Lv,
        r_steep_holds=steep,
        r_steep_witness=wit,
    )


def lower_image(u: TailCurve, pmf, marginals) -> TailCurve:
    """``v = sum_k p_k g_k * Q1k(u)``; ``marginals`` is one pmf or a mapping k -> pmf."""
    p = np.asarray(pmf, dtype=float)
    total = np.zeros(u.grid.size)
    for k in np.nonzero(p > 0)[0]:
        g = marginals if isinstance(marginals, GridPmf) else marginals[int(k)]
        total += p[k] * _smooth(g, q1(int(k), u.values), q1(int(k), u.left))
    total = np.maximum.accumulate(np.clip(total, 0.0, 1.0)[::-1])[::-1]
    return TailCurve(u.grid, total, left=float(sum(p[k] * q1(int(k), u.left) for k in np.nonzero(p > 0)[0])))


def truncated_sums(u: TailCurve, pmf, marginals, d: FlatnessDiagnostics, params: LyapunovParams):
    """Both sides of the truncated comparison at the cut ``r`` (integrals over y <= r)."""
    grid = u.grid
    p = np.asarray(pmf, dtype=float)
    i1 = grid.index(d.x1)
    i2 = i1 - _m_units(u, params)
    lhs = rhs = 0.0
    for k in np.nonzero(p > 0)[0]:
        k = int(k)
        g = marginals if isinstance(marginals, GridPmf) else marginals[k]
        ys = g.units
        keep = ys * grid.h <= d.r + 1e-9
        w = g.weights[keep]
        y = ys[keep]
        lhs += p[k] * float(np.dot(w, q1(k, u.at_index(i2 - y))))
        rhs += p[k] * float(np.dot(w, k * u.at_index(i1 - y)))
    return lhs, (1 + d.eps_1) * rhs


def chain_check(u: TailCurve, pmf, marginals, params: LyapunovParams, predicates: bool = True) -> RunReport:
    """For ``v = sum_k p_k g_k * Q1k(u)``, check that ``L(v) > C`` forces ``L(u) > C``.

    With ``predicates`` and the premise met, the flatness diagnostics are
    attached together with two statement-level checks: the steepness of u on
    ``(r, r + M/2]`` and the truncated comparison at the cut r.
    """
    v = lower_image(u, pmf, marginals)
    Lv, xv = lyapunov_L(v, params)
    Lu, xu = lyapunov_L(u, params)
    premise = Lv > params.C
    rep = RunReport("one-step implication")
    rep.add("L(v)>C => L(u)>C", (not premise) or Lu > params.C, {"L_v": Lv, "x_v": xv, "L_u": Lu, "x_u": xu}, margin=Lu - params.C if premise else None)
    rep.info.update(premise=premise, L_v=Lv, L_u=Lu, C=params.C)
    if premise:
        rep.info["gain"] = Lu - Lv
    if premise and predicates:
        d = flatness_diagnostics(v, u, params)
        rep.info["diagnostics"] = asdict(d)
        if d.r_steep_holds is not None:
            rep.add("r_steep", d.r_steep_holds, d.r_steep_witness or {"r": d.r})
        lhs, rhs = truncated_sums(u, pmf, marginals, d, params)
        rep.add("truncation", lhs <= rhs, {"lhs": lhs, "rhs": rhs, "r": d.r}, margin=rhs - lhs)
    return rep
