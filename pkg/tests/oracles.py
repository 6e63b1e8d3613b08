"""Independent reference computations used by the tests.

Nothing here calls into the recursion code: the maximum is obtained by
enumerating every outcome of the tree with exact rational arithmetic, and
the single-path quantiles come from repeated direct convolution.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def _max_law_one_step(children, k_law, joint):
    """Law of ``max_i (X_i + M_i)`` mixed over k.

    ``children`` maps value -> probability for one child's maximum, ``k_law``
    maps k -> probability, and ``joint(k)`` lists ``(prob, offsets)`` pairs
    for the displacement vector.
    """
    out = {}
    items = list(children.items())
    for k, pk in k_law.items():
        for pj, offsets in joint(k):
            for combo in itertools.product(items, repeat=k):
                prob = pk * pj
                best = None
                for (val, pv), off in zip(combo, offsets):
                    prob *= pv
                    cand = val + off
                    best = cand if best is None or cand > best else best
                out[best] = out.get(best, 0) + prob
    return out


def independent_joint(atoms):
    """``joint(k)`` for i.i.d. coordinates with law ``atoms`` (value -> prob)."""

    def joint(k):
        for combo in itertools.product(atoms.items(), repeat=k):
            p = Fraction(1)
            for _, w in combo:
                p *= w
            yield p, tuple(v for v, _ in combo)

    return joint


def common_shift_joint(shift, noise):
    """``X_i = Y + Z_i`` with Y ~ shift and Z_i i.i.d. ~ noise."""
    inner = independent_joint(noise)

    def joint(k):
        for y, py in shift.items():
            for p, offs in inner(k):
                yield py * p, tuple(y + o for o in offs)

    return joint


def brute_force_max_laws(k_laws, joints, n):
    """Exact laws of the maximum seen from every generation m = 0..n.

    ``k_laws[m]`` and ``joints[m]`` describe generation m.  Values are in grid
    units (integers) and probabilities are :class:`Fraction`.
    """
    laws = {n: {0: Fraction(1)}}
    for m in range(n - 1, -1, -1):
        laws[m] = _max_law_one_step(laws[m + 1], k_laws[m], joints[m])
    return laws


def tail_on_units(law, units):
    """``P(max > x)`` at each integer grid unit x."""
    return np.array([float(sum((p for v, p in law.items() if v > x), Fraction(0))) for x in units])


def random_walk_quantile_width(step_atoms, n, delta):
    """Width ``q_{1-delta} - q_delta`` of a sum of n i.i.d. integer steps.

    Quantiles use the order-statistic convention ``inf{x : F(x) >= p}``.
    """
    lo = min(step_atoms)
    w = np.zeros(max(step_atoms) - lo + 1)
    for v, p in step_atoms.items():
        w[v - lo] = p
    dist = np.array([1.0])
    for _ in range(n):
        dist = np.convolve(dist, w)
    cdf = np.cumsum(dist)
    support = np.arange(dist.size) + n * lo

    def q(p):
        return support[int(np.searchsorted(cdf, p - 1e-12))]

    return int(q(1 - delta) - q(delta))


def geometric_moments(p):
    """Mean and second moment of the geometric law on {1, 2, ...} with success probability p."""
    mean = 1 / p
    return mean, (2 - p) / p**2
