"""JSON model configs: schema, validation and law construction.

A model file looks like::

    {
      "grid": {"xmin": -60, "xmax": 60, "h": 0.05},
      "branching": {"type": "constant", "pmfs": [{"2": 1.0}]},
      "displacement": {"family": "independent",
                       "marginal": {"points": {"-1": 0.5, "1": 0.5}}}
    }

``displacement`` is either one entry (used at every generation) or
``{"type": "periodic"|"explicit", "entries": [...]}``.  Entry families:

* ``independent``: ``marginal``
* ``common_shift``: ``shift`` (shared Y) and ``noise`` (the i.i.d. Z; ``marginal`` is accepted as an alias)
* ``product``: ``marginals`` (one per sibling, fixes k)
* ``mc``: ``sampler`` and optionally ``marginal`` for the bound recursions

With ``"per_k": true`` the ``marginal``/``shift``/``noise`` fields are
mappings from k to descriptors.  Marginal descriptors: ``points``,
``grid_uniform``, ``gaussian``, ``exponential``, ``lomax``, ``uniform``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from .errors import ConfigError
from .grid import Grid, GridPmf
from .laws import (
    BranchingLaw,
    CommonShift,
    DisplacementLaw,
    Independent,
    JointRule,
    MonteCarlo,
    ProductMixture,
    Schedule,
    make_branching_schedule,
)

_NUM = {"type": "number"}
_MARGINAL = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {
        "points": {"type": "object", "additionalProperties": _NUM, "minProperties": 1},
        "grid_uniform": {
            "type": "object",
            "required": ["low", "high"],
            "properties": {"low": _NUM, "high": _NUM, "step": _NUM},
            "additionalProperties": False,
        },
        "gaussian": {
            "type": "object",
            "required": ["sd"],
            "properties": {"mean": _NUM, "sd": {"type": "number", "exclusiveMinimum": 0}, "width": _NUM},
            "additionalProperties": False,
        },
        "exponential": {
            "type": "object",
            "properties": {"scale": {"type": "number", "exclusiveMinimum": 0}, "loc": _NUM, "upper": _NUM},
            "additionalProperties": False,
        },
        "lomax": {
            "type": "object",
            "required": ["alpha", "upper"],
            "properties": {"alpha": {"type": "number", "exclusiveMinimum": 0}, "loc": _NUM, "upper": _NUM},
            "additionalProperties": False,
        },
        "uniform": {
            "type": "object",
            "required": ["low", "high"],
            "properties": {"low": _NUM, "high": _NUM},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}
_KEYED = {"type": "object", "patternProperties": {"^[0-9]+$": _MARGINAL}, "additionalProperties": False}
_ENTRY = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["independent", "common_shift", "product", "mc"]},
        "per_k": {"type": "boolean"},
        "marginal": {"type": "object"},
        "shift": {"type": "object"},
        "noise": {"type": "object"},
        "marginals": {"type": "array", "items": _MARGINAL, "minItems": 1, "maxItems": 4},
        "sampler": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["exchangeable_gaussian"]}, "mean": _NUM, "sd": _NUM, "rho": _NUM},
        },
    },
}
_PMF = {
    "oneOf": [
        {"type": "object", "patternProperties": {"^[0-9]+$": _NUM}, "additionalProperties": False, "minProperties": 1},
        {"type": "array", "items": _NUM, "minItems": 2},
        {
            "type": "object",
            "required": ["dist"],
            "properties": {"dist": {"enum": ["geometric", "poisson1"]}, "p": _NUM, "lam": _NUM},
            "additionalProperties": False,
        },
    ]
}
MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["branching", "displacement"],
    "properties": {
        "grid": {
            "type": "object",
            "properties": {"xmin": _NUM, "xmax": _NUM, "h": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "branching": {
            "type": "object",
            "required": ["pmfs"],
            "properties": {"type": {"enum": ["constant", "periodic", "explicit"]}, "pmfs": {"type": "array", "items": _PMF, "minItems": 1}},
            "additionalProperties": False,
        },
        "displacement": {
            "oneOf": [
                _ENTRY,
                {
                    "type": "object",
                    "required": ["type", "entries"],
                    "properties": {"type": {"enum": ["constant", "periodic", "explicit"]}, "entries": {"type": "array", "items": _ENTRY, "minItems": 1}},
                    "additionalProperties": False,
                },
            ]
        },
    },
}

SCHEMA_HELP = """model config (JSON):
  grid:          {"xmin": -60, "xmax": 60, "h": 0.05}            (optional, these are the defaults)
  branching:     {"type": "constant|periodic|explicit", "pmfs": [PMF, ...]}
                 PMF = {"k": p_k, ...} | [p_0, p_1, ...] | {"dist": "geometric", "p": ..} | {"dist": "poisson1", "lam": ..}
  displacement:  ENTRY | {"type": "periodic|explicit", "entries": [ENTRY, ...]}
                 ENTRY = {"family": "independent", "marginal": MARG}
                       | {"family": "common_shift", "shift": MARG, "noise": MARG}
                       | {"family": "product", "marginals": [MARG, ...]}
                       | {"family": "mc", "sampler": {"kind": "exchangeable_gaussian", "mean": 0, "sd": 1, "rho": 0.5}, "marginal": MARG}
                 add "per_k": true to give marginal/shift/noise as {"k": MARG}
  MARG:          {"points": {"x": w}} | {"grid_uniform": {"low", "high", "step"}} | {"gaussian": {"mean", "sd"}}
                 | {"exponential": {"scale", "loc"}} | {"lomax": {"alpha", "upper"}} | {"uniform": {"low", "high"}}
"""


@dataclass(frozen=True)
class Model:
    grid: Grid
    branching: BranchingLaw
    displacement: DisplacementLaw
    raw: dict


def marginal_from(desc: dict, grid: Grid) -> GridPmf:
    """Grid pmf from a marginal descriptor; continuous laws are rasterized inside the grid."""
    jsonschema.validate(desc, _MARGINAL)
    (kind, d), = desc.items()
    h = grid.h
    lo, hi = grid.xmin, grid.xmax
    if kind == "points":
        return GridPmf.from_points({float(x): w for x, w in d.items()}, h)
    if kind == "grid_uniform":
        step = d.get("step", h)
        pts = np.arange(d["low"], d["high"] + step / 2, step)
        return GridPmf.from_points({float(x): 1.0 / pts.size for x in pts}, h)
    if kind == "gaussian":
        mean, sd = d.get("mean", 0.0), d["sd"]
        w = d.get("width", 8.5)
        dist = stats.norm(mean, sd)
        return GridPmf.rasterize(dist, h, max(lo, mean - w * sd), min(hi - h, mean + w * sd))
    if kind == "exponential":
        loc, scale = d.get("loc", 0.0), d.get("scale", 1.0)
        dist = stats.expon(loc=loc, scale=scale)
        return GridPmf.rasterize(dist, h, max(lo, loc), min(hi - h, d.get("upper", loc + 40 * scale)))
    if kind == "lomax":
        loc = d.get("loc", 0.0)
        dist = stats.lomax(d["alpha"], loc=loc)
        return GridPmf.rasterize(dist, h, max(lo, loc), min(hi - h, d["upper"]))
    if kind == "uniform":
        dist = stats.uniform(d["low"], d["high"] - d["low"])
        return GridPmf.rasterize(dist, h, d["low"], d["high"])
    raise ConfigError(f"unknown marginal kind {kind!r}")


def exchangeable_gaussian(mean=0.0, sd=1.0, rho=0.5):
    """Sampler for ``X_i = mean + sd (sqrt(rho) Y + sqrt(1-rho) Z_i)``."""
    if not 0 <= rho <= 1:
        raise ConfigError("rho must lie in [0, 1]")

    def sampler(rng, n, k, size):
        y = rng.standard_normal((size, 1))
        z = rng.standard_normal((size, k))
        return mean + sd * (np.sqrt(rho) * y + np.sqrt(1 - rho) * z)

    return sampler


def _joint_from(entry: dict, grid: Grid, k=None):
    fam = entry["family"]

    def field(name, *aliases):
        for key in (name, *aliases):
            if key in entry:
                v = entry[key]
                if entry.get("per_k"):
                    if str(k) not in v:
                        raise ConfigError(f"{key} has no entry for k={k}")
                    v = v[str(k)]
                return marginal_from(v, grid)
        raise ConfigError(f"{fam} entry needs {name!r}")

    if fam == "independent":
        return Independent(field("marginal"))
    if fam == "common_shift":
        return CommonShift(field("shift"), field("noise", "marginal"))
    if fam == "product":
        return ProductMixture(((1.0, tuple(marginal_from(m, grid) for m in entry["marginals"])),))
    if fam == "mc":
        s = dict(entry["sampler"])
        s.pop("kind")
        marg = field("marginal") if "marginal" in entry else None
        return MonteCarlo(exchangeable_gaussian(**s), marginal=marg)
    raise ConfigError(f"unknown family {fam!r}")


def _rule_from(entry: dict, grid: Grid) -> JointRule:
    if entry.get("per_k"):
        keyed = [entry[f] for f in ("marginal", "shift", "noise") if f in entry]
        ks = sorted({int(k) for d in keyed for k in d})
        return JointRule(None, {k: _joint_from(entry, grid, k) for k in ks})
    return JointRule(_joint_from(entry, grid))


def load_model(source) -> Model:
    """Parse a model from a path, JSON string or dict; raises :class:`ConfigError`."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
    try:
        jsonschema.validate(raw, MODEL_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config does not match the schema: {e.message}") from e
    try:
        grid = Grid(**raw.get("grid", {}))
        branching = make_branching_schedule(raw["branching"])
        disp = raw["displacement"]
        if "entries" in disp:
            sched = Schedule(disp["type"], tuple(_rule_from(e, grid) for e in disp["entries"]))
        else:
            sched = Schedule("constant", (_rule_from(disp, grid),))
        displacement = DisplacementLaw(grid, sched).validate()
    except ConfigError:
        raise
    except (ValueError, KeyError, jsonschema.ValidationError) as e:
        raise ConfigError(f"invalid model: {e}") from e
    return Model(grid, branching, displacement, raw)
