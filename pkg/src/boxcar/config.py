"""Declarative experiment configuration: JSON schema and object builders.

A single JSON document describes the model rates (family name plus
parameters), the initial measure, the discretization, the control or
optimizer grid, the cost and the per-command sections.  The schema below is
the published contract; cross-field constraints (grid alignment, box
dimensions) are checked by the builders.
"""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from .control import Control
from .cost import (CostSpec, LinearCost, QuadraticControlCost,
                   QuadraticMomentCost, SumCost, TimePolynomialCost,
                   WelfareIncomeCost)
from .ebt import Discretization
from .errors import ConfigError
from .measure import DiscreteMeasure, normalize
from .model import (AffineControlTerm, Box, ClippedAffineFn, ConstantCore,
                    ConstantFn, GaussianBumpFn, LogisticCore, ModelSpec,
                    QuadraticControlTerm, RateFunction, ScalarCore,
                    SeparableCore, TabulatedFn)
from .optimizer import OptimizerSettings, RefinementLevel

__all__ = ["CONFIG_SCHEMA", "load_config", "validate_config", "config_hash",
           "build_model", "build_measure", "build_discretization",
           "build_control", "build_cost", "build_settings", "build_levels",
           "build_scalar_fn"]

_SCALAR_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["constant", "affine", "gaussian", "tabulated"]},
        "value": {"type": "number"},
        "intercept": {"type": "number"},
        "slope": {"type": "number"},
        "peak": {"type": "number"},
        "center": {"type": "number"},
        "width": {"type": "number"},
        "nodes": {"type": "array", "items": {"type": "number"}},
        "values": {"type": "array", "items": {"type": "number"}},
    },
}

_RATE_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["constant", "affine", "gaussian", "tabulated",
                            "logistic", "separable"]},
        "kernel": _SCALAR_SCHEMA,
        "value": {"type": "number"},
        "intercept": {"type": "number"},
        "slope": {"type": "number"},
        "peak": {"type": "number"},
        "center": {"type": "number"},
        "width": {"type": "number"},
        "nodes": {"type": "array", "items": {"type": "number"}},
        "values": {"type": "array", "items": {"type": "number"}},
        "scale": {"type": "number"},
        "capacity": {"type": "number"},
        "profile": _SCALAR_SCHEMA,
        "control_term": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["affine", "quadratic"]},
                "const": {"type": "number"},
                "coeffs": {"type": "array", "items": {"type": "number"}},
                "lin": {"type": "array", "items": {"type": "number"}},
                "quad": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
}

_RUNNING_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["time_polynomial", "linear", "quadratic_control",
                            "quadratic_moment", "welfare_income", "sum"]},
        "coeffs": {"type": "array", "items": {"type": "number"}},
        "const": {"type": "number"},
        "y_coeffs": {"type": "array", "items": {"type": "number"}},
        "u_coeffs": {"type": "array", "items": {"type": "number"}},
        "mb_coeff": {"type": "number"},
        "weights": {"type": "array", "items": {"type": "number"}},
        "targets": {"type": "array", "items": {"type": "number"}},
        "discount": {"type": "number"},
        "terms": {"type": "array"},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "boxcar experiment configuration",
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "required": ["rates", "control_box"],
            "properties": {
                "rates": {
                    "type": "object",
                    "required": ["growth", "mortality", "birth"],
                    "properties": {"growth": _RATE_SCHEMA,
                                   "mortality": _RATE_SCHEMA,
                                   "birth": _RATE_SCHEMA},
                },
                "control_box": {
                    "type": "object",
                    "required": ["lower", "upper"],
                    "properties": {
                        "lower": {"type": "array", "items": {"type": "number"}},
                        "upper": {"type": "array", "items": {"type": "number"}},
                    },
                },
                "declared_lipschitz": {"type": "number"},
            },
        },
        "initial_measure": {
            "type": "object",
            "properties": {
                "atoms": {
                    "type": "object",
                    "required": ["points", "masses"],
                    "properties": {
                        "points": {"type": "array", "items": {"type": "number"}},
                        "masses": {"type": "array", "items": {"type": "number"}},
                    },
                },
                "histogram": {
                    "type": "object",
                    "required": ["cell_width", "masses"],
                    "properties": {
                        "cell_width": {"type": "number", "exclusiveMinimum": 0},
                        "masses": {"type": "array", "items": {"type": "number"}},
                    },
                },
            },
        },
        "discretization": {
            "type": "object",
            "required": ["n", "dt"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "substeps": {"type": "integer", "minimum": 1},
                "dx": {"type": "number", "exclusiveMinimum": 0},
                "placement": {"enum": ["grid-left", "centroid"]},
            },
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "control": {
            "type": "object",
            "properties": {
                "breakpoints": {"type": "array", "items": {"type": "number"}},
                "values": {"type": "array"},
                "pieces": {"type": "integer", "minimum": 1},
                "initial": {"type": "array"},
            },
        },
        "cost": {
            "type": "object",
            "required": ["running"],
            "properties": {
                "moments": {"type": "array", "items": _SCALAR_SCHEMA},
                "running": _RUNNING_SCHEMA,
                "boundary_channel": {"type": "boolean"},
                "enforce_nonnegative": {"type": "boolean"},
            },
        },
        "optimizer": {
            "type": "object",
            "properties": {
                "method": {"enum": ["proximal-gradient", "compass-search"]},
                "initial_step": {"type": "number", "exclusiveMinimum": 0},
                "tv_mode": {"enum": ["auto", "prox", "huber"]},
                "huber_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "multistart": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "refine": {
            "type": "object",
            "required": ["levels"],
            "properties": {
                "levels": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["n", "dt", "pieces"],
                        "properties": {
                            "n": {"type": "integer", "minimum": 1},
                            "dt": {"type": "number", "exclusiveMinimum": 0},
                            "pieces": {"type": "integer", "minimum": 1},
                            "substeps": {"type": "integer", "minimum": 1},
                            "dx": {"type": "number", "exclusiveMinimum": 0},
                            "placement": {"enum": ["grid-left", "centroid"]},
                        },
                    },
                },
            },
        },
        "convergence": {
            "type": "object",
            "required": ["dts", "reference_dt"],
            "properties": {
                "dts": {"type": "array", "items": {"type": "number"},
                         "minItems": 1},
                "reference_dt": {"type": "number", "exclusiveMinimum": 0},
                "save_dt": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "gradient_check": {
            "type": "object",
            "properties": {"fd_step": {"type": "number",
                                       "exclusiveMinimum": 0}},
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "save_every": {"type": "integer", "minimum": 1},
                "snapshot_every": {"type": "integer", "minimum": 0},
            },
        },
        "birth_includes_boundary": {"type": "boolean"},
    },
}


def validate_config(cfg: dict) -> None:
    if jsonschema is None:
        raise ConfigError("jsonschema package is required for validation")
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"configuration schema violation: {exc.message}") from exc


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


# ---------------------------------------------------------------------------
# builders

def build_scalar_fn(d: dict):
    fam = d["family"]
    if fam == "constant":
        return ConstantFn(d.get("value", 1.0))
    if fam == "affine":
        return ClippedAffineFn(d.get("intercept", 0.0), d.get("slope", 0.0))
    if fam == "gaussian":
        return GaussianBumpFn(d["peak"], d["center"], d["width"])
    if fam == "tabulated":
        return TabulatedFn(tuple(d["nodes"]), tuple(d["values"]))
    raise ConfigError(f"unknown scalar family {fam!r}")


def _build_control_term(d: dict, dim: int):
    kind = d["type"]
    if kind == "affine":
        coeffs = tuple(d.get("coeffs", (0.0,) * dim))
        if len(coeffs) != dim:
            raise ConfigError("control-term coefficients do not match box dim")
        return AffineControlTerm(d.get("const", 0.0), coeffs)
    lin = tuple(d.get("lin", (0.0,) * dim))
    quad = tuple(d.get("quad", (0.0,) * dim))
    if len(lin) != dim or len(quad) != dim:
        raise ConfigError("control-term coefficients do not match box dim")
    return QuadraticControlTerm(d.get("const", 0.0), lin, quad)


def _build_rate(d: dict, dim: int) -> RateFunction:
    fam = d["family"]
    kernel = build_scalar_fn(d["kernel"]) if "kernel" in d else ConstantFn(1.0)
    if fam == "constant":
        core = ConstantCore(d.get("value", 0.0))
    elif fam in ("affine", "gaussian", "tabulated"):
        core = ScalarCore(build_scalar_fn(d))
    elif fam == "logistic":
        core = LogisticCore(d["scale"], d["capacity"])
    elif fam == "separable":
        core = SeparableCore(build_scalar_fn(d["profile"]),
                             _build_control_term(d["control_term"], dim))
    else:
        raise ConfigError(f"unknown rate family {fam!r}")
    return RateFunction(core, kernel)


def build_model(cfg: dict) -> ModelSpec:
    section = cfg.get("model")
    if not section:
        raise ConfigError("configuration lacks a model section")
    box_cfg = section["control_box"]
    box = Box(np.asarray(box_cfg["lower"], dtype=float),
              np.asarray(box_cfg["upper"], dtype=float))
    rates = {name: _build_rate(section["rates"][name], box.dim)
             for name in ("growth", "mortality", "birth")}
    declared = section.get("declared_lipschitz")
    if declared is None:
        declared = max(r.core.lipschitz(box) for r in rates.values()) * 1.0001
    return ModelSpec(growth=rates["growth"], mortality=rates["mortality"],
                     birth=rates["birth"], control_box=box,
                     declared_lipschitz=float(declared))


def build_measure(cfg: dict) -> DiscreteMeasure:
    section = cfg.get("initial_measure")
    if not section:
        raise ConfigError("configuration lacks an initial measure")
    if "atoms" in section:
        atoms = section["atoms"]
        return normalize(atoms["points"], atoms["masses"])
    if "histogram" in section:
        hist = section["histogram"]
        w = float(hist["cell_width"])
        masses = np.asarray(hist["masses"], dtype=float)
        centers = (np.arange(len(masses)) + 0.5) * w
        return normalize(centers, masses)
    raise ConfigError("initial measure needs atoms or a histogram")


def build_discretization(cfg: dict) -> Discretization:
    d = cfg.get("discretization")
    if not d:
        raise ConfigError("configuration lacks a discretization section")
    return Discretization(n=d["n"], dt=d["dt"], substeps=d.get("substeps", 10),
                          dx=d.get("dx"), placement=d.get("placement",
                                                          "grid-left"))


def build_control(cfg: dict, box: Box) -> Control:
    section = cfg.get("control")
    horizon = cfg.get("horizon")
    if not section or horizon is None:
        raise ConfigError("configuration lacks a control section or horizon")
    if "breakpoints" in section and "values" in section:
        ctrl = Control(np.asarray(section["breakpoints"], dtype=float),
                       np.asarray(section["values"], dtype=float))
        if abs(ctrl.horizon - horizon) > 1e-9 * max(1.0, horizon):
            raise ConfigError("control breakpoints do not end at the horizon")
        if ctrl.dim != box.dim:
            raise ConfigError("control dimension does not match the box")
        for row in ctrl.values:
            if not box.contains(row):
                raise ConfigError("control value outside the admissible box")
        return ctrl
    raise ConfigError("control section needs breakpoints and values")


def _build_running(d: dict):
    fam = d["family"]
    if fam == "time_polynomial":
        return TimePolynomialCost(tuple(d.get("coeffs", (0.0,))))
    if fam == "linear":
        return LinearCost(d.get("const", 0.0), tuple(d.get("y_coeffs", ())),
                          tuple(d.get("u_coeffs", ())), d.get("mb_coeff", 0.0))
    if fam == "quadratic_control":
        return QuadraticControlCost(tuple(d["weights"]), tuple(d["targets"]))
    if fam == "quadratic_moment":
        return QuadraticMomentCost(tuple(d["weights"]), tuple(d["targets"]))
    if fam == "welfare_income":
        return WelfareIncomeCost(float(d.get("discount", 0.0)))
    if fam == "sum":
        return SumCost(tuple(_build_running(t) for t in d["terms"]))
    raise ConfigError(f"unknown running-cost family {fam!r}")


def build_cost(cfg: dict) -> CostSpec:
    section = cfg.get("cost")
    if not section:
        raise ConfigError("configuration lacks a cost section")
    moments = tuple(build_scalar_fn(m) for m in section.get("moments", ()))
    return CostSpec(moments=moments, running=_build_running(section["running"]),
                    boundary_channel=section.get("boundary_channel", True),
                    enforce_nonnegative=section.get("enforce_nonnegative",
                                                    False))


def build_settings(cfg: dict, seed_override=None) -> OptimizerSettings:
    d = dict(cfg.get("optimizer", {}))
    if seed_override is not None:
        d["seed"] = seed_override
    allowed = {"method", "initial_step", "tv_mode", "huber_epsilon",
               "max_iterations", "tolerance", "multistart", "seed"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown optimizer settings {sorted(unknown)}")
    return OptimizerSettings(**d)


def build_levels(cfg: dict):
    section = cfg.get("refine")
    if not section:
        raise ConfigError("configuration lacks a refine section")
    levels = []
    for item in section["levels"]:
        levels.append(RefinementLevel(
            n=item["n"], dt=item["dt"], pieces=item["pieces"],
            substeps=item.get("substeps", 10), dx=item.get("dx"),
            placement=item.get("placement", "grid-left")))
    return levels
