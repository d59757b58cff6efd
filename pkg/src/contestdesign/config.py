"""Run configuration: JSON schema, validation and construction of model objects."""

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction

import jsonschema
import numpy as np

from ._validation import ContestDesignError, to_exact
from .contest import ConstantDesign, ContestPrimitives, ThresholdDesign, TwoStepDesign
from .measures import GridDomain, GridMeasure, NoiseKernel
from .solver import BilinearSurface, ObjectiveSpec


class ConfigError(ContestDesignError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


_NUMBER = {"type": "number"}
_RATIONAL = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}]}

_LINE = {
    "type": "object",
    "oneOf": [
        {"required": ["start", "stop", "num"]},
        {"required": ["points"]},
    ],
    "properties": {
        "start": _NUMBER,
        "stop": _NUMBER,
        "num": {"type": "integer", "minimum": 1},
        "points": {"type": "array", "items": _NUMBER, "minItems": 1},
    },
    "additionalProperties": False,
}

_DOMAIN = {
    "oneOf": [
        _LINE,
        {
            "type": "object",
            "required": ["x", "y"],
            "properties": {"x": _LINE, "y": _LINE},
            "additionalProperties": False,
        },
    ]
}

_MEASURE = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["uniform", "atoms", "density", "triangular"]},
        "exact": {"type": "boolean"},
        "support": {"type": "array", "items": _NUMBER},
        "mass": {"type": "array", "items": _RATIONAL},
        "values": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "peak": _NUMBER,
    },
    "additionalProperties": False,
}

_FUNCTION = {
    "type": "object",
    "properties": {
        "family": {"enum": ["linear", "power", "affine-decreasing", "bump"]},
        "slope": _NUMBER,
        "intercept": _NUMBER,
        "p": {"type": "number", "exclusiveMinimum": 0},
        "a": _NUMBER,
        "b": _NUMBER,
        "scale": _NUMBER,
        "values": {"type": "array", "items": _RATIONAL},
    },
    "oneOf": [{"required": ["family"]}, {"required": ["values"]}],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["domain", "budget"],
    "properties": {
        "domain": _DOMAIN,
        "measure": _MEASURE,
        "budget": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "objective": _FUNCTION,
        "primitives": {
            "type": "object",
            "properties": {
                "prize_utility": {"type": "number", "exclusiveMinimum": 0},
                "cost": _FUNCTION,
            },
            "additionalProperties": False,
        },
        "kernel": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["type"],
                    "properties": {
                        "type": {"enum": ["none", "matrix", "logistic"]},
                        "rows": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
                        "scale": {"type": "number", "exclusiveMinimum": 0},
                        "performance": _LINE,
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "prior": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["measure", "weight"],
                "properties": {"measure": _MEASURE, "weight": {"type": "number", "minimum": 0}},
                "additionalProperties": False,
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "constraint": {"enum": ["equality", "inequality"]},
        "samples": {"type": "integer", "minimum": 1},
        "surface": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["designer", "product", "product-decreasing", "neg-square"]},
                "u_points": {"type": "integer", "minimum": 3},
            },
            "additionalProperties": False,
        },
        "designs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["family"],
                "properties": {
                    "family": {"enum": ["single-threshold", "constant", "two-step"]},
                    "x_low": _NUMBER,
                    "x_high": _NUMBER,
                },
                "additionalProperties": False,
            },
        },
        "compare_objective": {"enum": ["designer", "aggregate"]},
        "aggregate_objective": _FUNCTION,
        "dynamics": {
            "type": "object",
            "properties": {
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_iters": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "initial": _MEASURE,
                "tie_break": {"enum": ["lowest", "highest"]},
            },
            "additionalProperties": False,
        },
        "profile": _MEASURE,
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
    },
    "additionalProperties": False,
}


def _error_path(error):
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1]
        parts.append(missing)
    elif error.validator == "additionalProperties":
        extra = error.message.split("'")[1]
        parts.append(extra)
    return ".".join(parts) or "<root>"


def validate(raw):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = list(validator.iter_errors(raw))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_error_path(err), err.message)


def config_hash(raw):
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _rational(v):
    return Fraction(v) if isinstance(v, str) else v


def build_line(spec):
    if "points" in spec:
        return GridDomain.line(spec["points"])
    return GridDomain.linspace(spec["start"], spec["stop"], spec["num"])


def build_domain(spec):
    if "x" in spec:
        x, y = build_line(spec["x"]), build_line(spec["y"])
        return GridDomain.plane(x.points, y.points)
    return build_line(spec)


def build_measure(spec, domain, path="measure"):
    try:
        kind = spec["type"]
        if kind == "uniform":
            return GridMeasure.uniform(domain, exact=spec.get("exact", False))
        if kind == "atoms":
            if "support" not in spec or "mass" not in spec:
                raise ConfigError(path, "atoms need 'support' and 'mass'")
            mass = [_rational(m) for m in spec["mass"]]
            if spec.get("exact", False):
                mass = [to_exact(m) for m in mass]
            return GridMeasure.atoms(domain, spec["support"], mass)
        if kind == "density":
            if "values" not in spec:
                raise ConfigError(path, "density needs 'values'")
            return GridMeasure.from_density(domain, spec["values"])
        peak = spec.get("peak", 0.5)
        x = domain.points.astype(float)
        lo, hi = x.min(), x.max()
        tri = np.where(x <= peak, (x - lo) / max(peak - lo, 1e-300), (hi - x) / max(hi - peak, 1e-300))
        return GridMeasure.from_density(domain, np.clip(tri, 0.0, None) + 1e-12)
    except ConfigError:
        raise
    except (ContestDesignError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def tabulate(spec, domain, path):
    """Evaluate a builtin function family (or tabulated values) on ``domain``."""
    x = domain.points.astype(float)
    if "values" in spec:
        vals = [_rational(v) for v in spec["values"]]
        if len(vals) != domain.size:
            raise ConfigError(f"{path}.values", f"expected {domain.size} values, got {len(vals)}")
        return vals
    family = spec["family"]
    if family == "linear":
        return spec.get("intercept", 0.0) + spec.get("slope", 1.0) * x
    if family == "power":
        return spec.get("scale", 1.0) * (x - x[0]) ** spec.get("p", 2.0)
    if family == "affine-decreasing":
        return spec.get("a", 1.0) - spec.get("b", 1.0) * x
    return spec.get("a", 4.0) * x * (1.0 - x)


@dataclass
class RunConfig:
    raw: dict
    domain: GridDomain
    measure: GridMeasure
    k: float
    objective: ObjectiveSpec | None
    primitives: ContestPrimitives | None
    prior: list
    seed: int
    constraint: str

    @property
    def hash(self):
        return config_hash(self.raw)


def load(raw):
    """Validate ``raw`` (parsed JSON) and build every model object it names."""
    validate(raw)
    try:
        domain = build_domain(raw["domain"])
    except (ContestDesignError, ValueError) as exc:
        raise ConfigError("domain", str(exc)) from exc
    measure = build_measure(raw.get("measure", {"type": "uniform"}), domain)
    k = raw["budget"]
    objective = None
    if domain.kind == "line":
        values = tabulate(raw.get("objective", {"family": "linear"}), domain, "objective")
        try:
            objective = ObjectiveSpec(domain, values)
        except (ContestDesignError, ValueError) as exc:
            raise ConfigError("objective", str(exc)) from exc
    primitives = None
    if domain.kind == "line":
        prim = raw.get("primitives", {})
        cost = np.asarray(tabulate(prim.get("cost", {"family": "power"}), domain, "primitives.cost"), dtype=float)
        kernel = build_kernel(raw.get("kernel"), domain)
        try:
            primitives = ContestPrimitives(domain, prim.get("prize_utility", 1.0), cost, kernel)
        except (ContestDesignError, ValueError) as exc:
            raise ConfigError("primitives", str(exc)) from exc
    prior = [
        (build_measure(item["measure"], domain, f"prior.{i}.measure"), item["weight"])
        for i, item in enumerate(raw.get("prior", []))
    ]
    if prior and abs(sum(w for _, w in prior) - 1.0) > 1e-12:
        raise ConfigError("prior", "weights must sum to 1")
    return RunConfig(
        raw=raw,
        domain=domain,
        measure=measure,
        k=k,
        objective=objective,
        primitives=primitives,
        prior=prior,
        seed=raw.get("seed", 0),
        constraint=raw.get("constraint", "equality"),
    )


def build_kernel(spec, domain):
    if spec is None or spec["type"] == "none":
        return None
    perf = build_line(spec["performance"]) if "performance" in spec else domain
    try:
        if spec["type"] == "logistic":
            return NoiseKernel.logistic(domain, perf, spec.get("scale", 0.1))
        if "rows" not in spec:
            raise ConfigError("kernel.rows", "matrix kernels need 'rows'")
        return NoiseKernel(domain, perf, np.asarray(spec["rows"], dtype=float))
    except ConfigError:
        raise
    except (ContestDesignError, ValueError) as exc:
        raise ConfigError("kernel", str(exc)) from exc


def build_surface(spec, cfg):
    family = spec.get("family", "designer")
    u = np.linspace(0.0, 1.0, spec.get("u_points", 51))
    if family == "designer":
        pi = cfg.objective.values.astype(float)
        return BilinearSurface(u, cfg.domain, u[:, None] * pi[None, :])
    fns = {
        "product": lambda a, t: a * t,
        "product-decreasing": lambda a, t: a * (1.0 - t),
        "neg-square": lambda a, t: -(a**2) + 0.0 * t,
    }
    return BilinearSurface.from_function(fns[family], cfg.domain, u)


def build_design(spec, k, path):
    family = spec["family"]
    if family == "single-threshold":
        return ThresholdDesign(k)
    if family == "constant":
        return ConstantDesign(k)
    if "x_low" not in spec or "x_high" not in spec:
        raise ConfigError(path, "two-step designs need 'x_low' and 'x_high'")
    try:
        return TwoStepDesign(k, spec["x_low"], spec["x_high"])
    except ContestDesignError as exc:
        raise ConfigError(path, str(exc)) from exc
