"""JSON run configurations: schema, parsing and emission."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .errors import SchemaError, ValidationError
from .integrator import IntegrationConfig
from .model import EmdenSpec

__all__ = ["CONFIG_SCHEMA", "OutputOptions", "RunConfig", "parse_config", "emit_config", "spec_from_dict"]

_NUMBER = {"type": "number"}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 1}

_SPEC_PROPERTIES = {
    "system": {"enum": ["A", "BProof", "BTheorem", "P"]},
    "N": {"type": "integer", "minimum": 1},
    "theta": _NUMBER,
    "xi": _NUMBER,
    "kappa1": _NUMBER,
    "kappa2": _NUMBER,
    "alpha": _NUMBER,
    "d": _VECTOR,
    "a0": _VECTOR,
    "a1": _VECTOR,
}
_SPEC_REQUIRED = ["system", "N", "theta", "xi", "a0", "a1"]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": _SPEC_REQUIRED + ["t_end"],
    "properties": {
        **_SPEC_PROPERTIES,
        "t_end": _NUMBER,
        "rtol": _NUMBER,
        "atol": _NUMBER,
        "blowup_floor": _NUMBER,
        "escape_ceiling": _NUMBER,
        "max_steps": {"type": "integer"},
        "dense_dt": {"type": ["number", "null"]},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "prefix": {"type": "string", "minLength": 1, "pattern": "^[^/\\\\]+$"},
                "plot": {"type": "boolean"},
                "log_scale": {"type": "boolean"},
                "n_samples": {"type": "integer", "minimum": 1},
                "time_slices": {"type": "integer", "minimum": 1},
                "method": {"enum": ["Analytic", "FiniteDifference"]},
                "seed": {"type": "integer", "minimum": 0},
                "mass_times": {"type": "array", "items": _NUMBER},
            },
        },
        "lyapunov": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["t_span", "renorm_dt"],
            "properties": {"t_transient": _NUMBER, "t_span": _NUMBER, "renorm_dt": _NUMBER},
        },
        "grid": {
            "type": ["array", "null"],
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": _SPEC_REQUIRED,
                "properties": _SPEC_PROPERTIES,
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


@dataclass(frozen=True)
class OutputOptions:
    prefix: str = "run"
    plot: bool = True
    log_scale: bool = False
    n_samples: int = 100
    time_slices: int = 10
    method: str = "Analytic"
    seed: int = 0
    mass_times: tuple = ()

    def to_dict(self):
        return {
            "prefix": self.prefix,
            "plot": self.plot,
            "log_scale": self.log_scale,
            "n_samples": self.n_samples,
            "time_slices": self.time_slices,
            "method": self.method,
            "seed": self.seed,
            "mass_times": list(self.mass_times),
        }


@dataclass(frozen=True)
class RunConfig:
    spec: EmdenSpec
    integration: IntegrationConfig
    outputs: OutputOptions = field(default_factory=OutputOptions)
    lyapunov: Optional[tuple] = None  # (t_transient, t_span, renorm_dt)
    grid: Optional[tuple] = None  # sweep specs; None selects the default grid

    @property
    def lyapunov_options(self):
        if self.lyapunov is None:
            return None
        return dict(zip(("t_transient", "t_span", "renorm_dt"), self.lyapunov))

    def to_dict(self):
        out = spec_to_dict(self.spec)
        out.update(self.integration.to_dict())
        out["outputs"] = self.outputs.to_dict()
        out["lyapunov"] = self.lyapunov_options
        out["grid"] = None if self.grid is None else [spec_to_dict(s) for s in self.grid]
        return out


def spec_to_dict(spec: EmdenSpec):
    d = spec.to_dict()
    return {key: d[key] for key in ("system", "N", "theta", "xi", "kappa1", "kappa2", "alpha", "d", "a0", "a1")}


def spec_from_dict(doc) -> EmdenSpec:
    n = doc["N"]
    return EmdenSpec(
        system=doc["system"],
        dimension=n,
        theta=doc["theta"],
        xi=doc["xi"],
        kappa1=doc.get("kappa1", 0.0),
        kappa2=doc.get("kappa2", 0.0),
        alpha=doc.get("alpha", 1.0),
        drifts=doc.get("d"),
        a0=doc["a0"],
        a1=doc["a1"],
    )


def _schema_path(error):
    parts = ["$"]
    for key in error.absolute_path:
        parts.append(f"[{key}]" if isinstance(key, int) else f".{key}")
    return "".join(parts)


def parse_config(text) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Raises :class:`SchemaError` (with the JSON path of the offending field)
    when the document does not match :data:`CONFIG_SCHEMA`, and
    :class:`ValidationError` when the values break a model invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise SchemaError(_schema_path(best), best.message)
    for key, value in doc.items():
        if isinstance(value, float) and not math.isfinite(value):
            raise ValidationError(f"{key} must be finite")
    spec = spec_from_dict(doc)
    integration = IntegrationConfig(
        t_end=float(doc["t_end"]),
        rtol=float(doc.get("rtol", 1e-9)),
        atol=float(doc.get("atol", 1e-12)),
        blowup_floor=float(doc.get("blowup_floor", 1e-8)),
        escape_ceiling=float(doc.get("escape_ceiling", 1e12)),
        max_steps=int(doc.get("max_steps", 10**7)),
        dense_dt=None if doc.get("dense_dt") is None else float(doc["dense_dt"]),
    )
    integration.check_against(spec)
    out = dict(doc.get("outputs", {}))
    if "mass_times" in out:
        out["mass_times"] = tuple(float(t) for t in out["mass_times"])
    outputs = OutputOptions(**out)
    lyap = doc.get("lyapunov")
    if lyap is not None:
        lyap = (float(lyap.get("t_transient", 0.0)), float(lyap["t_span"]), float(lyap["renorm_dt"]))
        if not (lyap[0] >= 0.0 and lyap[1] > 0.0 and lyap[2] > 0.0):
            raise ValidationError("lyapunov needs t_transient >= 0, t_span > 0 and renorm_dt > 0")
    grid = doc.get("grid")
    if grid is not None:
        grid = tuple(spec_from_dict(item) for item in grid)
    return RunConfig(spec, integration, outputs, lyap, grid)


def emit_config(config: RunConfig) -> str:
    """Canonical JSON text for ``config``; :func:`parse_config` inverts it."""
    return json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"
