"""Experiment configuration: JSON schema, parsing and canonical serialization.

A config describes the environment, the transition matrices, an optional
potential, group and labeling, the experiment name and its parameters.
:func:`canonicalize` fills defaults and normalizes shorthands so that
``serialize(parse(text))`` is a fixed point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

import jsonschema
import numpy as np

from .env_sft import Environment, RandomSFT, build_cyclic_environment, validate_sft
from .errors import InvalidArgument, SchemaError, StructuralError
from .extension import SkewLabeling
from .groups import Group, group_from_spec
from .potential import LocallyConstantPotential

EXPERIMENTS = ("entropy", "gap", "kesten", "folner", "variational", "gibbs-check", "operator-radius")
CONFIG_VERSION = 1

_int_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 1}}}
_state_ref = {"type": ["integer", "string"]}
_element = {"type": ["string", "integer", "array"]}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "name": {"type": "string"},
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "period": {"type": "integer", "minimum": 1},
                "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "shift": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "sft": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matrices": {"type": "array", "items": _int_matrix, "minItems": 1},
                "matrix": _int_matrix,
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["range"],
            "properties": {
                "range": {"type": "integer", "minimum": 0},
                "default": {"type": "number"},
                "entries": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["state", "word", "value"],
                        "properties": {
                            "state": _state_ref,
                            "word": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "value": {"type": "number"},
                        },
                    },
                },
            },
        },
        "group": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["lattice", "free", "cyclic"]},
                "params": {"type": "object", "additionalProperties": {"type": "integer"}},
            },
        },
        "labeling": {
            "oneOf": [
                {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["state", "symbol", "element"],
                        "properties": {"state": _state_ref, "symbol": {"type": "integer", "minimum": 0}, "element": _element},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["uniform"],
                    "properties": {"uniform": {"type": "array", "items": _element}},
                },
            ]
        },
        "experiment": {"enum": list(EXPERIMENTS)},
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "symbol": {"type": "integer", "minimum": 0},
                "state": _state_ref,
                "window": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "n_max": {"type": "integer", "minimum": 1},
                "truncation": {"type": "integer", "minimum": 0},
                "truncations": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "correction": {"type": ["number", "null"]},
                "correction_ab": {"type": ["number", "null"]},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "budget": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "step_distribution": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                "folner_set": {"type": "array", "items": _element},
                "folner_radii": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "folner_test": {"type": "array", "items": _element},
                "xi0": {"type": "array", "items": {"type": "number"}},
                "markov_truncation": {"type": "integer", "minimum": 0},
                "seed_radius": {"type": "integer", "minimum": 0},
                "gibbs_length": {"type": "integer", "minimum": 1},
                "certify_n": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A validated, resolved experiment description."""

    data: dict
    env: Environment | None
    sft: RandomSFT | None
    potential: LocallyConstantPotential | None
    group: Group | None
    labeling: SkewLabeling | None

    @property
    def experiment(self) -> str | None:
        return self.data.get("experiment")

    @property
    def params(self) -> dict:
        return self.data["parameters"]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = json.loads(json.dumps(self.data))
        for key, val in kw.items():
            if val is None:
                continue
            if key == "experiment":
                data["experiment"] = val
            else:
                data["parameters"][key] = list(val) if isinstance(val, tuple) else val
        return parse(data)


def _load(source) -> dict:
    if isinstance(source, Mapping):
        return json.loads(json.dumps(source))
    try:
        return json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from exc


def _state_index(env: Environment, ref) -> int:
    try:
        return env.state_index(ref)
    except Exception as exc:
        raise SchemaError(str(exc)) from exc


def _canonical_system(raw: dict, out: dict) -> int:
    envd = raw.get("environment", {})
    sft_raw = raw["sft"]
    if "states" in envd:
        m = len(envd["states"])
        out["environment"] = {
            "states": list(envd["states"]),
            "weights": [float(w) for w in envd.get("weights", [1.0 / m] * m)],
            "shift": list(envd.get("shift", [(i + 1) % m for i in range(m)])),
        }
    else:
        m = int(envd.get("period", len(sft_raw["matrices"]) if "matrices" in sft_raw else 1))
        out["environment"] = {"period": m}
    if "matrices" in sft_raw and "matrix" in sft_raw:
        raise SchemaError("give either 'matrices' or 'matrix', not both")
    if "matrices" in sft_raw:
        mats = sft_raw["matrices"]
    elif "matrix" in sft_raw:
        mats = [sft_raw["matrix"]] * m
    else:
        raise SchemaError("sft needs 'matrices' or 'matrix'")
    if len(mats) != m:
        raise SchemaError(f"{len(mats)} transition matrices for {m} environment states")
    out["sft"] = {"matrices": [[list(row) for row in A] for A in mats]}
    pot = raw.get("potential", {"range": 0, "entries": []})
    out["potential"] = {
        "range": pot["range"],
        "default": float(pot.get("default", 0.0)),
        "entries": sorted(
            ({"state": e["state"], "word": list(e["word"]), "value": float(e["value"])} for e in pot.get("entries", [])),
            key=lambda e: (str(e["state"]), e["word"]),
        ),
    }
    return m


def canonicalize(source) -> dict:
    """Validated config dict with defaults filled and shorthands expanded."""
    raw = _load(source)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"schema violation at {path}: {exc.message}") from exc
    out: dict[str, Any] = {"version": CONFIG_VERSION}
    if "name" in raw:
        out["name"] = raw["name"]
    m = 0
    if "sft" in raw:
        m = _canonical_system(raw, out)
    else:
        # group-only experiments (kesten, folner) need no base system
        for key in ("environment", "potential", "labeling"):
            if key in raw:
                raise SchemaError(f"'{key}' given without an 'sft'")
    G = None
    if "group" in raw:
        out["group"] = {"type": raw["group"]["type"], "params": dict(sorted(raw["group"].get("params", {}).items()))}
        try:
            G = group_from_spec(out["group"])
        except InvalidArgument as exc:
            raise SchemaError(str(exc)) from exc

    def elem(x):
        if G is None:
            return x
        try:
            return G.serialize(G.parse(x))
        except InvalidArgument as exc:
            raise SchemaError(str(exc)) from exc

    if "labeling" in raw:
        lab = raw["labeling"]
        if isinstance(lab, dict):
            row = lab["uniform"]
            lab = [{"state": k, "symbol": s, "element": el} for k in range(m) for s, el in enumerate(row)]
        out["labeling"] = sorted(
            ({"state": e["state"], "symbol": e["symbol"], "element": elem(e["element"])} for e in lab),
            key=lambda e: (str(e["state"]), e["symbol"]),
        )
    if "experiment" in raw:
        out["experiment"] = raw["experiment"]
    params = dict(raw.get("parameters", {}))
    for key in ("folner_set", "folner_test"):
        if key in params:
            params[key] = [elem(x) for x in params[key]]
    if "step_distribution" in params:
        params["step_distribution"] = dict(sorted((elem(k), float(v)) for k, v in params["step_distribution"].items()))
    params.setdefault("symbol", 0)
    params.setdefault("seed", 0)
    out["parameters"] = dict(sorted(params.items()))
    return out


def parse(source) -> ExperimentConfig:
    """Validate, canonicalize and build the domain objects."""
    data = canonicalize(source)
    if "sft" not in data:
        group = group_from_spec(data["group"]) if "group" in data else None
        return ExperimentConfig(data, None, None, None, group, None)
    e = data["environment"]
    try:
        if "period" in e:
            env = build_cyclic_environment(e["period"])
        else:
            env = Environment(tuple(e["states"]), np.asarray(e["weights"]), np.asarray(e["shift"]))
        sft = RandomSFT(env, tuple(np.asarray(A, dtype=np.int64).reshape(len(A), -1) for A in data["sft"]["matrices"]))
        problems = validate_sft(sft)
    except StructuralError:
        raise
    except Exception as exc:
        raise SchemaError(f"invalid system description: {exc}") from exc
    if problems:
        raise StructuralError("invalid random SFT: " + "; ".join(map(str, problems)))
    p = data["potential"]
    entries = [(_state_index(env, x["state"]), x["word"], x["value"]) for x in p["entries"]]
    potential = LocallyConstantPotential.from_entries(sft, p["range"], entries, p["default"])
    group = group_from_spec(data["group"]) if "group" in data else None
    labeling = None
    if "labeling" in data:
        if group is None:
            raise SchemaError("a labeling needs a group")
        rows: list[list] = [[None] * sft.alphabet_size(k) for k in range(env.size)]
        for x in data["labeling"]:
            k = _state_index(env, x["state"])
            s = x["symbol"]
            if s >= sft.alphabet_size(k):
                raise SchemaError(f"labeling symbol {s} not in the alphabet of state {k}")
            rows[k][s] = x["element"]
        missing = [(k, s) for k, row in enumerate(rows) for s, v in enumerate(row) if v is None]
        if missing:
            raise SchemaError(f"labeling does not cover (state, symbol) pairs {missing}")
        labeling = SkewLabeling.build(sft, group, rows)
    return ExperimentConfig(data, env, sft, potential, group, labeling)


def serialize(config: ExperimentConfig | Mapping) -> str:
    """Canonical JSON text (sorted keys, two-space indent, trailing newline)."""
    data = config.data if isinstance(config, ExperimentConfig) else canonicalize(config)
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
