"""Declarative study configuration (JSON) with schema validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .analysis import DecaySettings
from .mesh import Grid, build_grid
from .problem import FAMILY_KINDS, FamilySpec
from .solver import SolverConfig


class ConfigError(ValueError):
    """Unreadable, malformed or schema-invalid configuration."""


_NUM_OR_LIST = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}
_INT_OR_LIST = {"oneOf": [{"type": "integer", "minimum": 3},
                          {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1}]}
_SEQUENCE = {"oneOf": [
    {"type": "array", "items": {"type": "number"}, "minItems": 1},
    {"type": "object", "required": ["start", "ratio", "count"], "additionalProperties": False,
     "properties": {"start": {"type": "number"}, "ratio": {"type": "number"},
                    "count": {"type": "integer", "minimum": 1}}},
]}
_FIELD_SPEC = {"type": "object", "required": ["kind"],
               "properties": {"kind": {"type": "string"}, "params": {"type": "object"}}}

SCHEMA = {
    "type": "object",
    "required": ["grid", "family"],
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "required": ["dim", "lo", "hi", "n_nodes"],
            "additionalProperties": False,
            "properties": {
                "dim": {"type": "integer", "minimum": 1, "maximum": 2},
                "lo": _NUM_OR_LIST,
                "hi": _NUM_OR_LIST,
                "n_nodes": _INT_OR_LIST,
                "unbounded_truncation": {"type": "boolean"},
            },
        },
        "family": {
            "oneOf": [
                {"type": "object", "required": ["file"], "additionalProperties": False,
                 "properties": {"file": {"type": "string"}}},
                {"type": "object", "required": ["kind", "p", "V"],
                 "properties": {
                     "kind": {"enum": list(FAMILY_KINDS)},
                     "p": {"type": "number", "exclusiveMinimum": 2},
                     "V": _FIELD_SPEC,
                     "n_start": {"type": "integer"},
                     "eps": _SEQUENCE,
                     "lambda": _SEQUENCE,
                     "q_plus": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]},
                     "q_minus": {"type": "number"},
                     "center": _NUM_OR_LIST,
                     "centers": {"type": "array"},
                     "Q": _FIELD_SPEC,
                     "K": {"type": "object", "additionalProperties": False,
                           "properties": {"amplitude": {"type": "number"},
                                          "radius_factor": {"type": "number"}}},
                     "members": {"type": "array"},
                 }},
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "max_backtracks": {"type": "integer", "minimum": 1},
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "energy_tol": {"type": "number", "exclusiveMinimum": 0},
                "residual_tol": {"type": "number", "exclusiveMinimum": 0},
                "armijo": {"type": "number"},
                "shrink": {"type": "number"},
                "step0": {"type": "number", "exclusiveMinimum": 0},
                "abs_retraction": {"type": "boolean"},
                "initializers": {"type": "array", "items": {"enum": ["bump", "symmetric", "random"]},
                                 "minItems": 1},
                "enforce_symmetry": {"type": "boolean"},
                "seed": {"type": "integer"},
                "jobs": {"type": "integer", "minimum": 1},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "q_list": {"type": "array", "items": {"oneOf": [{"type": "number", "minimum": 1},
                                                                {"const": "inf"}]}},
                "rate_slack": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "decay": {"type": "object", "required": ["R", "lambda"], "additionalProperties": False,
                          "properties": {"R": {"type": "number", "minimum": 0},
                                         "lambda": {"type": "number", "exclusiveMinimum": 0}}},
                "split_eps": {"type": "number", "exclusiveMinimum": 0},
                "threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "probe_eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "output": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


@dataclass
class AnalysisSettings:
    eps_list: list[float] | None = None
    q_list: list = field(default_factory=lambda: [2, 4, "inf"])
    rate_slack: float = 0.1
    decay: dict | None = None
    split_eps: float | None = None
    threshold: float = 0.9
    probe_eps: list[float] | None = None

    def decay_settings(self) -> DecaySettings | None:
        if self.decay is None:
            return None
        return DecaySettings(float(self.decay["R"]), float(self.decay["lambda"]), self.rate_slack)

    def to_dict(self) -> dict:
        d = {"q_list": list(self.q_list), "rate_slack": self.rate_slack, "threshold": self.threshold}
        for key in ("eps_list", "decay", "split_eps", "probe_eps"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d


@dataclass
class StudyConfig:
    grid: dict
    family: FamilySpec
    solver: SolverConfig
    analysis: AnalysisSettings
    output: str = "out"
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd, compare=False)
    family_file: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "StudyConfig":
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"schema error at {path}: {exc.message}") from None
        fam = raw["family"]
        family_file = None
        if "file" in fam:
            family_file = fam["file"]
            fam = _read_json(base_dir / family_file)
            try:
                jsonschema.validate({"grid": raw["grid"], "family": fam}, SCHEMA)
            except jsonschema.ValidationError as exc:
                raise ConfigError(f"schema error in {family_file}: {exc.message}") from None
        seed = int(raw.get("seed", 0))
        solver = dict(raw.get("solver", {}))
        solver.setdefault("seed", seed)
        if "initializers" in solver:
            solver["initializers"] = tuple(solver["initializers"])
        try:
            family = FamilySpec.from_dict(fam)
            solver_cfg = SolverConfig.from_dict(solver)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(copy.deepcopy(raw["grid"]), family, solver_cfg, AnalysisSettings(**raw.get("analysis", {})),
                   raw.get("output", "out"), seed, base_dir, family_file)

    def to_dict(self) -> dict:
        fam = {"file": self.family_file} if self.family_file else self.family.to_dict()
        solver = self.solver.to_dict()
        solver["initializers"] = list(solver["initializers"])
        return {"grid": copy.deepcopy(self.grid), "family": fam, "solver": solver,
                "analysis": self.analysis.to_dict(), "output": self.output, "seed": self.seed}

    def build_grid(self) -> Grid:
        g = self.grid
        return build_grid(g["dim"], g["lo"], g["hi"], g["n_nodes"], g.get("unbounded_truncation", False))

    def build_family(self):
        return self.family.build(self.build_grid(), self.base_dir)

    def with_overrides(self, seed: int | None = None, jobs: int | None = None, output: str | None = None):
        cfg = copy.copy(self)
        if seed is not None:
            cfg.seed = seed
            cfg.solver = SolverConfig.from_dict({**self.solver.to_dict(), "seed": seed})
        if jobs is not None:
            cfg.solver = SolverConfig.from_dict({**cfg.solver.to_dict(), "jobs": jobs})
        if output is not None:
            cfg.output = output
        return cfg


def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None


def load_config(path) -> StudyConfig:
    path = Path(path)
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return StudyConfig.from_dict(raw, path.parent)
