"""Scenario configuration and its JSON form.

A scenario file is a flat JSON object. Unknown keys are rejected. Example::

    {"mu": 0.1, "alpha_db": -10, "dark": 1e-5, "N": 4}

Keys:
    mu                 mean pairs per occupied pulse, 0 < mu < 1
    alpha | alpha_db   per-arm transmittance, linear or in dB (not both)
    dark               dark-click probability per slot per recipient
    N                  fixed packet dimension (shorthand for dims=[N])
    dims               list of dimensions, or {"min": a, "max": b} (uniform)
    dim_weights        optional weights for ``dims``
    scheme             randomized_dimension | fixed_dimension_random_gap
    gap_extra_mean     mean number of extra vacant slots (fixed-dimension scheme)
    pair_statistics    poisson | single
    session_slots      slots per session
    trials             number of independent sessions
    seed               master seed
    test_fraction      share of sifted key bits sacrificed for QBER
    significance       per-test false-alarm level of the rate monitors
    detection_margin   cheat-rate threshold in units of ``dark``
    detection_monitor  enable the detection-slot monitor
    adversary          {"kind": ..., "n": ..., "rate_match": ..., "target_rate": ...}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .adversary import KINDS, AdversaryModel
from .analytics import from_db, to_db
from .channel import ChannelConfig
from .source import PAIR_STATISTICS, SCHEMES, SourceConfig, expected_signal_fraction


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class MonitorConfig:
    significance: float = 1e-6
    detection_margin: float = 1.0
    detection_monitor: bool = True

    def __post_init__(self):
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")
        if self.detection_margin < 0:
            raise ValueError("detection_margin must be >= 0")


@dataclass(frozen=True)
class Scenario:
    source: SourceConfig = field(default_factory=SourceConfig)
    channel: ChannelConfig = field(default_factory=lambda: ChannelConfig(alpha=0.1))
    adversary: Optional[AdversaryModel] = None
    session_slots: int = 1_000_000
    trials: int = 1
    seed: int = 0
    test_fraction: float = 0.1
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.session_slots < max(self.source.dims) + 2:
            raise ValueError("session must hold at least one packet")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")

    @property
    def S(self):
        return expected_signal_fraction(self.source)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "mu": self.source.mu,
            "alpha": self.channel.alpha,
            "dark": self.channel.dark,
            "dims": list(self.source.dims),
            "scheme": self.source.scheme,
            "pair_statistics": self.source.pair_statistics,
            "session_slots": self.session_slots,
            "trials": self.trials,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "significance": self.monitor.significance,
            "detection_margin": self.monitor.detection_margin,
            "detection_monitor": self.monitor.detection_monitor,
        }
        if self.source.dim_weights is not None:
            d["dim_weights"] = list(self.source.dim_weights)
        if self.source.scheme == "fixed_dimension_random_gap":
            d["gap_extra_mean"] = self.source.gap_extra_mean
        if self.adversary is not None:
            d["adversary"] = {
                "kind": self.adversary.kind,
                "n": self.adversary.n,
                "rate_match": self.adversary.rate_match,
                "target_rate": self.adversary.target_rate,
            }
        return d


_NUM = {"type": "number"}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "alpha_db": {"type": "number", "maximum": 0},
        "dark": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "N": {"type": "integer", "minimum": 2},
        "dims": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min", "max"],
                    "properties": {
                        "min": {"type": "integer", "minimum": 2},
                        "max": {"type": "integer", "minimum": 2},
                    },
                },
            ]
        },
        "dim_weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "scheme": {"enum": list(SCHEMES)},
        "gap_extra_mean": {"type": "number", "minimum": 0},
        "pair_statistics": {"enum": list(PAIR_STATISTICS)},
        "session_slots": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "significance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "detection_margin": {"type": "number", "minimum": 0},
        "detection_monitor": {"type": "boolean"},
        "adversary": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "n": {"type": "integer", "minimum": 1},
                "rate_match": {"type": "boolean"},
                "target_rate": {"type": ["number", "null"], "minimum": 0},
            },
        },
    },
}


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts += extra[:1]
    return ".".join(parts) or "<root>"


def scenario_from_dict(data: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, _error_path(err))
    if "alpha" in data and "alpha_db" in data:
        raise ScenarioError("give alpha or alpha_db, not both", "alpha_db")
    if "N" in data and "dims" in data:
        raise ScenarioError("give N or dims, not both", "dims")

    dims = data.get("dims", [data.get("N", 4)])
    if isinstance(dims, dict):
        if dims["max"] < dims["min"]:
            raise ScenarioError("max < min", "dims.max")
        dims = list(range(dims["min"], dims["max"] + 1))
    alpha = from_db(data["alpha_db"]) if "alpha_db" in data else data.get("alpha", 0.1)
    adv = data.get("adversary")
    try:
        source = SourceConfig(
            mu=data.get("mu", 0.1),
            dims=tuple(dims),
            dim_weights=tuple(data["dim_weights"]) if "dim_weights" in data else None,
            scheme=data.get("scheme", "randomized_dimension"),
            gap_extra_mean=data.get("gap_extra_mean", 1.0),
            pair_statistics=data.get("pair_statistics", "poisson"),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), "source") from None
    try:
        channel = ChannelConfig(alpha=alpha, dark=data.get("dark", 0.0))
    except ValueError as exc:
        raise ScenarioError(str(exc), "alpha") from None
    try:
        adversary = None if adv is None else AdversaryModel(
            kind=adv["kind"],
            n=adv.get("n", 1),
            rate_match=adv.get("rate_match", True),
            target_rate=adv.get("target_rate"),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), "adversary") from None
    try:
        monitor = MonitorConfig(
            significance=data.get("significance", 1e-6),
            detection_margin=data.get("detection_margin", 1.0),
            detection_monitor=data.get("detection_monitor", True),
        )
        return Scenario(
            source=source,
            channel=channel,
            adversary=adversary,
            session_slots=data.get("session_slots", 1_000_000),
            trials=data.get("trials", 1),
            seed=data.get("seed", 0),
            test_fraction=data.get("test_fraction", 0.1),
            monitor=monitor,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path, overrides: Optional[dict] = None) -> Scenario:
    """Read a scenario file and apply ``overrides`` (which win over file values)."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ScenarioError(f"no such file: {p}", "path")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "path") from None
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object", "<root>")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "alpha_db":
            data.pop("alpha", None)
        elif key == "alpha":
            data.pop("alpha_db", None)
        elif key == "N":
            data.pop("dims", None)
        data[key] = value
    return scenario_from_dict(data)


def describe(scenario: Scenario) -> dict:
    d = scenario.to_dict()
    d["alpha_db"] = to_db(scenario.channel.alpha)
    d["S"] = float(scenario.S)
    return d
