"""JSON run configuration: schema validation and typed access."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .market import MarketModel
from .utility import PiecewiseUtility

REQUIRED_BLOCKS = {
    "validate": ("market", "utility"),
    "grid": ("market", "utility", "grid"),
    "verify": ("market", "utility", "grid"),
    "simulate": ("market", "utility", "simulate"),
}


class ConfigError(Exception):
    """Unreadable, unparsable or schema-violating configuration."""


def load_schema() -> dict:
    text = resources.files("dynlagrange").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def axis_values(spec) -> np.ndarray:
    """A grid axis: an explicit list or ``{start, stop, num, spacing}``."""
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if spec.get("spacing", "linear") == "log":
        if spec["start"] <= 0 or spec["stop"] <= 0:
            raise ConfigError("log-spaced axis needs positive start and stop")
        return np.geomspace(spec["start"], spec["stop"], spec["num"])
    return np.linspace(spec["start"], spec["stop"], spec["num"])


@dataclass
class RunConfig:
    market: dict
    utility: dict
    grid: dict | None = None
    simulate: dict | None = None
    output: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_dict(cls, doc: dict, command: str | None = None) -> "RunConfig":
        try:
            jsonschema.validate(doc, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        if command is not None:
            missing = [b for b in REQUIRED_BLOCKS[command] if b not in doc]
            if missing:
                raise ConfigError(f"'{command}' needs config blocks: {', '.join(missing)}")
        return cls(doc["market"], doc["utility"], doc.get("grid"), doc.get("simulate"),
                   doc.get("output", {}), doc.get("quadrature", {}), doc.get("workers", 1))

    def build_market(self) -> MarketModel:
        return MarketModel.from_dict(self.market)

    def build_utility(self) -> PiecewiseUtility:
        return PiecewiseUtility.from_dict(self.utility)

    @property
    def t_values(self) -> np.ndarray:
        return axis_values(self.grid["t"])

    @property
    def x_values(self) -> np.ndarray:
        return axis_values(self.grid["x"])

    @property
    def formats(self) -> list:
        return self.output.get("formats", ["csv"])


def load_config(path, command: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(doc, command)
