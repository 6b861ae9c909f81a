"""Run configuration shared by the CLI and the experiment scripts."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ValidationError

MODELS = ("model1", "model2", "model3", "model4", "logit", "sp")
SOLVERS = ("msa", "pl", "gp", "agp")
SOURCES = ("sioux-falls", "tntp", "grid", "cyclic")
DEFAULT_STEP = {"gp": 1e-5, "agp": 1e-4}


@dataclass
class RunConfig:
    source: str = "sioux-falls"
    net: str = ""
    trips: str = ""
    grid_k: int = 1
    grid_flow: float = 10000.0
    grid_decay: float = 0.1
    model: str = "model3"
    theta: float = 1.0
    loading: str = "mta"
    solver: str = "pl"
    step_size: float = 0.0  # 0 picks the solver default
    k_min: int = 50
    xi: float = 0.25
    backtracking: bool = True
    tol: float = 1e-8
    line_search_tol: float = 1e-3
    max_iter: int = 250
    demand_multiplier: float = 1.0
    bpr_coefficient: float = 1.0
    seed: int = 0
    draws: int = 100
    variance_scale: float = 0.3
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        def need(ok, msg):
            if not ok:
                raise ValidationError(msg)

        need(self.source in SOURCES, f"source must be one of {SOURCES}")
        need(self.model in MODELS, f"model must be one of {MODELS}")
        need(self.loading in ("mta", "dial"), "loading must be mta or dial")
        need(self.solver in SOLVERS, f"solver must be one of {SOLVERS}")
        if self.source == "tntp":
            need(bool(self.net) and bool(self.trips), "tntp source needs net and trips paths")
        need(self.grid_k >= 1, "grid_k must be at least 1")
        for name in ("grid_flow", "grid_decay", "theta", "xi", "line_search_tol", "variance_scale",
                     "bpr_coefficient"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        need(self.xi < 1, "xi must be below 1")
        need(self.step_size >= 0, "step_size must be non-negative")
        need(self.tol >= 0, "tol must be non-negative")
        need(self.demand_multiplier >= 0, "demand_multiplier must be non-negative")
        for name in ("k_min", "max_iter"):
            need(getattr(self, name) >= 0, f"{name} must be non-negative")
        need(self.draws >= 1, "draws must be at least 1")
        return self

    @property
    def step(self) -> float:
        return self.step_size if self.step_size > 0 else DEFAULT_STEP.get(self.solver, 1e-4)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        """Build from string or typed values, converting to the field types."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValidationError(f"unknown config key {key!r}")
            kwargs[key] = _convert(known[key].type, raw, key)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        """Read ``key = value`` lines (``#`` comments allowed) and apply overrides."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        text = Path(path).read_text(encoding="utf-8")
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ValidationError(f"bad config file {path}: {exc}") from exc
        values = dict(parser["run"])
        values.update(overrides or {})
        return cls.from_mapping(values)


def _convert(kind, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if kind in (bool, "bool"):
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return raw.strip()
