"""Scenario files (YAML) and their validated in-memory form.

An empty file yields the default scenario: 50 nodes in 1000 m x 1000 m,
20 CBR flows of 640-byte packets at 2..10 packets/s, 900 s runs over five
seeds, 1 s probes and a 10 s measurement window.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .metrics import MetricKind


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ScenarioConfig:
    nodes: int = 50
    area: tuple = (1000.0, 1000.0)
    tx_range: float = 250.0
    cs_range: float = 550.0
    nominal_rates: Any = 2e6                  # bits/s, or list of [m, n, rate]
    loss_model: dict = field(default_factory=lambda: {"kind": "ramp", "max_loss": 0.2})
    flows: Any = 20                           # count, or list of [src, dst]
    packet_size: int = 640
    rates: list = field(default_factory=lambda: [2, 4, 6, 8, 10])
    duration: float = 900.0
    traffic_start: float = 30.0
    probe_interval: float = 1.0
    window: float = 10.0
    full_dump_period: float = 15.0
    metric: list = field(default_factory=lambda: ["etx", "ibetx"])
    mode: str = "consistent"
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    positions: list | None = None
    dsdv: dict = field(default_factory=dict)
    mac: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if isinstance(self.metric, str):
            self.metric = [self.metric]
        self.area = tuple(float(a) for a in self.area)
        if not isinstance(self.nodes, int) or self.nodes < 2:
            raise ConfigError("nodes", "need an integer >= 2")
        if len(self.area) != 2 or min(self.area) <= 0:
            raise ConfigError("area", "must be [width, height] with positive sides")
        if self.tx_range <= 0:
            raise ConfigError("tx_range", "must be positive")
        if self.cs_range < self.tx_range:
            raise ConfigError("cs_range", "must be >= tx_range")
        for name in ("duration", "probe_interval", "window", "full_dump_period"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if self.traffic_start < 0 or self.traffic_start >= self.duration:
            raise ConfigError("traffic_start", "must lie in [0, duration)")
        ratio = self.window / self.probe_interval
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("window", "must be a multiple of probe_interval")
        if self.packet_size <= 0:
            raise ConfigError("packet_size", "must be positive")
        if not self.rates or any(r <= 0 for r in self.rates):
            raise ConfigError("rates", "need a non-empty list of positive packet rates")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")
        try:
            [MetricKind.parse(m) for m in self.metric]
        except ValueError as exc:
            raise ConfigError("metric", str(exc)) from None
        if self.mode not in ("consistent", "literal"):
            raise ConfigError("mode", "must be 'consistent' or 'literal'")
        if isinstance(self.nominal_rates, (int, float)):
            if self.nominal_rates <= 0:
                raise ConfigError("nominal_rates", "must be positive")
        elif not all(len(r) == 3 and r[2] > 0 for r in self.nominal_rates):
            raise ConfigError("nominal_rates", "per-link entries are [m, n, rate>0]")
        kind = self.loss_model.get("kind")
        if kind == "ramp":
            if not 0 <= self.loss_model.get("max_loss", 0.0) <= 1:
                raise ConfigError("loss_model", "max_loss must lie in [0, 1]")
        elif kind == "explicit":
            for row in self.loss_model.get("table", []):
                if len(row) != 4 or not all(0 <= p <= 1 for p in row[2:]):
                    raise ConfigError("loss_model", "explicit rows are [m, n, loss_f, loss_r]")
        else:
            raise ConfigError("loss_model", "kind must be 'ramp' or 'explicit'")
        if isinstance(self.flows, int):
            if self.flows < 1:
                raise ConfigError("flows", "need at least one flow")
        elif not all(len(p) == 2 and p[0] != p[1] for p in self.flows):
            raise ConfigError("flows", "explicit flows are [src, dst] with src != dst")
        if self.positions is not None:
            if len(self.positions) != self.nodes:
                raise ConfigError("positions", f"expected {self.nodes} entries")
            w, h = self.area
            for x, y in self.positions:
                if not (0 <= x <= w and 0 <= y <= h):
                    raise ConfigError("positions", f"({x}, {y}) outside area")

    def metric_kinds(self) -> list[MetricKind]:
        kinds = []
        for m in self.metric:
            k = MetricKind.parse(m)
            if k is MetricKind.IBETX_CONSISTENT and self.mode == "literal":
                k = MetricKind.IBETX_LITERAL
            kinds.append(k)
        return kinds

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["area"] = list(self.area)
        return d


FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def config_from_dict(data: dict | None) -> ScenarioConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - FIELDS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    return ScenarioConfig(**data)


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<root>", "scenario file must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: ScenarioConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
