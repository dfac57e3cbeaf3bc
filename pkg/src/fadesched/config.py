"""Experiment configuration: a single JSON document with named
distributions, channels and per-scenario sections.

Schema (see configs/ for one worked example per scenario):

    {
      "scenario": "singlehop" | "dp_verify" | "multihop",
      "distributions": {"name": {"values": [...], "probs": [...]?}},
      "channels": {"name": {"gains": "dist-name" | {...}, "gamma": 1.0,
                            "sigma2": 1.0}},
      "singlehop": {"arrival_mode", "frame_start_dist", "per_slot_dist"?,
                    "channel", "m_range": [lo, hi], "n_frames", "seed"},
      "dp_verify": {"channel", "arrival_mode", "frame_start_dist",
                    "per_slot_dist"?, "m_max", "n_points", "n_rate_points",
                    "tolerance"},
      "multihop":  {"links": [{"src", "dst", "channel"}],
                    "flows": [{"id", "src", "dst", "arrivals", "deadline"}],
                    "deadline_override": {"flow-id": [d1, ...]}?,
                    "source_mode": "per_slot" | "frame_start",
                    "n_cycles", "seed", "simulate": bool}
    }

Missing "probs" means uniform. Parsing is strict: unknown scenario names,
dangling references and invalid values raise ConfigError naming the JSON
path of the offender.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .stochastics import ChannelModel, DiscreteDistribution, ModelValidationError
from .multihop import Flow, NetworkGraph

__all__ = ["ConfigError", "ExperimentConfig"]

_SCENARIOS = ("singlehop", "dp_verify", "multihop")


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the JSON path."""


def _need(section: dict, key: str, path: str) -> Any:
    if key not in section:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return section[key]


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    data: dict

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): "
                f"{exc.msg}"
            ) from exc
        cfg = cls(data)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    # -- resolution -------------------------------------------------------

    @property
    def scenario(self) -> str:
        return self.data.get("scenario", "")

    def distribution(self, ref: Any, path: str) -> DiscreteDistribution:
        """Resolve a distribution reference (name or inline object)."""
        if isinstance(ref, str):
            table = self.data.get("distributions", {})
            if ref not in table:
                raise ConfigError(f"{path}: unknown distribution {ref!r}")
            entry, path = table[ref], f"distributions.{ref}"
        elif isinstance(ref, dict):
            entry = ref
        else:
            raise ConfigError(f"{path}: expected a name or an object")
        values = _need(entry, "values", path)
        probs = entry.get("probs")
        try:
            if probs is None:
                return DiscreteDistribution.uniform(values)
            return DiscreteDistribution(tuple(values), tuple(probs))
        except (ModelValidationError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def channel(self, ref: Any, path: str) -> ChannelModel:
        if isinstance(ref, str):
            table = self.data.get("channels", {})
            if ref not in table:
                raise ConfigError(f"{path}: unknown channel {ref!r}")
            entry, path = table[ref], f"channels.{ref}"
        elif isinstance(ref, dict):
            entry = ref
        else:
            raise ConfigError(f"{path}: expected a name or an object")
        gains = self.distribution(_need(entry, "gains", path), f"{path}.gains")
        try:
            return ChannelModel(
                gains,
                gamma=float(entry.get("gamma", 1.0)),
                sigma2=float(entry.get("sigma2", 1.0)),
            )
        except ModelValidationError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def graph(self) -> NetworkGraph:
        section = _need(self.data, "multihop", "config")
        links = _need(section, "links", "multihop")
        channels = {}
        for i, entry in enumerate(links):
            path = f"multihop.links[{i}]"
            link = (int(_need(entry, "src", path)), int(_need(entry, "dst", path)))
            channels[link] = self.channel(_need(entry, "channel", path), path)
        try:
            return NetworkGraph.from_dict(channels)
        except ModelValidationError as exc:
            raise ConfigError(f"multihop.links: {exc}") from exc

    def flows(self) -> list[Flow]:
        section = _need(self.data, "multihop", "config")
        out = []
        for i, entry in enumerate(_need(section, "flows", "multihop")):
            path = f"multihop.flows[{i}]"
            try:
                out.append(
                    Flow(
                        id=str(_need(entry, "id", path)),
                        src=int(_need(entry, "src", path)),
                        dst=int(_need(entry, "dst", path)),
                        arrivals=self.distribution(
                            _need(entry, "arrivals", path), f"{path}.arrivals"
                        ),
                        deadline=int(_need(entry, "deadline", path)),
                    )
                )
            except ModelValidationError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return out

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if self.scenario not in _SCENARIOS:
            raise ConfigError(
                f"scenario: expected one of {_SCENARIOS}, got {self.scenario!r}"
            )
        if self.scenario not in self.data:
            raise ConfigError(f"config: missing section {self.scenario!r}")
        # force-resolve every reference now so errors surface before any run
        for name in self.data.get("distributions", {}):
            self.distribution(name, f"distributions.{name}")
        for name in self.data.get("channels", {}):
            self.channel(name, f"channels.{name}")
        getattr(self, f"_validate_{self.scenario}")()

    def _arrival_pair(self, section: dict, path: str):
        mode = _need(section, "arrival_mode", path)
        if mode not in ("frame_start", "per_slot"):
            raise ConfigError(f"{path}.arrival_mode: unknown mode {mode!r}")
        self.distribution(
            _need(section, "frame_start_dist", path), f"{path}.frame_start_dist"
        )
        if mode == "per_slot":
            self.distribution(
                _need(section, "per_slot_dist", path), f"{path}.per_slot_dist"
            )

    def _validate_singlehop(self) -> None:
        s = self.data["singlehop"]
        self._arrival_pair(s, "singlehop")
        self.channel(_need(s, "channel", "singlehop"), "singlehop.channel")
        lo, hi = _need(s, "m_range", "singlehop")
        if not (1 <= int(lo) <= int(hi)):
            raise ConfigError("singlehop.m_range: need 1 <= lo <= hi")
        if int(_need(s, "n_frames", "singlehop")) < 1:
            raise ConfigError("singlehop.n_frames: must be >= 1")
        int(_need(s, "seed", "singlehop"))

    def _validate_dp_verify(self) -> None:
        s = self.data["dp_verify"]
        self._arrival_pair(s, "dp_verify")
        self.channel(_need(s, "channel", "dp_verify"), "dp_verify.channel")
        if int(_need(s, "m_max", "dp_verify")) < 1:
            raise ConfigError("dp_verify.m_max: must be >= 1")
        for key in ("n_points", "n_rate_points"):
            if int(s.get(key, 4001)) < 2:
                raise ConfigError(f"dp_verify.{key}: must be >= 2")
        if not (0.0 < float(s.get("tolerance", 0.01)) < 1.0):
            raise ConfigError("dp_verify.tolerance: must be in (0, 1)")

    def _validate_multihop(self) -> None:
        s = self.data["multihop"]
        graph = self.graph()
        flows = self.flows()
        if not flows:
            raise ConfigError("multihop.flows: need at least one flow")
        ids = [f.id for f in flows]
        if len(set(ids)) != len(ids):
            raise ConfigError("multihop.flows: duplicate flow ids")
        nodes = set(graph.nodes)
        for i, f in enumerate(flows):
            if f.src not in nodes or f.dst not in nodes:
                raise ConfigError(
                    f"multihop.flows[{i}]: endpoints not present in the graph"
                )
        override = s.get("deadline_override")
        if override is not None:
            if len(flows) != 1:
                raise ConfigError(
                    "multihop.deadline_override: only supported for a single flow"
                )
            if not isinstance(override, list) or any(
                int(d) < 1 for d in override
            ):
                raise ConfigError(
                    "multihop.deadline_override: need a list of deadlines >= 1"
                )
        if s.get("source_mode", "per_slot") not in ("per_slot", "frame_start"):
            raise ConfigError("multihop.source_mode: unknown mode")
        if int(s.get("n_cycles", 100_000)) < 2:
            raise ConfigError("multihop.n_cycles: must be >= 2")
