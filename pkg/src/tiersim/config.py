"""Scenario configuration: YAML schema, validation, hashing, bundled default."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .network import DelayDistribution, degenerate, distribution_for_loss

MODES = ("tiered", "ideal-cloud")


@dataclass
class LinkConfig:
    """One remote link: delay family, spread, loss target, compensation depth.

    The location parameter is derived from the loss target at the budget
    unless an explicit ``mean`` is given.  ``loss: 1.0`` disables the link.
    """

    enabled: bool = True
    family: str = "lognormal"
    std: float = 0.5
    loss: Optional[float] = None
    mean: Optional[float] = None
    budget: int = 4

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("link budget must be at least one tick")
        if self.loss is not None and self.loss >= 1.0:
            self.enabled = False
        if self.enabled and self.loss is None and self.mean is None:
            raise ValueError("link needs either a loss target or an explicit mean")

    def distribution(self) -> DelayDistribution:
        if self.mean is not None:
            if self.family == "degenerate":
                return degenerate(self.mean)
            return DelayDistribution(self.family, rate=1.0 / max(self.mean, 1e-12),
                                     mean=self.mean, std=self.std)
        return distribution_for_loss(self.family, self.std, float(self.loss),
                                     self.budget)


@dataclass
class ScenarioConfig:
    # vehicle
    sampling_period: float = 0.01
    rear_axle: float = 0.5
    front_axle: float = 0.5
    # task
    goal: tuple = (150.0, 0.0)
    position_weights: tuple = (0.1, 0.1)
    input_weights: tuple = (1.5, 1.5)
    obstacle_center: tuple = (70.0, 6.0)
    obstacle_radius: float = 6.0
    obstacle_penalty: float = 1000.0
    barrier_scale: float = 5000.0
    barrier_decay: float = 0.1
    # controllers
    horizon: int = 25
    onboard_gain: float = 0.009
    onboard_lookahead: Optional[float] = None
    waypoint_margin: Optional[float] = None
    arc_advance: float = 0.4
    terminal_horizon: int = 50
    cloud_iterations: int = 200
    edge_iterations: int = 50
    edge_speed_weight: float = 0.1
    edge_slip_trust: float = 10.0
    edge_accel_trust: float = 0.0
    step_tolerance: float = 1e-8
    solver_tail: int = 150
    solver_barrier_scale: float = 4000.0
    solver_barrier_decay: float = 10.0
    # links
    cloud_link: LinkConfig = field(default_factory=LinkConfig)
    edge_link: LinkConfig = field(
        default_factory=lambda: LinkConfig(family="normal", std=1.0, loss=0.8, budget=2))
    # disturbance
    disturbance_kind: str = "none"
    disturbance_bounds: tuple = (0.5, 0.5, 0.1, 0.1)
    # run
    initial_state: tuple = (0.0, 0.0, 0.0, 0.0)
    ticks: int = 1400
    runs: int = 100
    seed: int = 0
    mode: str = "tiered"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ticks < 1 or self.runs < 1:
            raise ValueError("tick and run counts must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        for link, name in ((self.cloud_link, "cloud"), (self.edge_link, "edge")):
            if link.budget > self.horizon:
                raise ValueError(f"{name} budget exceeds the horizon")
        if self.disturbance_kind not in ("none", "uniform"):
            raise ValueError("disturbance kind must be 'none' or 'uniform'")

    # -- serialisation ---------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("goal", "position_weights", "input_weights", "obstacle_center",
                    "disturbance_bounds", "initial_state"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        raw = dict(raw)
        for key in ("cloud_link", "edge_link"):
            if key in raw and isinstance(raw[key], dict):
                raw[key] = LinkConfig(**raw[key])
        for key in ("goal", "position_weights", "input_weights", "obstacle_center",
                    "disturbance_bounds", "initial_state"):
            if key in raw:
                raw[key] = tuple(float(v) for v in raw[key])
        return cls(**raw)

    def replace(self, **updates) -> "ScenarioConfig":
        d = self.to_dict()
        for key, value in updates.items():
            if key not in d:
                raise KeyError(f"unknown config field {key!r}")
            d[key] = value
        return ScenarioConfig.from_dict(d)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def _flatten(nested: dict) -> dict:
    """Map the grouped YAML layout onto the flat dataclass fields."""
    flat: dict = {}
    groups = {
        "vehicle": ("sampling_period", "rear_axle", "front_axle"),
        "task": ("goal", "position_weights", "input_weights", "obstacle_center",
                 "obstacle_radius", "obstacle_penalty", "barrier_scale",
                 "barrier_decay"),
        "controllers": ("horizon", "onboard_gain", "onboard_lookahead",
                        "waypoint_margin", "arc_advance",
                        "terminal_horizon", "cloud_iterations", "edge_iterations",
                        "edge_speed_weight", "edge_slip_trust", "edge_accel_trust",
                        "step_tolerance", "solver_tail", "solver_barrier_scale",
                        "solver_barrier_decay"),
        "run": ("initial_state", "ticks", "runs", "seed"),
    }
    for group, keys in groups.items():
        section = nested.get(group, {})
        for key in keys:
            if key in section:
                flat[key] = section[key]
    links = nested.get("links", {})
    if "cloud" in links:
        flat["cloud_link"] = LinkConfig(**links["cloud"])
    if "edge" in links:
        flat["edge_link"] = LinkConfig(**links["edge"])
    dist = nested.get("disturbance", {})
    if "kind" in dist:
        flat["disturbance_kind"] = dist["kind"]
    if "bounds" in dist:
        flat["disturbance_bounds"] = dist["bounds"]
    if "mode" in nested:
        flat["mode"] = nested["mode"]
    return flat


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        nested = yaml.safe_load(fh)
    if not isinstance(nested, dict):
        raise ValueError(f"config file {path} does not hold a mapping")
    return ScenarioConfig.from_dict(_flatten(nested))


def paper_config() -> ScenarioConfig:
    """The bundled default scenario (paper.cfg)."""
    with resources.as_file(resources.files("tiersim") / "paper.cfg") as p:
        return load_config(p)
