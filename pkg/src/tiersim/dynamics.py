"""Plant models: kinematic bicycle, disturbances, and open-loop prediction.

State vectors are plain float64 arrays ``[px, py, heading, speed]`` and
inputs are ``[slip, accel]``.  The module is pure: every function returns a
fresh array and never mutates its arguments, so concurrent simulation runs
can share the same model objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Index constants for bicycle state components.
PX, PY, HEADING, SPEED = 0, 1, 2, 3

StateMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


def bicycle_state(px: float, py: float, heading: float, speed: float) -> np.ndarray:
    return np.array([px, py, heading, speed], dtype=float)


def bicycle_input(slip: float, accel: float) -> np.ndarray:
    return np.array([slip, accel], dtype=float)


def slip_from_steering(steering: float, front_axle: float, rear_axle: float) -> float:
    """Map a steering angle to the slip angle used as the direct input.

    The slip angle always lands in (-pi/2, pi/2), the range of arctan.
    """
    return float(np.arctan(rear_axle / (rear_axle + front_axle) * np.tan(steering)))


def bicycle_step(x: np.ndarray, u: np.ndarray, sampling_period: float,
                 rear_axle: float) -> np.ndarray:
    """One discrete step of the kinematic bicycle model.

    Raises ValueError on a non-finite state: propagating NaN through a long
    rollout silently poisons every cost downstream.
    """
    if sampling_period <= 0.0:
        raise ValueError("sampling period must be positive")
    if rear_axle <= 0.0:
        raise ValueError("rear axle length must be positive")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite state")
    slip, accel = float(u[0]), float(u[1])
    heading, speed = x[HEADING], x[SPEED]
    return np.array([
        x[PX] + sampling_period * speed * np.cos(heading + slip),
        x[PY] + sampling_period * speed * np.sin(heading + slip),
        heading + sampling_period * speed / rear_axle * np.sin(slip),
        speed + sampling_period * accel,
    ])


def apply_disturbance(x_next: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Additive disturbance after the nominal step."""
    x_next = np.asarray(x_next, dtype=float)
    w = np.asarray(w, dtype=float)
    if x_next.shape != w.shape:
        raise ValueError(
            f"dimension mismatch: state {x_next.shape} vs disturbance {w.shape}")
    return x_next + w


@dataclass(frozen=True)
class DisturbanceModel:
    """Per-component bounded disturbance, sampled uniformly or disabled.

    Every sample w satisfies |w_i| <= bounds_i.
    """

    kind: str = "none"               # "none" or "uniform"
    bounds: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        if self.kind not in ("none", "uniform"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if np.any(self.bounds < 0.0):
            raise ValueError("disturbance bounds must be non-negative")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "none":
            return np.zeros_like(self.bounds)
        return rng.uniform(-self.bounds, self.bounds)

    def deviation_bound(self) -> float:
        """Euclidean bound on the one-step deviation from the nominal model."""
        return float(np.linalg.norm(self.bounds))


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time plant: transition map plus its disturbance-free twin."""

    n: int
    m: int
    sampling_period: float
    nominal_step: StateMap
    step: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def bicycle_model(sampling_period: float = 0.01, rear_axle: float = 0.5) -> PlantModel:
    """Kinematic bicycle as a PlantModel with additive disturbance."""

    def nominal(x, u):
        return bicycle_step(x, u, sampling_period, rear_axle)

    def step(x, u, w):
        return apply_disturbance(nominal(x, u), w)

    return PlantModel(n=4, m=2, sampling_period=sampling_period,
                      nominal_step=nominal, step=step)


def predict(model: PlantModel, x: np.ndarray, inputs: np.ndarray, steps: int) -> np.ndarray:
    """Nominal open-loop prediction: apply the first ``steps`` inputs.

    predict(model, x, U, 0) == x; consecutive predictions compose exactly,
    i.e. predicting a steps then d more from the remaining inputs equals a
    single (a+d)-step prediction.
    """
    inputs = np.asarray(inputs, dtype=float)
    if steps < 0:
        raise ValueError("step count must be non-negative")
    if steps > len(inputs):
        raise ValueError("horizon exceeded")
    state = np.asarray(x, dtype=float).copy()
    for i in range(steps):
        state = model.nominal_step(state, inputs[i])
    return state
