"""Stage, barrier, terminal, and horizon costs for the navigation task."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import PlantModel

Policy = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TaskSpec:
    """Goal-reaching task with a single disc obstacle.

    Weighted terms are quadratic forms z' W z.  The hard obstacle penalty
    uses closed-ball membership, so a point exactly on the boundary counts
    as inside.
    """

    goal: np.ndarray
    q_weight: np.ndarray
    r_weight: np.ndarray
    obstacle_center: np.ndarray
    obstacle_radius: float
    obstacle_penalty: float = 1000.0
    barrier_scale: float = 5000.0
    barrier_decay: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        object.__setattr__(self, "q_weight", np.asarray(self.q_weight, dtype=float))
        object.__setattr__(self, "r_weight", np.asarray(self.r_weight, dtype=float))
        object.__setattr__(self, "obstacle_center",
                           np.asarray(self.obstacle_center, dtype=float))
        for name in ("q_weight", "r_weight"):
            w = getattr(self, name)
            if not np.allclose(w, w.T):
                raise ValueError(f"{name} must be symmetric")
            if np.any(np.linalg.eigvalsh(w) < -1e-12):
                raise ValueError(f"{name} must be positive semidefinite")
        if self.obstacle_radius <= 0.0 or self.obstacle_penalty <= 0.0:
            raise ValueError("obstacle radius and penalty must be positive")
        if self.barrier_scale <= 0.0 or self.barrier_decay <= 0.0:
            raise ValueError("barrier scale and decay must be positive")

    def in_obstacle(self, p: np.ndarray) -> bool:
        return bool(np.linalg.norm(np.asarray(p)[:2] - self.obstacle_center)
                    <= self.obstacle_radius)


@dataclass(frozen=True)
class CostFunction:
    """Stage cost plus terminal cost, both non-negative."""

    stage: Callable[[np.ndarray, np.ndarray], float]
    terminal: Callable[[np.ndarray], float]


def _quadratic(task: TaskSpec, x: np.ndarray, u: np.ndarray) -> float:
    dp = np.asarray(x, dtype=float)[:2] - task.goal
    u = np.asarray(u, dtype=float)
    return float(dp @ task.q_weight @ dp + u @ task.r_weight @ u)


def stage_cost(x: np.ndarray, u: np.ndarray, task: TaskSpec) -> float:
    """Tracking plus input cost plus the hard obstacle penalty."""
    c = _quadratic(task, x, u)
    if task.in_obstacle(x):
        c += task.obstacle_penalty
    return c


def edge_stage_cost(x: np.ndarray, u: np.ndarray, task: TaskSpec) -> float:
    """Tracking plus input cost plus the smooth exponential obstacle barrier."""
    d = float(np.linalg.norm(np.asarray(x)[:2] - task.obstacle_center))
    barrier = task.barrier_scale * np.exp(-task.barrier_decay * (d - task.obstacle_radius))
    return _quadratic(task, x, u) + float(barrier)


def terminal_cost(x: np.ndarray, task: TaskSpec, onboard: Policy,
                  model: PlantModel, horizon: int = 50) -> float:
    """Cost-to-go proxy: the onboard feedback law rolled out ``horizon`` steps.

    Truncation leaves a residual equal to the stage cost at the rollout end,
    so the one-step terminal inequality holds up to exactly that tail term.
    """
    if horizon < 1:
        raise ValueError("terminal rollout horizon must be at least 1")
    state = np.asarray(x, dtype=float).copy()
    total = 0.0
    for _ in range(horizon):
        u = onboard(state)
        total += stage_cost(state, u, task)
        state = model.nominal_step(state, u)
    return total


def finite_horizon_cost(x: np.ndarray, inputs: np.ndarray, cost: CostFunction,
                        model: PlantModel, horizon: int | None = None) -> float:
    """Nominal rollout cost of an input sequence plus the terminal cost."""
    inputs = np.asarray(inputs, dtype=float)
    if horizon is not None and len(inputs) != horizon:
        raise ValueError("sequence length differs from the horizon")
    state = np.asarray(x, dtype=float).copy()
    total = 0.0
    for u in inputs:
        total += cost.stage(state, u)
        state = model.nominal_step(state, u)
    return total + cost.terminal(state)


def build_cost_function(task: TaskSpec, model: PlantModel, onboard: Policy,
                        terminal_horizon: int = 50) -> CostFunction:
    """Bundle the task's stage cost with the onboard-rollout terminal cost."""
    return CostFunction(
        stage=lambda x, u: stage_cost(x, u, task),
        terminal=lambda x: terminal_cost(x, task, onboard, model, terminal_horizon),
    )
