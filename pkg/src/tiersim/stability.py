"""Runtime verification of the per-tick decrease of the selection cost.

The monitor checks V(k+1) - V(k) <= -stage(k) + slack along a finished run,
where the slack is the sampled-constant bound sum_{i=0}^{N-2} L_C * L_fx^i
* eps.  Constants are estimated by sampled finite differences: they are
lower bounds of the true Lipschitz constants and are used for reporting
thresholds only, never for control decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import PlantModel


@dataclass(frozen=True)
class SamplingBox:
    """Axis-aligned sampling region for states and inputs."""

    state_low: np.ndarray
    state_high: np.ndarray
    input_low: np.ndarray
    input_high: np.ndarray

    def __post_init__(self):
        for name in ("state_low", "state_high", "input_low", "input_high"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.state_high <= self.state_low) or \
           np.any(self.input_high <= self.input_low):
            raise ValueError("degenerate sampling region")


@dataclass(frozen=True)
class AssumptionEstimates:
    lipschitz_state: float      # transition map w.r.t. the state
    lipschitz_input: float      # transition map w.r.t. the input
    lipschitz_stage: float      # stage cost w.r.t. the state
    deviation: float            # max one-step disturbance deviation

    def decrease_slack(self, horizon: int) -> float:
        """Per-tick decrease allowance implied by the sampled constants."""
        powers = self.lipschitz_state ** np.arange(horizon - 1)
        return float(self.lipschitz_stage * powers.sum() * self.deviation)


def estimate_constants(model: PlantModel, stage: Callable[[np.ndarray, np.ndarray], float],
                       region: SamplingBox, samples: int, rng: np.random.Generator,
                       disturbance_bounds: Optional[np.ndarray] = None,
                       stage_exclude: Optional[Callable[[np.ndarray], bool]] = None
                       ) -> AssumptionEstimates:
    """Sampled finite-difference estimates of the smoothness constants.

    ``stage_exclude`` skips stage-cost pairs touching a discontinuity (the
    hard obstacle indicator); the transition-map estimates use all samples.
    The deviation estimate pins the disturbance at its bound corners.
    """
    if samples < 2:
        raise ValueError("need at least two samples")

    def draw_state():
        return rng.uniform(region.state_low, region.state_high)

    def draw_input():
        return rng.uniform(region.input_low, region.input_high)

    l_fx = l_fu = l_c = 0.0
    for _ in range(samples):
        x1, x2 = draw_state(), draw_state()
        u = draw_input()
        dx = float(np.linalg.norm(x1 - x2))
        if dx > 1e-12:
            ratio = float(np.linalg.norm(
                model.nominal_step(x1, u) - model.nominal_step(x2, u))) / dx
            l_fx = max(l_fx, ratio)
            if stage_exclude is None or not (stage_exclude(x1) or stage_exclude(x2)):
                l_c = max(l_c, abs(stage(x1, u) - stage(x2, u)) / dx)
        x = draw_state()
        u1, u2 = draw_input(), draw_input()
        du = float(np.linalg.norm(u1 - u2))
        if du > 1e-12:
            l_fu = max(l_fu, float(np.linalg.norm(
                model.nominal_step(x, u1) - model.nominal_step(x, u2))) / du)

    deviation = 0.0
    if disturbance_bounds is not None:
        bounds = np.asarray(disturbance_bounds, dtype=float)
        for _ in range(min(samples, 256)):
            x, u = draw_state(), draw_input()
            w = bounds * rng.choice((-1.0, 1.0), size=bounds.shape)
            deviation = max(deviation, float(np.linalg.norm(
                model.step(x, u, w) - model.nominal_step(x, u))))

    return AssumptionEstimates(lipschitz_state=l_fx, lipschitz_input=l_fu,
                               lipschitz_stage=l_c, deviation=deviation)


@dataclass
class LyapunovTrace:
    """Per-tick selection cost, applied stage cost, and obstacle adjacency."""

    vn: np.ndarray
    stage: np.ndarray
    obstacle: np.ndarray

    def __post_init__(self):
        self.vn = np.asarray(self.vn, dtype=float)
        self.stage = np.asarray(self.stage, dtype=float)
        self.obstacle = np.asarray(self.obstacle, dtype=bool)
        if not (len(self.vn) == len(self.stage) == len(self.obstacle)):
            raise ValueError("trace columns differ in length")
        if not (np.all(np.isfinite(self.vn)) and np.all(np.isfinite(self.stage))):
            raise ValueError("non-finite trace entries")

    def residuals(self) -> np.ndarray:
        """residual(k) = V(k+1) - V(k) + stage(k); one entry per transition."""
        return self.vn[1:] - self.vn[:-1] + self.stage[:-1]


@dataclass(frozen=True)
class DecreaseReport:
    checked: int
    violations: int
    max_residual: float
    slack: float
    tolerance: float
    obstacle_ticks: int
    obstacle_violations: int
    nominal_monotone: bool

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "violations": self.violations,
            "max_residual": self.max_residual,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "obstacle_ticks": self.obstacle_ticks,
            "obstacle_violations": self.obstacle_violations,
            "nominal_monotone": self.nominal_monotone,
        }


def check_decrease(trace: LyapunovTrace, estimates: Optional[AssumptionEstimates],
                   horizon: int, tolerance: float = 1e-7) -> DecreaseReport:
    """Flag every transition whose residual exceeds slack + tolerance.

    Transitions adjacent to the obstacle (indicator active at either end)
    are reported separately, since the stage cost is discontinuous there.
    With no disturbance the slack is zero and the report doubles as a
    monotonicity certificate for the selection cost.
    """
    if len(trace.vn) < 2:
        raise ValueError("trace must cover at least two ticks")
    slack = 0.0 if estimates is None else estimates.decrease_slack(horizon)
    res = trace.residuals()
    adjacent = trace.obstacle[:-1] | trace.obstacle[1:]
    free = ~adjacent
    over = res > slack + tolerance
    free_res = res[free]
    return DecreaseReport(
        checked=int(free.sum()),
        violations=int((over & free).sum()),
        max_residual=float(free_res.max()) if free_res.size else float("-inf"),
        slack=slack,
        tolerance=tolerance,
        obstacle_ticks=int(adjacent.sum()),
        obstacle_violations=int((over & adjacent).sum()),
        nominal_monotone=bool(np.all(trace.vn[1:][free] <= trace.vn[:-1][free] + tolerance)),
    )
