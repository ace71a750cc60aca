"""Cloud, edge, and on-board controllers sharing the sequence interface.

Every controller maps a state to a length-N input sequence.  The cloud tier
runs single-shooting gradient descent on a smoothed objective and falls back
to its warm start whenever that does not pay off under the true selection
cost.  The edge tier solves one dense quadratic program built from a single
linearization.  The on-board tier rolls out a waypoint-following feedback
law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .costs import TaskSpec
from .dynamics import PlantModel, bicycle_model

# Direct slip input: wrapped direction offsets, so magnitudes up to pi are
# meaningful (reverse motion); the steering-angle map stays within arctan range.
SLIP_LIMIT = math.pi


@dataclass
class SolverBudget:
    max_iterations: int = 200
    step_tolerance: float = 1e-8
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.step_tolerance <= 0.0:
            raise ValueError("step_tolerance must be positive")


def _diag_or_raise(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.allclose(w, np.diag(np.diag(w))):
        raise ValueError(f"{name} must be diagonal for the compiled controllers")
    return np.diag(w)


def build_kernel_params(task: TaskSpec, sampling_period: float, rear_axle: float,
                        onboard_gain: float, waypoint_margin: float,
                        arc_advance: float = 0.4, slip_limit: float = SLIP_LIMIT,
                        solver_barrier_scale: float = 4000.0,
                        solver_barrier_decay: float = 10.0,
                        lookahead: float = math.inf,
                        hold_radius: float = 2e-4) -> np.ndarray:
    """Pack task and vehicle parameters for the jitted kernels."""
    return K.pack_params(
        sampling_period, rear_axle, task.goal,
        _diag_or_raise(task.q_weight, "q_weight"),
        _diag_or_raise(task.r_weight, "r_weight"),
        task.obstacle_center, task.obstacle_radius, task.obstacle_penalty,
        task.barrier_scale, task.barrier_decay,
        onboard_gain, waypoint_margin, arc_advance, slip_limit,
        solver_barrier_scale, solver_barrier_decay, lookahead, hold_radius)


def waypoint_routine(p: np.ndarray, task: TaskSpec, margin: float,
                     arc_advance: float = 0.4) -> np.ndarray:
    """Intermediate setpoint toward the goal around the inflated obstacle.

    Returns the goal when the straight segment clears the disc of radius
    r + margin; otherwise the shorter-detour tangent point advanced along
    the disc.  A position inside the inflated disc maps to its radial exit
    point.
    """
    params = build_kernel_params(task, 1.0, 1.0, 0.0, margin, arc_advance)
    wx, wy = K.waypoint(float(p[0]), float(p[1]), params)
    return np.array([wx, wy])


class OnboardController:
    """Waypoint-following state feedback rolled out over the horizon.

    The slip angle points the motion at the setpoint; the acceleration
    drives the speed toward the remaining distance with gain ``gain``.
    """

    tier = "onboard"

    def __init__(self, task: TaskSpec, horizon: int = 25, gain: float = 0.009,
                 sampling_period: float = 0.01, rear_axle: float = 0.5,
                 waypoint_margin: Optional[float] = None, arc_advance: float = 0.4,
                 slip_limit: float = SLIP_LIMIT, lookahead: float = math.inf,
                 hold_radius: float = 2e-4):
        if waypoint_margin is None:
            waypoint_margin = 0.25 * task.obstacle_radius
        self.task = task
        self.horizon = int(horizon)
        self.gain = float(gain)
        self.model: PlantModel = bicycle_model(sampling_period, rear_axle)
        self.params = build_kernel_params(task, sampling_period, rear_axle,
                                          gain, waypoint_margin, arc_advance,
                                          slip_limit, lookahead=lookahead,
                                          hold_radius=hold_radius)

    def feedback(self, x: np.ndarray) -> np.ndarray:
        slip, accel = K.onboard_input(float(x[0]), float(x[1]), float(x[2]),
                                      float(x[3]), self.params)
        return np.array([slip, accel])

    def solve(self, x: np.ndarray) -> np.ndarray:
        return K.onboard_rollout(np.asarray(x, dtype=float), self.horizon,
                                 self.params)


class EdgeController:
    """Linear MPC: one linearization about the current state at zero input.

    The exponential obstacle barrier enters through its first-order
    expansion about the warm-start trajectory, so the subproblem stays an
    unconstrained positive-definite QP solved by dense linear algebra with
    iterative refinement down to the budget's residual tolerance.  A speed
    reference (remaining distance, capped at the onboard lookahead) keeps
    the predicted deceleration profile sane despite the frozen dynamics,
    and a trust-region regularizer around the warm start keeps the slip
    channel inside the range where the frozen linearization is meaningful.
    """

    tier = "edge"
    _ridge = 1e-9

    def __init__(self, task: TaskSpec, onboard: OnboardController,
                 horizon: int = 25, budget: Optional[SolverBudget] = None,
                 sampling_period: float = 0.01, rear_axle: float = 0.5,
                 speed_weight: float = 0.1, slip_trust: float = 10.0,
                 accel_trust: float = 0.0):
        self.task = task
        self.onboard = onboard
        self.horizon = int(horizon)
        self.budget = budget if budget is not None else SolverBudget(max_iterations=50)
        self.sampling_period = float(sampling_period)
        self.rear_axle = float(rear_axle)
        self.model: PlantModel = bicycle_model(sampling_period, rear_axle)
        self.q_diag = _diag_or_raise(task.q_weight, "q_weight")
        self.r_mat = np.asarray(task.r_weight, dtype=float)
        self.speed_weight = float(speed_weight)
        self.trust_diag = np.array([float(slip_trust), float(accel_trust)])
        self.last_kkt_residual = math.nan

    def _jacobians(self, x: np.ndarray):
        T, lr = self.sampling_period, self.rear_axle
        heading, speed = float(x[2]), float(x[3])
        # u_ref = 0: slip = 0, accel = 0.
        a = np.eye(4)
        a[0, 2] = -T * speed * math.sin(heading)
        a[0, 3] = T * math.cos(heading)
        a[1, 2] = T * speed * math.cos(heading)
        a[1, 3] = T * math.sin(heading)
        b = np.zeros((4, 2))
        b[0, 0] = -T * speed * math.sin(heading)
        b[1, 0] = T * speed * math.cos(heading)
        b[2, 0] = T * speed / lr
        b[3, 1] = T
        return a, b

    def _barrier_gradient(self, p: np.ndarray) -> np.ndarray:
        d = p - self.task.obstacle_center
        dist = float(np.linalg.norm(d))
        if dist < 1e-12:
            return np.zeros(2)
        scale = -self.task.barrier_decay * self.task.barrier_scale * math.exp(
            -self.task.barrier_decay * (dist - self.task.obstacle_radius))
        return scale * d / dist

    def solve(self, x: np.ndarray, warm_start: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n, m = self.horizon, 2
        warm = warm_start if warm_start is not None else self.onboard.solve(x)
        warm = np.asarray(warm, dtype=float)

        a_mat, b_mat = self._jacobians(x)
        g_vec = self.model.nominal_step(x, np.zeros(m)) - a_mat @ x

        # Warm-start positions for the barrier expansion and speed targets.
        warm_states = K.rollout_states(x, warm, self.onboard.params)
        warm_pos = warm_states[:, :2]
        lookahead = self.onboard.params[K.P_LOOK]
        speed_ref = np.minimum(
            np.linalg.norm(warm_pos - self.task.goal, axis=1), lookahead)

        # Affine prediction x_i = free[i] + sens[i] @ U for i = 1..n.
        nu = n * m
        q_diag = self.q_diag
        goal = self.task.goal
        sens_all = np.zeros((n, 4, nu))
        free_all = np.zeros((n, 4))
        sens = np.zeros((4, nu))
        free = x.copy()
        for i in range(n):
            sens = a_mat @ sens
            sens[:, i * m:(i + 1) * m] += b_mat
            free = a_mat @ free + g_vec
            sens_all[i] = sens
            free_all[i] = free

        gpos = sens_all[:, :2, :]                       # (n, 2, nu)
        h_mat = 2.0 * np.einsum("ipk,p,ipl->kl", gpos, q_diag, gpos)
        q_vec = 2.0 * np.einsum("ipk,p,ip->k", gpos, q_diag,
                                free_all[:, :2] - goal)
        bar = np.array([self._barrier_gradient(warm_pos[i + 1])
                        for i in range(n - 1)])
        q_vec += np.einsum("ipk,ip->k", gpos[:n - 1], bar)
        if self.speed_weight > 0.0:
            gv = sens_all[:, 3, :]                      # (n, nu)
            h_mat += 2.0 * self.speed_weight * np.einsum("ik,il->kl", gv, gv)
            q_vec += 2.0 * self.speed_weight * np.einsum(
                "ik,i->k", gv, free_all[:, 3] - speed_ref[1:])
        trust = np.diag(self.trust_diag)
        for i in range(n):
            block = slice(i * m, (i + 1) * m)
            h_mat[block, block] += 2.0 * (self.r_mat + trust)
            q_vec[block] += -2.0 * self.trust_diag * warm[i]
        h_mat += 2.0 * self._ridge * np.eye(nu)

        try:
            u_flat = np.linalg.solve(h_mat, -q_vec)
        except np.linalg.LinAlgError:
            self.last_kkt_residual = math.inf
            return warm
        residual = float(np.max(np.abs(h_mat @ u_flat + q_vec)))
        for _ in range(self.budget.max_iterations):
            if residual <= self.budget.step_tolerance:
                break
            u_flat = u_flat + np.linalg.solve(h_mat, -(h_mat @ u_flat + q_vec))
            residual = float(np.max(np.abs(h_mat @ u_flat + q_vec)))
        self.last_kkt_residual = residual
        if not np.all(np.isfinite(u_flat)):
            return warm
        return u_flat.reshape(n, m)


class CloudController:
    """Nonlinear MPC by direct single shooting with projected gradient descent.

    Inside the solver the hard obstacle penalty is replaced by a sharp
    exponential skin so the gradient carries information; the returned
    sequence is whichever of the descent result and the warm start scores
    better under the true selection cost, so the warm-start contract holds
    on every solve.
    """

    tier = "cloud"

    def __init__(self, task: TaskSpec, onboard: OnboardController,
                 horizon: int = 25, budget: Optional[SolverBudget] = None,
                 sampling_period: float = 0.01, rear_axle: float = 0.5,
                 terminal_horizon: int = 50, solver_tail: int = 150,
                 solver_barrier_scale: float = 4000.0,
                 solver_barrier_decay: float = 10.0):
        self.task = task
        self.onboard = onboard
        self.horizon = int(horizon)
        self.budget = budget if budget is not None else SolverBudget(max_iterations=200)
        self.terminal_horizon = int(terminal_horizon)
        self.solver_tail = int(solver_tail)
        self.params = build_kernel_params(
            task, sampling_period, rear_axle, onboard.gain,
            onboard.params[K.P_MARGIN], onboard.params[K.P_ARC],
            onboard.params[K.P_BMAX], solver_barrier_scale, solver_barrier_decay,
            lookahead=onboard.params[K.P_LOOK],
            hold_radius=onboard.params[K.P_HOLD])
        self.fallback_count = 0

    def selection_cost(self, x: np.ndarray, inputs: np.ndarray) -> float:
        return float(K.horizon_cost(np.asarray(x, dtype=float),
                                    np.asarray(inputs, dtype=float),
                                    self.terminal_horizon, self.params))

    def solve(self, x: np.ndarray, warm_start: Optional[np.ndarray] = None,
              extra_seeds: Optional[list] = None) -> np.ndarray:
        """Descend from the best available seed and never return anything
        worse than it.  Seeds: the supplied warm start, any extra seeds, and
        the fallback rollout, so a stale warm start cannot drag the solve
        with it."""
        x = np.asarray(x, dtype=float)
        if warm_start is None:
            warm_start = self.budget.warm_start
        seeds = []
        if warm_start is not None:
            seeds.append(np.asarray(warm_start, dtype=float))
        for s in extra_seeds or ():
            seeds.append(np.asarray(s, dtype=float))
        seeds.append(self.onboard.solve(x)[:self.horizon])

        seed_seq, seed_cost = None, math.inf
        for s in seeds:
            if not np.all(np.isfinite(s)):
                continue
            c = self.selection_cost(x, s)
            if c < seed_cost:
                seed_seq, seed_cost = s, c
        candidate = K.descend(x, seed_seq, self.solver_tail,
                              self.budget.max_iterations,
                              self.budget.step_tolerance, self.params)
        if not np.all(np.isfinite(candidate)):
            self.fallback_count += 1
            return seed_seq
        if self.selection_cost(x, candidate) <= seed_cost:
            return candidate
        self.fallback_count += 1
        return seed_seq
