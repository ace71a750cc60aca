"""Jitted hot paths: bicycle rollouts, selection-cost evaluation, NMPC descent.

The tick loop evaluates horizon costs whose terminal term is itself a long
feedback rollout, so everything on that path is compiled with numba.  All
kernels take a flat parameter vector ``P`` built by :func:`pack_params`;
index constants below name its slots.  Formulas are shared with the pure
Python implementations in ``dynamics``/``costs``/``controllers`` and the
test suite asserts the two paths agree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Slots of the packed parameter vector.
P_T = 0        # sampling period
P_LR = 1       # rear axle length
P_GX = 2       # goal x
P_GY = 3       # goal y
P_QX = 4       # position weight x
P_QY = 5       # position weight y
P_R0 = 6       # input weight slip
P_R1 = 7       # input weight accel
P_OX = 8       # obstacle center x
P_OY = 9       # obstacle center y
P_OR = 10      # obstacle radius
P_M = 11       # hard obstacle penalty
P_EC = 12      # edge barrier boundary cost
P_EK = 13      # edge barrier decay
P_KP = 14      # onboard speed gain
P_MARGIN = 15  # waypoint safety margin (absolute, metres)
P_ARC = 16     # waypoint arc advance (radians)
P_BMAX = 17    # slip magnitude limit
P_SC = 18      # solver barrier boundary cost
P_SK = 19      # solver barrier decay
P_LOOK = 20    # onboard lookahead cap on the setpoint distance
P_HOLD = 21    # onboard hold radius: brake-only once parked this close
NPARAMS = 22


def pack_params(sampling_period, rear_axle, goal, q_diag, r_diag, obstacle_center,
                obstacle_radius, obstacle_penalty, barrier_scale, barrier_decay,
                onboard_gain, waypoint_margin, arc_advance, slip_limit,
                solver_barrier_scale, solver_barrier_decay,
                lookahead=np.inf, hold_radius=2e-4) -> np.ndarray:
    p = np.zeros(NPARAMS)
    p[P_T] = sampling_period
    p[P_LR] = rear_axle
    p[P_GX], p[P_GY] = goal
    p[P_QX], p[P_QY] = q_diag
    p[P_R0], p[P_R1] = r_diag
    p[P_OX], p[P_OY] = obstacle_center
    p[P_OR] = obstacle_radius
    p[P_M] = obstacle_penalty
    p[P_EC] = barrier_scale
    p[P_EK] = barrier_decay
    p[P_KP] = onboard_gain
    p[P_MARGIN] = waypoint_margin
    p[P_ARC] = arc_advance
    p[P_BMAX] = slip_limit
    p[P_SC] = solver_barrier_scale
    p[P_SK] = solver_barrier_decay
    p[P_LOOK] = lookahead
    p[P_HOLD] = hold_radius
    return p


@njit(cache=True)
def _wrap_pi(a):
    while a > math.pi:
        a -= 2.0 * math.pi
    while a < -math.pi:
        a += 2.0 * math.pi
    return a


@njit(cache=True)
def step_state(px, py, heading, speed, slip, accel, T, lr):
    npx = px + T * speed * math.cos(heading + slip)
    npy = py + T * speed * math.sin(heading + slip)
    nheading = heading + T * speed / lr * math.sin(slip)
    nspeed = speed + T * accel
    return npx, npy, nheading, nspeed


@njit(cache=True)
def waypoint(px, py, P):
    """Intermediate setpoint: goal if the straight path clears the inflated
    obstacle disc, else a tangent point advanced along the disc; radial exit
    point if already inside the inflated disc."""
    gx, gy = P[P_GX], P[P_GY]
    ox, oy = P[P_OX], P[P_OY]
    rr = P[P_OR] + P[P_MARGIN]

    cx, cy = px - ox, py - oy
    dp = math.hypot(cx, cy)
    if dp < rr:
        if dp < 1e-12:
            return ox + rr, oy
        return ox + rr * cx / dp, oy + rr * cy / dp

    # Segment p -> goal vs disc: distance from center to the segment.
    ux, uy = gx - px, gy - py
    seg = math.hypot(ux, uy)
    if seg < 1e-12:
        return gx, gy
    t = (-cx * ux - cy * uy) / (seg * seg)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = px + t * ux - ox
    qy = py + t * uy - oy
    if math.hypot(qx, qy) >= rr:
        return gx, gy
    if math.hypot(gx - ox, gy - oy) < rr:
        return gx, gy  # goal inside the inflated disc: aim straight, caller beware

    # Tangent points from p to the inflated disc.
    alpha = math.atan2(cy, cx)
    theta = math.acos(min(1.0, rr / dp))
    w1x = ox + rr * math.cos(alpha + theta)
    w1y = oy + rr * math.sin(alpha + theta)
    w2x = ox + rr * math.cos(alpha - theta)
    w2y = oy + rr * math.sin(alpha - theta)

    # Detour side: away from the obstacle center relative to the direct path.
    cross = ux * cy * (-1.0) - uy * cx * (-1.0)  # cross(u, center - p)
    if cross > 0.0:
        nx, ny = uy / seg, -ux / seg
    else:
        nx, ny = -uy / seg, ux / seg
    if (w1x - px) * nx + (w1y - py) * ny >= (w2x - px) * nx + (w2y - py) * ny:
        wx, wy, wang = w1x, w1y, alpha + theta
    else:
        wx, wy, wang = w2x, w2y, alpha - theta

    # Advance along the disc toward the goal so the waypoint sits strictly
    # ahead of the tangency direction.
    gang = math.atan2(gy - oy, gx - ox)
    sweep = _wrap_pi(gang - wang)
    adv = P[P_ARC]
    if sweep < 0.0:
        adv = -adv
    wang += adv
    return ox + rr * math.cos(wang), oy + rr * math.sin(wang)


@njit(cache=True)
def onboard_input(px, py, heading, speed, P):
    """Waypoint-following feedback: slip aims motion at the setpoint, the
    acceleration drives speed toward the remaining distance.

    The setpoint distance is capped at the lookahead, which bounds the
    commanded cruise speed without touching the waypoint geometry.  Once
    parked (distance plus stopping allowance inside the hold radius) the
    law only brakes; that set is absorbing, so the rollout cost settles to
    zero instead of paying alignment input cost forever."""
    wx, wy = waypoint(px, py, P)
    vx, vy = wx - px, wy - py
    if vx == 0.0 and vy == 0.0:
        return 0.0, -P[P_KP] * speed
    span = math.hypot(vx, vy)
    if span + abs(speed) / max(P[P_KP], 1e-12) <= 2.0 * P[P_HOLD]:
        return 0.0, -P[P_KP] * speed
    if span > P[P_LOOK]:
        scale = P[P_LOOK] / span
        vx *= scale
        vy *= scale
    slip = _wrap_pi(math.atan2(vy, vx) - heading)
    bmax = P[P_BMAX]
    if slip > bmax:
        slip = bmax
    elif slip < -bmax:
        slip = -bmax
    dist = math.hypot(vx, vy)
    accel = P[P_KP] * (dist - speed)
    return slip, accel


@njit(cache=True)
def stage_cost(px, py, slip, accel, P):
    dx, dy = px - P[P_GX], py - P[P_GY]
    c = P[P_QX] * dx * dx + P[P_QY] * dy * dy \
        + P[P_R0] * slip * slip + P[P_R1] * accel * accel
    if math.hypot(px - P[P_OX], py - P[P_OY]) <= P[P_OR]:
        c += P[P_M]
    return c


@njit(cache=True)
def stage_cost_smooth(px, py, slip, accel, P):
    """Solver stage cost: hard indicator replaced by an exponential skin."""
    dx, dy = px - P[P_GX], py - P[P_GY]
    c = P[P_QX] * dx * dx + P[P_QY] * dy * dy \
        + P[P_R0] * slip * slip + P[P_R1] * accel * accel
    d = math.hypot(px - P[P_OX], py - P[P_OY])
    return c + P[P_SC] * math.exp(-P[P_SK] * (d - P[P_OR]))


@njit(cache=True)
def edge_barrier(px, py, P):
    d = math.hypot(px - P[P_OX], py - P[P_OY])
    return P[P_EC] * math.exp(-P[P_EK] * (d - P[P_OR]))


@njit(cache=True)
def onboard_tail_cost(state, steps, P):
    """Total stage cost of rolling the onboard feedback ``steps`` ticks."""
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    total = 0.0
    for _ in range(steps):
        slip, accel = onboard_input(px, py, heading, speed, P)
        total += stage_cost(px, py, slip, accel, P)
        px, py, heading, speed = step_state(px, py, heading, speed, slip, accel, T, lr)
    return total


@njit(cache=True)
def onboard_rollout(state, n, P):
    """Inputs of the onboard feedback rolled n steps on the nominal model."""
    out = np.empty((n, 2))
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    for i in range(n):
        slip, accel = onboard_input(px, py, heading, speed, P)
        out[i, 0] = slip
        out[i, 1] = accel
        px, py, heading, speed = step_state(px, py, heading, speed, slip, accel, T, lr)
    return out


@njit(cache=True)
def rollout_end(state, inputs, steps, P):
    """State after applying the first ``steps`` rows of ``inputs``."""
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    for i in range(steps):
        px, py, heading, speed = step_state(
            px, py, heading, speed, inputs[i, 0], inputs[i, 1], T, lr)
    out = np.empty(4)
    out[0], out[1], out[2], out[3] = px, py, heading, speed
    return out


@njit(cache=True)
def rollout_states(state, inputs, P):
    """All states along the nominal rollout, including the start (n+1 rows)."""
    n = inputs.shape[0]
    out = np.empty((n + 1, 4))
    out[0, 0], out[0, 1], out[0, 2], out[0, 3] = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    for i in range(n):
        a, b, c, d = step_state(out[i, 0], out[i, 1], out[i, 2], out[i, 3],
                                inputs[i, 0], inputs[i, 1], T, lr)
        out[i + 1, 0], out[i + 1, 1], out[i + 1, 2], out[i + 1, 3] = a, b, c, d
    return out


@njit(cache=True)
def horizon_cost(state, inputs, h_term, P):
    """Selection cost: staged rollout of ``inputs`` plus the onboard tail."""
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    total = 0.0
    for i in range(inputs.shape[0]):
        slip, accel = inputs[i, 0], inputs[i, 1]
        total += stage_cost(px, py, slip, accel, P)
        px, py, heading, speed = step_state(px, py, heading, speed, slip, accel, T, lr)
    end = np.empty(4)
    end[0], end[1], end[2], end[3] = px, py, heading, speed
    return total + onboard_tail_cost(end, h_term, P)


@njit(cache=True)
def min_obstacle_distance(state, inputs, P):
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    best = math.hypot(px - P[P_OX], py - P[P_OY])
    for i in range(inputs.shape[0]):
        px, py, heading, speed = step_state(
            px, py, heading, speed, inputs[i, 0], inputs[i, 1], T, lr)
        d = math.hypot(px - P[P_OX], py - P[P_OY])
        if d < best:
            best = d
    return best


@njit(cache=True)
def _surrogate_cost(state, inputs, h_tail, P):
    px, py, heading, speed = state[0], state[1], state[2], state[3]
    T, lr = P[P_T], P[P_LR]
    total = 0.0
    for i in range(inputs.shape[0]):
        slip, accel = inputs[i, 0], inputs[i, 1]
        total += stage_cost_smooth(px, py, slip, accel, P)
        px, py, heading, speed = step_state(px, py, heading, speed, slip, accel, T, lr)
    end = np.empty(4)
    end[0], end[1], end[2], end[3] = px, py, heading, speed
    return total + onboard_tail_cost(end, h_tail, P)


@njit(cache=True)
def _surrogate_gradient(state, inputs, h_tail, P):
    """Adjoint gradient of the surrogate objective w.r.t. the inputs.

    Stage and dynamics derivatives are analytic; the terminal tail gradient
    uses forward differences in the four end-state components.
    """
    n = inputs.shape[0]
    T, lr = P[P_T], P[P_LR]
    xs = np.empty((n + 1, 4))
    xs[0, 0], xs[0, 1], xs[0, 2], xs[0, 3] = state[0], state[1], state[2], state[3]
    for i in range(n):
        a, b, c, d = step_state(xs[i, 0], xs[i, 1], xs[i, 2], xs[i, 3],
                                inputs[i, 0], inputs[i, 1], T, lr)
        xs[i + 1, 0], xs[i + 1, 1], xs[i + 1, 2], xs[i + 1, 3] = a, b, c, d

    lam = np.empty(4)
    base = onboard_tail_cost(xs[n], h_tail, P)
    for j in range(4):
        eps = 1e-5 * (1.0 + abs(xs[n, j]))
        pert = xs[n].copy()
        pert[j] += eps
        lam[j] = (onboard_tail_cost(pert, h_tail, P) - base) / eps

    grad = np.empty((n, 2))
    for i in range(n - 1, -1, -1):
        px, py, heading, speed = xs[i, 0], xs[i, 1], xs[i, 2], xs[i, 3]
        slip, accel = inputs[i, 0], inputs[i, 1]
        ch = math.cos(heading + slip)
        sh = math.sin(heading + slip)

        # Stage gradients (smooth barrier).
        dx, dy = px - P[P_GX], py - P[P_GY]
        gx = 2.0 * P[P_QX] * dx
        gy = 2.0 * P[P_QY] * dy
        odx, ody = px - P[P_OX], py - P[P_OY]
        dist = math.hypot(odx, ody)
        if dist > 1e-12:
            bar = -P[P_SK] * P[P_SC] * math.exp(-P[P_SK] * (dist - P[P_OR]))
            gx += bar * odx / dist
            gy += bar * ody / dist
        gslip = 2.0 * P[P_R0] * slip
        gaccel = 2.0 * P[P_R1] * accel

        # Dynamics Jacobians.
        # d(next)/d(state): rows px,py,heading,speed
        a02 = -T * speed * sh
        a03 = T * ch
        a12 = T * speed * ch
        a13 = T * sh
        a23 = T * math.sin(slip) / lr
        # d(next)/d(input)
        b00 = -T * speed * sh
        b10 = T * speed * ch
        b20 = T * speed * math.cos(slip) / lr
        b31 = T

        grad[i, 0] = gslip + b00 * lam[0] + b10 * lam[1] + b20 * lam[2]
        grad[i, 1] = gaccel + b31 * lam[3]

        l0 = gx + lam[0]
        l1 = gy + lam[1]
        l2 = a02 * lam[0] + a12 * lam[1] + lam[2]
        l3 = a03 * lam[0] + a13 * lam[1] + a23 * lam[2] + lam[3]
        lam[0], lam[1], lam[2], lam[3] = l0, l1, l2, l3
    return grad


@njit(cache=True)
def descend(state, warm, h_tail, max_iters, step_tol, P):
    """Projected gradient descent with backtracking on the surrogate cost.

    Returns the best iterate found; never worse than the warm start under
    the surrogate objective.
    """
    n = warm.shape[0]
    bmax = P[P_BMAX]
    best = warm.copy()
    best_cost = _surrogate_cost(state, best, h_tail, P)
    if not math.isfinite(best_cost):
        return warm.copy()
    cur = best.copy()
    cur_cost = best_cost
    step = 1.0
    for _ in range(max_iters):
        grad = _surrogate_gradient(state, cur, h_tail, P)
        gnorm = 0.0
        for i in range(n):
            gnorm += grad[i, 0] * grad[i, 0] + grad[i, 1] * grad[i, 1]
        gnorm = math.sqrt(gnorm)
        if gnorm < step_tol:
            break
        # Normalised step with backtracking.
        step *= 2.0
        improved = False
        for _ in range(30):
            trial = np.empty((n, 2))
            for i in range(n):
                s = cur[i, 0] - step * grad[i, 0] / gnorm
                if s > bmax:
                    s = bmax
                elif s < -bmax:
                    s = -bmax
                trial[i, 0] = s
                trial[i, 1] = cur[i, 1] - step * grad[i, 1] / gnorm
            tcost = _surrogate_cost(state, trial, h_tail, P)
            if math.isfinite(tcost) and tcost < cur_cost:
                cur = trial
                cur_cost = tcost
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if cur_cost < best_cost:
            best_cost = cur_cost
            best = cur.copy()
        if step < 1e-14:
            break
    return best
