"""Deterministic tick loop wiring plant, channels and remote nodes, plus
Monte Carlo aggregation, scenario sweeps, and CSV/JSON outputs.

Tick order is fixed: deliver due packets, remote nodes compensate and send,
the plant gates/selects/applies and steps, then uplinks are emitted.  A run
is fully determined by (config, seed); independent runs own independent
RNG streams, so aggregation is order-independent.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .config import ScenarioConfig
from .controllers import (CloudController, EdgeController, OnboardController,
                          SolverBudget)
from .costs import TaskSpec
from .dynamics import DisturbanceModel, bicycle_model
from .network import Channel
from .plant import PlantNode
from .remote import RemoteNode
from .stability import LyapunovTrace, check_decrease

SOURCES = ("cloud", "edge", "carryover", "onboard")


@dataclass
class Trace:
    """Column-oriented per-tick log of one run."""

    tick: np.ndarray
    state: np.ndarray
    inputs: np.ndarray
    source: list
    origin: list
    gamma_cloud: np.ndarray
    gamma_edge: np.ndarray
    candidate_costs: dict      # source -> per-tick cost (nan when absent)
    vn: np.ndarray
    stage: np.ndarray
    obstacle: np.ndarray

    def residuals(self) -> np.ndarray:
        res = np.full(len(self.tick), np.nan)
        res[:-1] = self.vn[1:] - self.vn[:-1] + self.stage[:-1]
        return res


@dataclass
class RunMetrics:
    avg_stage_cost: float
    selection_fractions: dict
    cloud_origin_fraction: float
    counters: dict
    final_distance: float
    obstacle_ticks: int
    decrease: dict

    def to_dict(self) -> dict:
        return {
            "avg_stage_cost": self.avg_stage_cost,
            "selection_fractions": self.selection_fractions,
            "cloud_origin_fraction": self.cloud_origin_fraction,
            "counters": self.counters,
            "final_distance": self.final_distance,
            "obstacle_ticks": self.obstacle_ticks,
            "decrease": self.decrease,
        }


@dataclass
class Components:
    task: TaskSpec
    model: object
    disturbance: DisturbanceModel
    onboard: OnboardController
    cloud: CloudController
    edge: EdgeController
    params: np.ndarray

    def evaluate(self, x: np.ndarray, inputs: np.ndarray, h_term: int) -> float:
        return float(K.horizon_cost(np.asarray(x, dtype=float),
                                    np.asarray(inputs, dtype=float),
                                    h_term, self.params))


def build_components(cfg: ScenarioConfig) -> Components:
    task = TaskSpec(
        goal=np.asarray(cfg.goal), q_weight=np.diag(cfg.position_weights),
        r_weight=np.diag(cfg.input_weights),
        obstacle_center=np.asarray(cfg.obstacle_center),
        obstacle_radius=cfg.obstacle_radius,
        obstacle_penalty=cfg.obstacle_penalty,
        barrier_scale=cfg.barrier_scale, barrier_decay=cfg.barrier_decay)
    onboard = OnboardController(
        task, horizon=cfg.horizon, gain=cfg.onboard_gain,
        sampling_period=cfg.sampling_period, rear_axle=cfg.rear_axle,
        waypoint_margin=cfg.waypoint_margin, arc_advance=cfg.arc_advance,
        lookahead=(math.inf if cfg.onboard_lookahead is None
                   else cfg.onboard_lookahead))
    cloud = CloudController(
        task, onboard, horizon=cfg.horizon,
        budget=SolverBudget(max_iterations=cfg.cloud_iterations,
                            step_tolerance=cfg.step_tolerance),
        sampling_period=cfg.sampling_period, rear_axle=cfg.rear_axle,
        terminal_horizon=cfg.terminal_horizon, solver_tail=cfg.solver_tail,
        solver_barrier_scale=cfg.solver_barrier_scale,
        solver_barrier_decay=cfg.solver_barrier_decay)
    edge = EdgeController(
        task, onboard, horizon=cfg.horizon,
        budget=SolverBudget(max_iterations=cfg.edge_iterations,
                            step_tolerance=cfg.step_tolerance),
        sampling_period=cfg.sampling_period, rear_axle=cfg.rear_axle,
        speed_weight=cfg.edge_speed_weight, slip_trust=cfg.edge_slip_trust,
        accel_trust=cfg.edge_accel_trust)
    model = bicycle_model(cfg.sampling_period, cfg.rear_axle)
    disturbance = DisturbanceModel(kind=cfg.disturbance_kind,
                                   bounds=np.asarray(cfg.disturbance_bounds))
    return Components(task=task, model=model, disturbance=disturbance,
                      onboard=onboard, cloud=cloud, edge=edge,
                      params=onboard.params)


def _empty_trace(ticks: int) -> Trace:
    return Trace(
        tick=np.arange(ticks),
        state=np.zeros((ticks, 4)),
        inputs=np.zeros((ticks, 2)),
        source=[""] * ticks,
        origin=[""] * ticks,
        gamma_cloud=np.zeros(ticks, dtype=np.int64),
        gamma_edge=np.zeros(ticks, dtype=np.int64),
        candidate_costs={s: np.full(ticks, np.nan) for s in SOURCES},
        vn=np.zeros(ticks),
        stage=np.zeros(ticks),
        obstacle=np.zeros(ticks, dtype=bool),
    )


def run_scenario(cfg: ScenarioConfig,
                 seed: Optional[int | np.random.SeedSequence] = None
                 ) -> tuple[Trace, RunMetrics]:
    """One deterministic closed-loop run; returns the trace and its metrics."""
    comp = build_components(cfg)
    if cfg.mode == "ideal-cloud":
        return _run_ideal_cloud(cfg, comp, seed)

    ss = seed if isinstance(seed, np.random.SeedSequence) else \
        np.random.SeedSequence(cfg.seed if seed is None else seed)
    up_c_ss, down_c_ss, up_e_ss, down_e_ss, dist_ss = ss.spawn(5)

    cloud_on = cfg.cloud_link.enabled
    edge_on = cfg.edge_link.enabled
    cloud_dist = cfg.cloud_link.distribution() if cloud_on else None
    edge_dist = cfg.edge_link.distribution() if edge_on else None
    up_cloud = Channel(cloud_dist, np.random.default_rng(up_c_ss)) if cloud_on else None
    down_cloud = Channel(cloud_dist, np.random.default_rng(down_c_ss)) if cloud_on else None
    up_edge = Channel(edge_dist, np.random.default_rng(up_e_ss)) if edge_on else None
    down_edge = Channel(edge_dist, np.random.default_rng(down_e_ss)) if edge_on else None
    rng_dist = np.random.default_rng(dist_ss)

    cloud_node = RemoteNode("cloud", cfg.cloud_link.budget, comp.cloud,
                            comp.model, cfg.horizon, lineage_warm=True,
                            buffer_seed=True,
                            fast_params=comp.params) if cloud_on else None
    edge_node = RemoteNode("edge", cfg.edge_link.budget, comp.edge,
                           comp.model, cfg.horizon, warm_from_buffer=True,
                           fast_params=comp.params) if edge_on else None

    h_term = cfg.terminal_horizon
    plant = PlantNode(comp.model, comp.onboard, cfg.horizon,
                      lambda x, u_seq: comp.evaluate(x, u_seq, h_term),
                      np.asarray(cfg.initial_state, dtype=float))

    trace = _empty_trace(cfg.ticks)
    x = np.asarray(cfg.initial_state, dtype=float).copy()

    for now in range(cfg.ticks):
        # 1. deliver due packets
        if cloud_on:
            for pkt in up_cloud.deliver_due(now):
                cloud_node.receive_uplink(pkt, now)
            for pkt in down_cloud.deliver_due(now):
                plant.receive_downlink("cloud", pkt, now)
        if edge_on:
            for pkt in up_edge.deliver_due(now):
                edge_node.receive_uplink(pkt, now)
            for pkt in down_edge.deliver_due(now):
                plant.receive_downlink("edge", pkt, now)

        # 2. remote nodes compensate and send
        if cloud_on:
            pkt = cloud_node.compensate(now)
            if pkt is not None:
                down_cloud.send(pkt, now)
        if edge_on:
            pkt = edge_node.compensate(now)
            if pkt is not None:
                down_edge.send(pkt, now)

        # 3. plant: gate, select, apply, step
        gc, u_cloud = plant.gate_downlink("cloud", now) if cloud_on else (0, None)
        ge, u_edge = plant.gate_downlink("edge", now) if edge_on else (0, None)
        u, info = plant.step_selection(x, now, {"cloud": u_cloud, "edge": u_edge})

        trace.state[now] = x
        trace.inputs[now] = u
        trace.source[now] = info["source"]
        trace.origin[now] = info["origin"]
        trace.gamma_cloud[now] = gc
        trace.gamma_edge[now] = ge
        for s, c in info["costs"].items():
            trace.candidate_costs[s][now] = c
        trace.vn[now] = info["selected_cost"]
        trace.stage[now] = K.stage_cost(x[0], x[1], u[0], u[1], comp.params)
        trace.obstacle[now] = comp.task.in_obstacle(x)

        w = comp.disturbance.sample(rng_dist)
        x_next = comp.model.step(x, u, w)

        # 4. uplinks carry the measured state and the just-updated buffer
        up_pkt = plant.emit_uplink(x, now)
        if cloud_on:
            up_cloud.send(up_pkt, now)
        if edge_on:
            up_edge.send(up_pkt, now)
        x = x_next

    metrics = _metrics_from(cfg, comp, trace, plant, cloud_node, edge_node, x)
    return trace, metrics


def _run_ideal_cloud(cfg: ScenarioConfig, comp: Components, seed) -> tuple[Trace, RunMetrics]:
    """Baseline: the cloud controller applied instantly with perfect channels."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else \
        np.random.SeedSequence(cfg.seed if seed is None else seed)
    rng_dist = np.random.default_rng(ss.spawn(5)[4])
    h_term = cfg.terminal_horizon
    trace = _empty_trace(cfg.ticks)
    x = np.asarray(cfg.initial_state, dtype=float).copy()
    prev = None
    for now in range(cfg.ticks):
        if prev is None:
            warm = None
        else:
            # Receding-horizon warm start: shift and pad with the fallback law.
            end = K.rollout_end(x, prev[1:], cfg.horizon - 1, comp.params)
            pad = K.onboard_input(end[0], end[1], end[2], end[3], comp.params)
            warm = np.vstack([prev[1:], np.array(pad)[None, :]])
        seq = comp.cloud.solve(x, warm_start=warm)
        prev = seq
        u = seq[0]
        trace.state[now] = x
        trace.inputs[now] = u
        trace.source[now] = "cloud"
        trace.origin[now] = "cloud"
        trace.gamma_cloud[now] = 1
        trace.gamma_edge[now] = 0
        trace.candidate_costs["cloud"][now] = comp.evaluate(x, seq, h_term)
        trace.vn[now] = trace.candidate_costs["cloud"][now]
        trace.stage[now] = K.stage_cost(x[0], x[1], u[0], u[1], comp.params)
        trace.obstacle[now] = comp.task.in_obstacle(x)
        x = comp.model.step(x, u, comp.disturbance.sample(rng_dist))

    lyap = LyapunovTrace(vn=trace.vn, stage=trace.stage, obstacle=trace.obstacle)
    report = check_decrease(lyap, None, cfg.horizon)
    fractions = {s: (1.0 if s == "cloud" else 0.0) for s in SOURCES}
    metrics = RunMetrics(
        avg_stage_cost=float(trace.stage.mean()),
        selection_fractions=fractions,
        cloud_origin_fraction=1.0,
        counters={},
        final_distance=float(np.linalg.norm(x[:2] - comp.task.goal)),
        obstacle_ticks=int(trace.obstacle.sum()),
        decrease=report.to_dict(),
    )
    return trace, metrics


def _metrics_from(cfg, comp, trace, plant, cloud_node, edge_node, final_state) -> RunMetrics:
    ticks = cfg.ticks
    # Streaming counters versus a post-hoc trace scan must agree exactly.
    scan = {s: trace.source.count(s) for s in SOURCES}
    for s in SOURCES:
        if scan[s] != plant.selection_counts[s]:
            raise RuntimeError(f"selection bookkeeping out of sync for {s!r}")
    fractions = {s: scan[s] / ticks for s in SOURCES}
    origin_cloud = sum(1 for o in trace.origin if o == "cloud") / ticks

    counters = {
        "outdated_downlinks_cloud": plant.outdated_downlinks.get("cloud", 0),
        "outdated_downlinks_edge": plant.outdated_downlinks.get("edge", 0),
        "excluded_candidates": plant.excluded_candidates,
        "remote_skipped_cloud": cloud_node.skipped_stale if cloud_node else 0,
        "remote_skipped_edge": edge_node.skipped_stale if edge_node else 0,
        "stale_uplinks_cloud": cloud_node.stale_uplinks if cloud_node else 0,
        "stale_uplinks_edge": edge_node.stale_uplinks if edge_node else 0,
    }
    lyap = LyapunovTrace(vn=trace.vn, stage=trace.stage, obstacle=trace.obstacle)
    report = check_decrease(lyap, None, cfg.horizon)
    return RunMetrics(
        avg_stage_cost=float(trace.stage.mean()),
        selection_fractions=fractions,
        cloud_origin_fraction=origin_cloud,
        counters=counters,
        final_distance=float(np.linalg.norm(final_state[:2] - comp.task.goal)),
        obstacle_ticks=int(trace.obstacle.sum()),
        decrease=report.to_dict(),
    )


# -- Monte Carlo ----------------------------------------------------------------


@dataclass
class Aggregate:
    runs: int
    mean_cost: float
    std_cost: float
    sem_cost: float
    mean_fractions: dict
    mean_cloud_origin: float
    mean_final_distance: float
    per_run: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_cost": self.mean_cost,
            "std_cost": self.std_cost,
            "sem_cost": self.sem_cost,
            "mean_fractions": self.mean_fractions,
            "mean_cloud_origin": self.mean_cloud_origin,
            "mean_final_distance": self.mean_final_distance,
        }


def _mc_run(payload) -> dict:
    cfg_dict, ss = payload
    cfg = ScenarioConfig.from_dict(cfg_dict)
    _, metrics = run_scenario(cfg, ss)
    return metrics.to_dict()


def monte_carlo(cfg: ScenarioConfig, runs: Optional[int] = None,
                seed: Optional[int] = None, workers: int = 1) -> Aggregate:
    """Independent runs with spawned seeds; order-independent aggregation."""
    runs = cfg.runs if runs is None else runs
    master = np.random.SeedSequence(cfg.seed if seed is None else seed)
    children = master.spawn(runs)
    payloads = [(cfg.to_dict(), ss) for ss in children]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_run, payloads, chunksize=max(1, runs // (4 * workers))))
    else:
        results = [_mc_run(p) for p in payloads]

    costs = np.array([r["avg_stage_cost"] for r in results])
    fractions = {s: float(np.mean([r["selection_fractions"][s] for r in results]))
                 for s in SOURCES}
    return Aggregate(
        runs=runs,
        mean_cost=float(costs.mean()),
        std_cost=float(costs.std(ddof=1)) if runs > 1 else 0.0,
        sem_cost=float(costs.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0,
        mean_fractions=fractions,
        mean_cloud_origin=float(np.mean([r["cloud_origin_fraction"] for r in results])),
        mean_final_distance=float(np.mean([r["final_distance"] for r in results])),
        per_run=results,
    )


def relative_degradation(agg: Aggregate, baseline: Aggregate) -> float:
    """Mean-cost degradation of ``agg`` relative to a named baseline run."""
    return (agg.mean_cost - baseline.mean_cost) / baseline.mean_cost


def paper_cells(cfg: ScenarioConfig) -> dict[str, ScenarioConfig]:
    """The scenario grid: loss pairs plus single-tier baselines."""
    def links(pc: Optional[float], pe: Optional[float]) -> dict:
        cloud = cfg.cloud_link
        edge = cfg.edge_link
        return {
            "cloud_link": {"enabled": pc is not None, "family": cloud.family,
                           "std": cloud.std, "loss": 1.0 if pc is None else pc,
                           "budget": cloud.budget},
            "edge_link": {"enabled": pe is not None, "family": edge.family,
                          "std": edge.std, "loss": 1.0 if pe is None else pe,
                          "budget": edge.budget},
        }

    return {
        "loss-0-0": cfg.replace(**links(0.0, 0.0)),
        "loss-80-0": cfg.replace(**links(0.8, 0.0)),
        "loss-80-80": cfg.replace(**links(0.8, 0.8)),
        "loss-100-80": cfg.replace(**links(None, 0.8)),
        "onboard-only": cfg.replace(**links(None, None)),
        "ideal-cloud": cfg.replace(mode="ideal-cloud", **links(None, None)),
    }


def sweep(cfg: ScenarioConfig, runs: Optional[int] = None,
          seed: Optional[int] = None, workers: int = 1,
          cells: Optional[dict[str, ScenarioConfig]] = None) -> dict[str, Aggregate]:
    cells = paper_cells(cfg) if cells is None else cells
    if not cells:
        raise ValueError("sweep grid is empty")
    return {name: monte_carlo(cell, runs=runs, seed=seed, workers=workers)
            for name, cell in cells.items()}


# -- file output ------------------------------------------------------------------

TRACE_COLUMNS = ("tick", "px", "py", "heading", "speed", "u_slip", "u_accel",
                 "source", "origin", "gamma_cloud", "gamma_edge",
                 "cost_cloud", "cost_edge", "cost_carryover", "cost_onboard",
                 "vn", "stage", "residual")


def write_trace(path: str | Path, cfg: ScenarioConfig, seed, trace: Trace) -> None:
    res = trace.residuals()
    lines = [f"# tiersim-trace config={cfg.config_hash()} seed={seed}",
             ",".join(TRACE_COLUMNS)]
    for i in range(len(trace.tick)):
        row = [
            str(int(trace.tick[i])),
            repr(float(trace.state[i, 0])), repr(float(trace.state[i, 1])),
            repr(float(trace.state[i, 2])), repr(float(trace.state[i, 3])),
            repr(float(trace.inputs[i, 0])), repr(float(trace.inputs[i, 1])),
            trace.source[i], trace.origin[i],
            str(int(trace.gamma_cloud[i])), str(int(trace.gamma_edge[i])),
            repr(float(trace.candidate_costs["cloud"][i])),
            repr(float(trace.candidate_costs["edge"][i])),
            repr(float(trace.candidate_costs["carryover"][i])),
            repr(float(trace.candidate_costs["onboard"][i])),
            repr(float(trace.vn[i])), repr(float(trace.stage[i])),
            repr(float(res[i])),
        ]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> dict:
    raw = Path(path).read_text(encoding="utf-8").strip().split("\n")
    header = raw[0]
    columns = raw[1].split(",")
    rows = [line.split(",") for line in raw[2:]]
    out: dict = {"header": header}
    for j, col in enumerate(columns):
        vals = [r[j] for r in rows]
        if col in ("source", "origin"):
            out[col] = vals
        elif col in ("tick", "gamma_cloud", "gamma_edge"):
            out[col] = np.array([int(v) for v in vals])
        else:
            out[col] = np.array([float(v) for v in vals])
    return out


def write_metrics(path: str | Path, cfg: ScenarioConfig, seed, payload: dict) -> None:
    body = {"config": cfg.config_hash(), "seed": seed, **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
