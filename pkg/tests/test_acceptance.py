"""End-to-end acceptance checks, one per shipped guarantee.

Each check prints a single pass/fail line (run with ``pytest -s`` to see
them as they complete).  The Monte Carlo batches are shared between checks
through session-scoped fixtures, so the whole module costs one sweep of the
scenario grid at 100 runs per cell.
"""

import math
import time

import numpy as np
import pytest

from tiersim import _kernels as K
from tiersim.config import paper_config
from tiersim.controllers import OnboardController
from tiersim.costs import build_cost_function, finite_horizon_cost
from tiersim.dynamics import bicycle_model, predict
from tiersim.harness import monte_carlo, paper_cells, run_scenario, write_trace
from tiersim.network import (age_of_information, exponential,
                             fit_loss_probability, lognormal, normal, plan_budget,
                             sample_delays)
from tiersim.plant import Candidate, select_candidate
from tiersim.stability import LyapunovTrace, check_decrease

from conftest import remote_task

RUNS = 100
WORKERS = 2
MASTER_SEED = 20260810


def _report(num, ok, detail):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}  {detail}"
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="session")
def cells():
    return paper_cells(paper_config())


@pytest.fixture(scope="session")
def agg_80_80(cells):
    return monte_carlo(cells["loss-80-80"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def agg_0_0(cells):
    return monte_carlo(cells["loss-0-0"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def agg_80_0(cells):
    return monte_carlo(cells["loss-80-0"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def agg_100_80(cells):
    return monte_carlo(cells["loss-100-80"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def agg_onboard_only(cells):
    return monte_carlo(cells["onboard-only"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def agg_ideal(cells):
    return monte_carlo(cells["ideal-cloud"], runs=RUNS, seed=MASTER_SEED,
                       workers=WORKERS)


@pytest.fixture(scope="session")
def disturbed_cells():
    return paper_cells(paper_config().replace(disturbance_kind="uniform"))


@pytest.fixture(scope="session")
def agg_dist_proposed(disturbed_cells):
    return monte_carlo(disturbed_cells["loss-80-80"], runs=RUNS,
                       seed=MASTER_SEED, workers=WORKERS)


@pytest.fixture(scope="session")
def agg_dist_edge_only(disturbed_cells):
    return monte_carlo(disturbed_cells["loss-100-80"], runs=RUNS,
                       seed=MASTER_SEED, workers=WORKERS)


@pytest.fixture(scope="session")
def agg_dist_onboard(disturbed_cells):
    return monte_carlo(disturbed_cells["onboard-only"], runs=RUNS,
                       seed=MASTER_SEED, workers=WORKERS)


@pytest.mark.acceptance
def test_criterion_01_prediction_equivalence():
    """Two-stage open-loop prediction composes exactly."""
    start = time.time()
    model = bicycle_model(0.01, 0.5)
    rng = np.random.default_rng(101)
    horizon = 25
    worst = 0.0
    for _ in range(10_000):
        x = rng.uniform([-10, -10, -4, 0], [10, 10, 4, 12])
        buf = rng.normal(scale=0.5, size=(horizon, 2))
        a = int(rng.integers(0, horizon + 1))
        d = int(rng.integers(0, horizon - a + 1))
        two = predict(model, predict(model, x, buf, a), buf[a:], d)
        one = predict(model, x, buf, a + d)
        scale = max(1.0, float(np.max(np.abs(one))))
        worst = max(worst, float(np.max(np.abs(two - one))) / scale)
    elapsed = time.time() - start
    _report(1, worst <= 1e-10 and elapsed < 10,
            f"two-stage prediction, max rel err {worst:.2e}, {elapsed:.1f}s")


@pytest.mark.acceptance
def test_criterion_02_argmin_matches_exhaustive():
    """Buffer update equals exhaustive candidate evaluation, ties included."""
    start = time.time()
    task = remote_task()
    onboard = OnboardController(task, horizon=10, gain=4.0, lookahead=10.0)
    cost = build_cost_function(task, onboard.model, onboard.feedback, 15)
    evaluate = lambda x, seq: finite_horizon_cost(x, seq, cost, onboard.model)
    priority = ("cloud", "edge", "carryover", "onboard")
    rng = np.random.default_rng(202)
    mismatches = 0
    for trial in range(1000):
        x = rng.uniform([-3, -3, -1, 0], [8, 3, 1, 4])
        gamma_c, gamma_e = rng.integers(0, 2, size=2)
        pool = [rng.normal(scale=0.3, size=(10, 2)) for _ in range(2)]
        cands = []
        if gamma_c:
            cands.append(Candidate("cloud", "cloud", pool[0]))
        if gamma_e:
            # force an exact tie with the cloud sequence half the time
            seq = pool[0].copy() if (gamma_c and trial % 2 == 0) else pool[1]
            cands.append(Candidate("edge", "edge", seq))
        cands.append(Candidate("carryover", "cloud",
                               rng.normal(scale=0.3, size=(10, 2))))
        cands.append(Candidate("onboard", "onboard", onboard.solve(x)))
        idx, costs, _ = select_candidate(x, cands, evaluate)
        # exhaustive oracle with the same tie-break priority
        finite = [(c, i) for i, c in enumerate(costs) if math.isfinite(c)]
        best = min(c for c, _ in finite)
        expect = next(i for c, i in finite if c == best)
        if idx != expect:
            mismatches += 1
    elapsed = time.time() - start
    _report(2, mismatches == 0 and elapsed < 10,
            f"selection argmin, {mismatches} mismatches/1000 ticks, {elapsed:.1f}s")


@pytest.mark.acceptance
def test_criterion_03_age_of_information():
    """Per-tick freshness equals brute-force minimisation on random traces."""
    start = time.time()
    rng = np.random.default_rng(303)
    bad = 0
    for _ in range(100):
        n = 1000
        delays = rng.integers(0, 15, size=n)
        received = list(zip(range(n), delays))
        # independent sweep oracle: freshest arrived send-time per tick
        arrivals = np.arange(n) + delays
        order = np.argsort(arrivals, kind="stable")
        oracle = np.full(n, -1, dtype=np.int64)
        freshest = -1
        ptr = 0
        for now in range(n):
            while ptr < n and arrivals[order[ptr]] <= now:
                freshest = max(freshest, int(order[ptr]))
                ptr += 1
            oracle[now] = now - freshest if freshest >= 0 else -1
        for now in range(0, n, 7):
            got = age_of_information(received, now)
            expect = None if oracle[now] < 0 else int(oracle[now])
            if got != expect:
                bad += 1
    elapsed = time.time() - start
    _report(3, bad == 0 and elapsed < 10,
            f"age-of-information vs sweep oracle, {bad} mismatches, {elapsed:.1f}s")


@pytest.mark.acceptance
def test_criterion_04_quantile_budgets():
    """Planned compensation depths meet their tail targets empirically."""
    start = time.time()
    rng = np.random.default_rng(404)
    n = 10 ** 6
    grids = {
        "exponential": [exponential(r) for r in (0.5, 1.0, 2.0)],
        "normal": [normal(*p) for p in ((2.0, 0.5), (3.0, 1.0), (5.0, 2.0))],
        "lognormal": [lognormal(*p) for p in ((0.5, 0.4), (1.0, 0.8), (1.5, 1.2))],
    }
    rhos = (0.2, 0.05, 0.01)
    failures = []
    for family, dists in grids.items():
        for dist in dists:
            samples = sample_delays(dist, rng, n)
            for rho in rhos:
                budget = plan_budget(dist, rho)
                analytic = fit_loss_probability(dist, budget)
                emp = float(np.mean(samples > budget))
                se = math.sqrt(max(analytic * (1 - analytic), 1e-12) / n)
                if analytic > rho + 1e-12:
                    failures.append((family, rho, "analytic above target"))
                if abs(emp - analytic) > 3 * se + 1e-9:
                    failures.append((family, rho, "empirical off analytic"))
                if emp > rho + 3 * se + 1e-9:
                    failures.append((family, rho, "empirical above target"))
    elapsed = time.time() - start
    _report(4, not failures and elapsed < 60,
            f"quantile budgets on 3x3x3 grid, failures={failures}, {elapsed:.0f}s")


@pytest.mark.acceptance
def test_criterion_05_nominal_decrease():
    """Disturbance-free default run: the selection cost decreases by at
    least the applied stage cost at every obstacle-free transition."""
    start = time.time()
    cfg = paper_config().replace(runs=1)
    assert cfg.disturbance_kind == "none"
    trace, metrics = run_scenario(cfg, cfg.seed)
    lyap = LyapunovTrace(vn=trace.vn, stage=trace.stage, obstacle=trace.obstacle)
    report = check_decrease(lyap, None, cfg.horizon, tolerance=1e-7)
    elapsed = time.time() - start
    ok = report.violations == 0 and report.checked > 0 and elapsed < 300
    _report(5, ok, f"nominal decrease: {report.violations} violations over "
                   f"{report.checked} transitions, max residual "
                   f"{report.max_residual:.2e}, {elapsed:.0f}s")


@pytest.mark.acceptance
def test_criterion_06_selection_histogram(agg_80_80):
    """Selection-source statistics at the lossy operating point."""
    f = agg_80_80.mean_fractions
    origin = agg_80_80.mean_cloud_origin
    checks = {
        "buffer": (f["carryover"], 0.82, 0.10),
        "cloud": (f["cloud"], 0.10, 0.07),
        "edge": (f["edge"], 0.06, 0.05),
        "onboard": (f["onboard"], 0.02, 0.04),
        "cloud-origin": (origin, 0.83, 0.10),
    }
    bad = {k: v for k, (v, target, tol) in checks.items()
           if not (target - tol <= v <= target + tol)}
    detail = " ".join(f"{k}={v:.3f}" for k, (v, _, _) in checks.items())
    _report(6, not bad, f"selection histogram over {agg_80_80.runs} runs: "
                        f"{detail}; out-of-range={bad}")


@pytest.mark.acceptance
def test_criterion_07_compensation_overhead(agg_0_0, agg_ideal):
    """Lossless channels with full compensation depth versus the
    instantaneous baseline: small mean-cost degradation."""
    degradation = (agg_0_0.mean_cost - agg_ideal.mean_cost) / agg_ideal.mean_cost
    _report(7, degradation <= 0.05,
            f"compensation overhead {degradation * 100:.2f}% "
            f"({agg_0_0.mean_cost:.2f} vs ideal {agg_ideal.mean_cost:.2f})")


@pytest.mark.acceptance
def test_criterion_08_loss_orderings(agg_0_0, agg_80_0, agg_80_80, agg_100_80,
                                     agg_onboard_only):
    """Mean cost degrades with channel loss; removing the cloud hurts
    significantly; the selection policy never loses to onboard-only."""
    a, b, c, d = agg_0_0, agg_80_0, agg_80_80, agg_100_80
    gap = d.mean_cost - c.mean_cost
    sigma = math.sqrt(c.sem_cost ** 2 + d.sem_cost ** 2)
    ok_chain = a.mean_cost <= b.mean_cost <= c.mean_cost < d.mean_cost
    ok_sig = gap >= 2.0 * sigma
    ok_onboard = all(agg.mean_cost <= agg_onboard_only.mean_cost
                     for agg in (a, b, c, d))
    _report(8, ok_chain and ok_sig and ok_onboard,
            f"orderings {a.mean_cost:.2f} <= {b.mean_cost:.2f} <= "
            f"{c.mean_cost:.2f} < {d.mean_cost:.2f} "
            f"(gap {gap:.2f} = {gap / sigma if sigma else float('inf'):.1f} sigma), "
            f"onboard-only {agg_onboard_only.mean_cost:.2f}")


@pytest.mark.acceptance
def test_criterion_09_disturbance_robustness(agg_dist_proposed, agg_dist_edge_only,
                                             agg_dist_onboard):
    """Under bounded disturbances the full policy still beats the
    single-tier and edge-only baselines."""
    p = agg_dist_proposed.mean_cost
    ok = p < agg_dist_onboard.mean_cost and p < agg_dist_edge_only.mean_cost
    _report(9, ok, f"disturbed means: proposed {p:.2f} vs edge-only "
                   f"{agg_dist_edge_only.mean_cost:.2f} vs onboard-only "
                   f"{agg_dist_onboard.mean_cost:.2f}")


@pytest.mark.acceptance
def test_criterion_10_determinism(tmp_path):
    """Identical config and seed produce byte-identical trace files."""
    start = time.time()
    cfg = paper_config().replace(ticks=400, runs=1)
    t1, _ = run_scenario(cfg, 77)
    t2, _ = run_scenario(cfg, 77)
    p1, p2 = tmp_path / "one.csv", tmp_path / "two.csv"
    write_trace(p1, cfg, 77, t1)
    write_trace(p2, cfg, 77, t2)
    same = p1.read_bytes() == p2.read_bytes()
    elapsed = time.time() - start
    _report(10, same and elapsed < 60,
            f"byte-identical traces ({p1.stat().st_size} bytes), {elapsed:.0f}s")
