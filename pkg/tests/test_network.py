import math

import numpy as np
import pytest

from tiersim.network import (Channel, age_of_information, degenerate,
                             distribution_for_loss, exponential,
                             fit_loss_probability, lognormal, normal, plan_budget,
                             sample_delay, sample_delays)


# -- sampling ---------------------------------------------------------------


def test_degenerate_sampling():
    rng = np.random.default_rng(0)
    d = degenerate(3.0)
    assert all(sample_delay(d, rng) == 3 for _ in range(50))


def test_zero_variance_normal():
    rng = np.random.default_rng(0)
    d = normal(5.0, 0.0)
    assert all(sample_delay(d, rng) == 5 for _ in range(50))


def test_negative_draws_clamped():
    rng = np.random.default_rng(1)
    d = normal(-10.0, 0.5)
    assert np.all(sample_delays(d, rng, 1000) == 0)


def test_lognormal_median():
    rng = np.random.default_rng(2)
    samples = sample_delays(lognormal(0.0, 1.0), rng, 10 ** 6)
    # continuous median exp(0) = 1; Pr(raw <= 1) is exactly one half, so the
    # discretized median sits within one tick of it
    assert abs(np.median(samples) - 1.0) <= 1.0


def test_sampling_is_integer_ticks():
    rng = np.random.default_rng(3)
    for d in (exponential(0.7), normal(2.5, 1.0), lognormal(0.3, 0.6)):
        s = sample_delays(d, rng, 1000)
        assert s.dtype == np.int64
        assert np.all(s >= 0)


# -- age of information -------------------------------------------------------


def test_aoi_example_trace():
    received = [(0, 3), (1, 1)]
    assert age_of_information(received, 2) == 1


def test_aoi_instantaneous():
    assert age_of_information([(5, 0)], 5) == 0


def test_aoi_total_loss():
    assert age_of_information([(0, 100), (1, 100)], 3) is None
    assert age_of_information([], 0) is None


def test_aoi_matches_bruteforce_on_random_traces():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = 200
        delays = rng.integers(0, 12, size=n)
        received = list(zip(range(n), delays))
        for now in rng.integers(0, n, size=40):
            got = age_of_information(received, int(now))
            # brute force straight from the definition
            expect = None
            for a in range(int(now) + 1):
                if delays[now - a] <= a:
                    expect = a
                    break
            assert got == expect


# -- budget planning -----------------------------------------------------------


def test_plan_budget_exponential():
    assert plan_budget(exponential(2.0), 0.05) == math.ceil(-math.log(0.05) / 2.0)
    assert plan_budget(exponential(2.0), 0.05) == 2


def test_plan_budget_clamps_to_one():
    assert plan_budget(normal(0.0, 1.0), 0.5) == 1


def test_plan_budget_lognormal_median():
    assert plan_budget(lognormal(0.0, 1.0), 0.5) == 1


def test_plan_budget_rejects_bad_rho():
    for rho in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            plan_budget(exponential(1.0), rho)


def test_plan_budget_composed_with_tail():
    rng_params = [
        exponential(0.5), exponential(1.0), exponential(2.0),
        normal(3.0, 1.0), normal(5.0, 2.0), normal(1.0, 0.25),
        lognormal(0.5, 0.4), lognormal(1.0, 0.8), lognormal(0.0, 1.2),
    ]
    for dist in rng_params:
        for rho in (0.3, 0.1, 0.02):
            budget = plan_budget(dist, rho)
            assert fit_loss_probability(dist, budget) <= rho + 1e-12


# -- loss probabilities ----------------------------------------------------------


def test_loss_probability_degenerate():
    assert fit_loss_probability(degenerate(3.0), 4) == 0.0
    assert fit_loss_probability(degenerate(5.0), 4) == 1.0


def test_loss_probability_exponential_inverse():
    budget = -math.log(0.2)
    assert fit_loss_probability(exponential(1.0), budget) == pytest.approx(0.2)


def test_distribution_for_loss_hits_target():
    for family in ("normal", "lognormal", "exponential"):
        for loss in (0.8, 0.5, 0.1):
            dist = distribution_for_loss(family, 0.7, loss, budget=2)
            assert fit_loss_probability(dist, 2) == pytest.approx(loss, rel=1e-9)


def test_distribution_for_zero_loss_is_instant():
    dist = distribution_for_loss("lognormal", 0.5, 0.0, budget=4)
    assert dist.kind == "degenerate"
    assert fit_loss_probability(dist, 4) == 0.0


def test_empirical_tail_matches_analytic():
    rng = np.random.default_rng(13)
    n = 200_000
    for dist in (exponential(1.0), normal(3.0, 1.5), lognormal(0.8, 0.5)):
        budget = plan_budget(dist, 0.2)
        analytic = fit_loss_probability(dist, budget)
        emp = float(np.mean(sample_delays(dist, rng, n) > budget))
        se = math.sqrt(max(analytic * (1 - analytic), 1e-12) / n)
        assert abs(emp - analytic) <= 3 * se + 1e-9


# -- channel -----------------------------------------------------------------


def test_channel_never_delivers_early_and_never_duplicates():
    rng = np.random.default_rng(5)
    chan = Channel(normal(3.0, 2.0), np.random.default_rng(6))
    sent = {}
    delivered = []
    for now in range(200):
        for payload in chan.deliver_due(now):
            delivered.append((payload, now))
        delay = chan.send(f"pkt{now}", now)
        sent[f"pkt{now}"] = now + delay
    for now in range(200, 300):
        for payload in chan.deliver_due(now):
            delivered.append((payload, now))
    names = [p for p, _ in delivered]
    assert len(names) == len(set(names))          # no duplicates
    for payload, at in delivered:
        assert at >= sent[payload]                # never before send + delay
    assert set(names) <= set(sent)
    assert chan.delivered_count == len(delivered)


def test_channel_degenerate_zero_is_next_deliver():
    chan = Channel(degenerate(0.0), np.random.default_rng(0))
    chan.send("a", 4)
    assert chan.deliver_due(3) == []
    assert chan.deliver_due(4) == ["a"]
    assert chan.deliver_due(4) == []
