"""Delay distributions, lossy delayed channels, and freshness bookkeeping.

Delays are drawn from continuous laws and discretized by ceiling to whole
ticks (negatives clamp to zero).  A packet is "lost" exactly when its delay
exceeds the horizon that would have made it useful, so loss probabilities
are tail probabilities of the delay law.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np
from scipy.special import ndtri

FAMILIES = ("exponential", "normal", "lognormal", "degenerate")


@dataclass(frozen=True)
class DelayDistribution:
    """One delay law per link direction.

    kind: exponential(rate) | normal(mean, std) | lognormal(mean, std of log)
          | degenerate(value)
    """

    kind: str
    rate: float = 1.0     # exponential
    mean: float = 0.0     # normal / lognormal (log-scale) / degenerate value
    std: float = 1.0      # normal / lognormal (log-scale)

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown delay family {self.kind!r}")
        if self.kind == "exponential" and self.rate <= 0.0:
            raise ValueError("exponential rate must be positive")
        if self.kind in ("normal", "lognormal") and self.std < 0.0:
            raise ValueError("std must be non-negative")


def exponential(rate: float) -> DelayDistribution:
    return DelayDistribution("exponential", rate=rate)


def normal(mean: float, std: float) -> DelayDistribution:
    return DelayDistribution("normal", mean=mean, std=std)


def lognormal(mean: float, std: float) -> DelayDistribution:
    return DelayDistribution("lognormal", mean=mean, std=std)


def degenerate(value: float) -> DelayDistribution:
    return DelayDistribution("degenerate", mean=value)


def _continuous_samples(dist: DelayDistribution, rng: np.random.Generator,
                        size: int) -> np.ndarray:
    if dist.kind == "exponential":
        return rng.exponential(1.0 / dist.rate, size)
    if dist.kind == "normal":
        return rng.normal(dist.mean, dist.std, size)
    if dist.kind == "lognormal":
        return rng.lognormal(dist.mean, dist.std, size)
    return np.full(size, dist.mean)


def sample_delays(dist: DelayDistribution, rng: np.random.Generator,
                  size: int) -> np.ndarray:
    """Vectorized integer-tick delays: ceiling, negatives clamped to zero."""
    raw = _continuous_samples(dist, rng, size)
    return np.maximum(np.ceil(raw), 0.0).astype(np.int64)


def sample_delay(dist: DelayDistribution, rng: np.random.Generator) -> int:
    return int(sample_delays(dist, rng, 1)[0])


def fit_loss_probability(dist: DelayDistribution, budget: float) -> float:
    """Exact tail probability Pr(delay > budget) of the continuous law."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if dist.kind == "exponential":
        return math.exp(-dist.rate * budget)
    if dist.kind == "normal":
        if dist.std == 0.0:
            return 1.0 if dist.mean > budget else 0.0
        z = (budget - dist.mean) / dist.std
        return 0.5 * math.erfc(z / math.sqrt(2.0))
    if dist.kind == "lognormal":
        if budget <= 0.0:
            return 1.0
        if dist.std == 0.0:
            return 1.0 if math.exp(dist.mean) > budget else 0.0
        z = (math.log(budget) - dist.mean) / dist.std
        return 0.5 * math.erfc(z / math.sqrt(2.0))
    return 1.0 if dist.mean > budget else 0.0


def plan_budget(dist: DelayDistribution, outdated_probability: float) -> int:
    """Smallest integer compensation depth with tail below the target.

    Closed forms per family: exponential -ln(rho)/rate, normal
    mean + std * z(1 - rho), lognormal exp(mean + std * z(1 - rho)).
    Clamped to a minimum of one tick.
    """
    rho = outdated_probability
    if not 0.0 < rho < 1.0:
        raise ValueError("outdated probability must lie strictly in (0, 1)")
    if dist.kind == "exponential":
        bound = -math.log(rho) / dist.rate
    elif dist.kind == "normal":
        bound = dist.mean + dist.std * ndtri(1.0 - rho)
    elif dist.kind == "lognormal":
        bound = math.exp(dist.mean + dist.std * ndtri(1.0 - rho))
    else:
        bound = dist.mean
    return max(1, int(math.ceil(bound)))


def distribution_for_loss(family: str, std: float, loss: float,
                          budget: int) -> DelayDistribution:
    """Back out the location parameter hitting a target tail at ``budget``.

    Only the mean is free; the spread is fixed by the caller.  Exact loss 0
    is represented by a zero-delay degenerate law.
    """
    if not 0.0 <= loss < 1.0:
        raise ValueError("loss probability must lie in [0, 1)")
    if loss == 0.0:
        return degenerate(0.0)
    z = ndtri(1.0 - loss)
    if family == "normal":
        return normal(budget - std * z, std)
    if family == "lognormal":
        return lognormal(math.log(budget) - std * z, std)
    if family == "exponential":
        return exponential(-math.log(loss) / budget)
    raise ValueError(f"cannot fit family {family!r} to a loss target")


def age_of_information(received: Iterable[tuple[int, int]], now: int) -> Optional[int]:
    """Minimal age a such that the packet sent at now - a arrived by now.

    ``received`` holds (sent_at, delay) pairs.  Returns None when nothing
    qualifies (cold start or total loss).
    """
    delays = {int(s): int(d) for s, d in received}
    for age in range(now + 1):
        d = delays.get(now - age)
        if d is not None and d <= age:
            return age
    return None


@dataclass(frozen=True)
class UplinkPacket:
    """Plant-to-remote payload: measured state plus the current buffer."""

    sent_at: int
    state: np.ndarray
    buffer: np.ndarray
    buffer_origin: str = "onboard"


@dataclass(frozen=True)
class DownlinkPacket:
    """Remote-to-plant payload: a sequence pinned to its activation tick.

    ``origin`` names the tier whose plan the sequence descends from: a
    solver seeded from the uplinked buffer inherits that buffer's origin.
    """

    computed_at: int
    activation_tick: int
    inputs: np.ndarray
    origin: str = ""

    def __post_init__(self):
        if self.activation_tick <= self.computed_at:
            raise ValueError("activation tick must follow the computation tick")


@dataclass
class Channel:
    """Delayed lossless-in-order-of-arrival packet pipe.

    A packet sent at tick k with sampled delay d becomes deliverable at
    tick k + d and never earlier; nothing is delivered twice.
    """

    distribution: DelayDistribution
    rng: np.random.Generator
    _heap: list = field(default_factory=list)
    _seq: int = 0
    sent_count: int = 0
    delivered_count: int = 0

    def send(self, payload: Any, now: int) -> int:
        delay = sample_delay(self.distribution, self.rng)
        heapq.heappush(self._heap, (now + delay, self._seq, payload))
        self._seq += 1
        self.sent_count += 1
        return delay

    def deliver_due(self, now: int) -> list:
        out = []
        while self._heap and self._heap[0][0] <= now:
            out.append(heapq.heappop(self._heap)[2])
        self.delivered_count += len(out)
        return out

    def pending(self) -> int:
        return len(self._heap)
