"""Remote (edge/cloud) side: estimate, predict ahead, solve, packetize.

A remote node never sees the current plant state.  It reconstructs it from
the freshest uplink packet by replaying the buffered inputs that the plant
committed to, then predicts ``depth`` further steps so the sequence it ships
is pinned to the tick at which it can first be applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .dynamics import PlantModel, predict
from .network import DownlinkPacket, UplinkPacket


@dataclass
class RemoteNode:
    tier: str
    depth: int                      # prediction depth in ticks (0 < depth <= horizon)
    controller: object              # exposes solve(state) -> (horizon, m) array
    model: PlantModel
    horizon: int
    warm_from_buffer: bool = False  # seed the solver with the shifted buffer tail
    lineage_warm: bool = False      # seed with own previous solution, shifted
    buffer_seed: bool = False       # also offer the shifted buffer as a seed
    fast_params: Optional[np.ndarray] = None  # kernel params for jitted predicts
    latest: Optional[UplinkPacket] = None
    stale_uplinks: int = 0          # packets older than the one already held
    skipped_stale: int = 0          # compensations aborted: age + depth > horizon
    sent_count: int = 0
    _prev_solution: Optional[np.ndarray] = None
    _prev_tick: int = -1

    def __post_init__(self):
        if not 0 < self.depth <= self.horizon:
            raise ValueError("prediction depth must lie in (0, horizon]")

    def receive_uplink(self, pkt: UplinkPacket, now: int) -> None:
        """Keep only the freshest packet; out-of-order arrivals are counted."""
        if self.latest is None or pkt.sent_at > self.latest.sent_at:
            self.latest = pkt
        else:
            self.stale_uplinks += 1

    def age(self, now: int) -> Optional[int]:
        if self.latest is None:
            return None
        return now - self.latest.sent_at

    def compensate(self, now: int) -> Optional[DownlinkPacket]:
        """Estimate the current state, predict ``depth`` ahead, and solve.

        Returns None on a cold start or when the uplink is stale beyond the
        horizon (age + depth > horizon), since then the buffered inputs do
        not reach far enough to bridge the gap.
        """
        if self.latest is None:
            return None
        a = now - self.latest.sent_at
        if a + self.depth > self.horizon:
            self.skipped_stale += 1
            return None
        estimate = self._predict(self.latest.state, self.latest.buffer, a)
        ahead = self._predict(estimate, self.latest.buffer[a:], self.depth)
        if self.warm_from_buffer:
            warm = self._buffer_warm_start(ahead, a)
            origin = self.latest.buffer_origin
        elif self.lineage_warm:
            warm = self._lineage_warm_start(ahead, now)
            origin = self.tier
        else:
            warm = None
            origin = self.tier
        if self.buffer_seed:
            extra = [self._buffer_warm_start(ahead, a)]
            inputs = np.asarray(self.controller.solve(ahead, warm_start=warm,
                                                      extra_seeds=extra),
                                dtype=float)
        elif warm is None:
            inputs = np.asarray(self.controller.solve(ahead), dtype=float)
        else:
            inputs = np.asarray(self.controller.solve(ahead, warm_start=warm),
                                dtype=float)
        if self.lineage_warm:
            self._prev_solution = inputs
            self._prev_tick = now
        self.sent_count += 1
        return DownlinkPacket(computed_at=now, activation_tick=now + self.depth,
                              inputs=inputs, origin=origin)

    def _predict(self, state: np.ndarray, inputs: np.ndarray, steps: int) -> np.ndarray:
        if self.fast_params is not None:
            return K.rollout_end(np.asarray(state, dtype=float),
                                 np.asarray(inputs, dtype=float), steps,
                                 self.fast_params)
        return predict(self.model, state, inputs, steps)

    def _lineage_warm_start(self, ahead: np.ndarray, now: int) -> Optional[np.ndarray]:
        """Own previous solution shifted by the elapsed ticks and padded with
        the fallback law: the usual receding-horizon warm start."""
        if self._prev_solution is None:
            return None
        gap = now - self._prev_tick
        if gap <= 0 or gap >= self.horizon:
            return None
        remaining = self._prev_solution[gap:]
        end_state = self._predict(ahead, remaining, len(remaining))
        pad = np.asarray(self.controller.onboard.solve(end_state), dtype=float)
        return np.vstack([remaining, pad[:gap]])

    def _buffer_warm_start(self, ahead: np.ndarray, a: int) -> np.ndarray:
        """Shift the uplinked buffer to the activation tick and pad it with
        the fallback rollout, so the solver refines the plant's committed
        plan instead of starting from scratch."""
        remaining = self.latest.buffer[a + self.depth:]
        missing = self.horizon - len(remaining)
        if missing <= 0:
            return np.asarray(remaining[:self.horizon], dtype=float)
        end_state = self._predict(ahead, remaining, len(remaining))
        pad = np.asarray(self.controller.onboard.solve(end_state), dtype=float)
        return np.vstack([remaining, pad[:missing]])
