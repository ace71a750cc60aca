"""Plant side: downlink gating, buffer maintenance, candidate selection.

The plant keeps a length-N buffer holding the best sequence seen so far.
Each tick it builds the carryover candidate (buffer shifted one step and
padded with an onboard input at the predicted horizon-end state), gates any
remote sequences whose activation tick is now, and stores the candidate
with the smallest horizon cost.  The applied input is always the buffer's
first element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .dynamics import PlantModel, predict
from .network import DownlinkPacket, UplinkPacket

CostEvaluator = Callable[[np.ndarray, np.ndarray], float]

# Fixed tie-break order: richer controllers win exact ties.
SELECTION_PRIORITY = ("cloud", "edge", "carryover", "onboard")


@dataclass(frozen=True)
class Candidate:
    source: str                     # cloud | edge | carryover | onboard
    origin: str                     # tier that originally produced the sequence
    inputs: np.ndarray


@dataclass
class BufferState:
    inputs: np.ndarray
    source: str
    origin: str
    selected_at: int


def select_candidate(x: np.ndarray, candidates: list[Candidate],
                     evaluate: CostEvaluator) -> tuple[int, list[float], int]:
    """Argmin of the horizon cost with the fixed tie-break priority.

    Candidates must already be listed in priority order; a later candidate
    replaces the incumbent only on a strictly smaller cost.  Non-finite
    costs exclude the candidate.  Returns (winner index, costs, excluded).
    """
    if not candidates:
        raise ValueError("candidate set is empty")
    costs: list[float] = []
    excluded = 0
    best_idx = -1
    best_cost = math.inf
    for i, cand in enumerate(candidates):
        c = float(evaluate(x, cand.inputs))
        costs.append(c)
        if not math.isfinite(c):
            excluded += 1
            continue
        if c < best_cost:
            best_cost = c
            best_idx = i
    if best_idx < 0:
        raise RuntimeError("every candidate cost was non-finite")
    return best_idx, costs, excluded


def auxiliary_buffer(previous: np.ndarray, x: np.ndarray,
                     feedback: Callable[[np.ndarray], np.ndarray],
                     model: PlantModel) -> np.ndarray:
    """Shift the previous buffer one step and pad with an onboard input.

    The pad is the feedback law evaluated at the state reached by replaying
    the remaining shifted inputs from the current state.
    """
    previous = np.asarray(previous, dtype=float)
    shifted = previous[1:]
    pad_state = predict(model, x, shifted, len(shifted))
    pad = np.asarray(feedback(pad_state), dtype=float)
    return np.vstack([shifted, pad[None, :]])


class PlantNode:
    """On-board endpoint of both links plus the selection policy."""

    def __init__(self, model: PlantModel, onboard, horizon: int,
                 evaluate: CostEvaluator, initial_state: np.ndarray,
                 links: tuple[str, ...] = ("cloud", "edge")):
        self.model = model
        self.onboard = onboard
        self.horizon = int(horizon)
        self.evaluate = evaluate
        self.links = links
        # Buffer starts as the onboard plan so the carryover candidate is
        # well-defined from the first tick.
        # The buffer is seeded with the onboard plan for the initial state;
        # it is already aligned with tick 0, so shifting starts at tick 1.
        self.buffer = BufferState(
            inputs=np.asarray(onboard.solve(np.asarray(initial_state, dtype=float)),
                              dtype=float),
            source="onboard", origin="onboard", selected_at=0)
        self._buffer_consumed = False
        self._held: dict[str, dict[int, DownlinkPacket]] = {l: {} for l in links}
        self.outdated_downlinks = {l: 0 for l in links}
        self.excluded_candidates = 0
        self.selection_counts = {s: 0 for s in SELECTION_PRIORITY}
        self.origin_counts = {s: 0 for s in ("cloud", "edge", "onboard")}

    # -- downlink handling ---------------------------------------------------

    def receive_downlink(self, link: str, pkt: DownlinkPacket, now: int) -> None:
        """Hold early arrivals until activation; drop late ones as outdated."""
        if pkt.activation_tick < now:
            self.outdated_downlinks[link] += 1
            return
        held = self._held[link]
        if pkt.activation_tick in held:
            raise RuntimeError(
                f"two {link} packets share activation tick {pkt.activation_tick}")
        held[pkt.activation_tick] = pkt

    def gate_downlink(self, link: str, now: int) -> tuple[int, Optional[DownlinkPacket]]:
        """gamma flag and packet for this tick's activation, if it arrived."""
        pkt = self._held[link].pop(now, None)
        if pkt is None:
            return 0, None
        return 1, pkt

    # -- per-tick selection ----------------------------------------------------

    def step_selection(self, x: np.ndarray, now: int,
                       gated: dict[str, Optional[np.ndarray]]) -> tuple[np.ndarray, dict]:
        """Build the candidate set, store the argmin, return the applied input."""
        x = np.asarray(x, dtype=float)
        if self._buffer_consumed:
            params = self.onboard.params
            shifted = self.buffer.inputs[1:]
            pad_state = K.rollout_end(x, shifted, len(shifted), params)
            pad = K.onboard_input(pad_state[0], pad_state[1], pad_state[2],
                                  pad_state[3], params)
            carry = np.vstack([shifted, np.array(pad)[None, :]])
        else:
            # first tick: the seeded buffer is already aligned with this tick
            carry = self.buffer.inputs.copy()
            self._buffer_consumed = True
        fresh = np.asarray(self.onboard.solve(x), dtype=float)
        candidates = []
        if gated.get("cloud") is not None:
            pkt = gated["cloud"]
            candidates.append(Candidate("cloud", pkt.origin or "cloud", pkt.inputs))
        if gated.get("edge") is not None:
            pkt = gated["edge"]
            candidates.append(Candidate("edge", pkt.origin or "edge", pkt.inputs))
        candidates.append(Candidate("carryover", self.buffer.origin, carry))
        candidates.append(Candidate("onboard", "onboard", fresh))

        idx, costs, excluded = select_candidate(x, candidates, self.evaluate)
        self.excluded_candidates += excluded
        chosen = candidates[idx]
        self.buffer = BufferState(inputs=np.asarray(chosen.inputs, dtype=float),
                                  source=chosen.source, origin=chosen.origin,
                                  selected_at=now)
        self.selection_counts[chosen.source] += 1
        self.origin_counts[chosen.origin] = self.origin_counts.get(chosen.origin, 0) + 1

        by_source = {c.source: costs[i] for i, c in enumerate(candidates)}
        info = {
            "source": chosen.source,
            "origin": chosen.origin,
            "costs": by_source,
            "selected_cost": costs[idx],
        }
        return self.buffer.inputs[0].copy(), info

    # -- uplink ---------------------------------------------------------------

    def emit_uplink(self, x: np.ndarray, now: int) -> UplinkPacket:
        """Snapshot of the measured state and the just-updated buffer."""
        return UplinkPacket(sent_at=now, state=np.asarray(x, dtype=float).copy(),
                            buffer=self.buffer.inputs.copy(),
                            buffer_origin=self.buffer.origin)
