"""Control-zone bookkeeping at intersections: observations, rewards, arbitration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .dynamics import GO, STOP

D_MAX = 4
QUEUE_SCALE = 20.0
WAIT_SCALE = 60.0

PROCEED = True
HOLD = False


@dataclass
class ZoneState:
    node: str
    slots: Tuple[int, ...]
    queue: List[int] = field(default_factory=lambda: [0] * D_MAX)
    wait: List[float] = field(default_factory=lambda: [0.0] * D_MAX)
    occupancy: List[int] = field(default_factory=lambda: [0] * D_MAX)
    latched: Set[int] = field(default_factory=set)
    conflict: bool = False


def normalized_queue(q: float) -> float:
    return min(max(q / QUEUE_SCALE, 0.0), 1.0)


def normalized_wait(tau: float) -> float:
    return min(max(tau / WAIT_SCALE, 0.0), 1.0)


def update_zone(
    zone: ZoneState,
    members: Mapping[int, Sequence],
    dt: float,
    stop_threshold: float,
    occupancy: Iterable[int] = (),
    in_window: bool = True,
) -> ZoneState:
    """Accrue waiting for ``members`` and recompute queue, wait and occupancy.

    ``members[slot]`` holds the vehicles within the zone radius on that approach.
    Each member slower than ``stop_threshold`` accrues ``dt`` of waiting, both on
    its per-zone record and its running total.
    """
    queue = [0] * D_MAX
    wait = [0.0] * D_MAX
    for slot, vehicles in members.items():
        stopped = 0
        total = 0.0
        for veh in vehicles:
            if veh.v < stop_threshold:
                stopped += 1
                veh.zone_wait += dt
                veh.wait_total += dt
                record = veh.zone_waits.get(zone.node)
                if record is not None:
                    record[1] += dt
                    if in_window:
                        record[2] += dt
            total += veh.zone_wait
        queue[slot] = stopped
        wait[slot] = total / len(vehicles) if vehicles else 0.0
    occ = [0] * D_MAX
    for slot in occupancy:
        occ[slot] = 1
    zone.queue, zone.wait, zone.occupancy = queue, wait, occ
    return zone


def build_observation(zone: ZoneState, d_max: int = D_MAX) -> np.ndarray:
    """Interleaved (queue, wait) pairs per compass slot, then the occupancy block."""
    obs = np.zeros(3 * d_max)
    for slot in range(min(d_max, D_MAX)):
        obs[2 * slot] = normalized_queue(zone.queue[slot])
        obs[2 * slot + 1] = normalized_wait(zone.wait[slot])
        obs[2 * d_max + slot] = zone.occupancy[slot]
    return obs


def conflicting_pairs(occupants: Sequence[Tuple[int, int]], conflicts) -> List[Tuple[int, int]]:
    """Vehicle-id pairs from conflicting slots among ``(vehicle id, slot)`` occupants."""
    pairs = []
    for i, (va, sa) in enumerate(occupants):
        for vb, sb in occupants[i + 1:]:
            if conflicts[sa][sb]:
                pairs.append((min(va, vb), max(va, vb)))
    return pairs


def detect_conflict(zone: ZoneState, conflicts) -> bool:
    occ = zone.occupancy
    for i in range(D_MAX):
        if not occ[i]:
            continue
        for j in range(i + 1, D_MAX):
            if occ[j] and conflicts[i][j]:
                return True
    return False


def compute_reward(action: int, tau_hat: float, conflict: bool, beta: float) -> float:
    local = tau_hat if action == GO else -tau_hat
    return beta * local + (-1.0 if conflict else 0.0)


def priority_score(zone: ZoneState, slot: int, weight: float) -> float:
    return weight * (zone.queue[slot] / QUEUE_SCALE) + (1.0 - weight) * normalized_wait(zone.wait[slot])


def arbitrate_priority(
    zone: ZoneState,
    demands: Iterable[int],
    conflicts,
    weight: float = 0.5,
    committed: Iterable[int] = (),
) -> Set[int]:
    """Slots allowed to enter this step.

    ``committed`` slots (vehicles that can no longer stop comfortably) are
    granted unconditionally. The remaining demanders are taken in descending
    score order, ties by compass order, and granted when they conflict with
    nothing granted so far.
    """
    granted = set(committed)
    ranked = sorted(set(demands) - granted, key=lambda s: (-priority_score(zone, s, weight), s))
    for slot in ranked:
        if all(not conflicts[slot][g] for g in granted):
            granted.add(slot)
    return granted


def hv_head_rule(
    zone: ZoneState,
    slot: int,
    conflicts,
    nearest: Mapping[int, Optional[Tuple[float, float]]],
    t_gap: float = 4.0,
    stop_threshold: float = 0.1,
) -> bool:
    """Gap acceptance for a human driver at the head of an unsignalized approach.

    ``nearest[s]`` is ``(distance to stop line, speed)`` of the closest vehicle
    on approach ``s``. Stationary vehicles are not treated as a threat.
    """
    for other in range(D_MAX):
        if other == slot or not conflicts[slot][other]:
            continue
        if zone.occupancy[other]:
            return HOLD
        near = nearest.get(other)
        if near is None:
            continue
        distance, speed = near
        if speed < stop_threshold:
            continue
        if distance / speed <= t_gap:
            return HOLD
    return PROCEED


__all__ = [
    "D_MAX", "GO", "STOP", "HOLD", "PROCEED", "ZoneState", "update_zone", "build_observation",
    "detect_conflict", "compute_reward", "arbitrate_priority", "hv_head_rule", "priority_score",
    "normalized_queue", "normalized_wait", "conflicting_pairs",
]
