"""Longitudinal acceleration laws.

Every vehicle follows the Intelligent Driver Model (IDM). Robot vehicles inside
an unsignalized control zone replace it with a Stop/Go override.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

STOP = 0
GO = 1

EMERGENCY_DECEL = 8.0
MIN_STOP_DISTANCE = 0.5


@dataclass(frozen=True)
class IdmParams:
    """IDM parameter set. ``v0`` is overridden per edge by its speed limit."""

    v0: float = 13.89
    a: float = 1.5
    b: float = 2.0
    s0: float = 2.0
    time_headway: float = 1.5
    delta: float = 4.0

    def __post_init__(self) -> None:
        for name in ("v0", "a", "b", "s0", "time_headway", "delta"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"IdmParams.{name} must be a positive number, got {value!r}")
        if self.delta < 1:
            raise ValueError(f"IdmParams.delta must be >= 1, got {self.delta!r}")

    def with_v0(self, v0: float) -> "IdmParams":
        return IdmParams(v0, self.a, self.b, self.s0, self.time_headway, self.delta)


def desired_gap(v: float, dv: float, params: IdmParams) -> float:
    s_star = params.s0 + v * params.time_headway + v * dv / (2.0 * math.sqrt(params.a * params.b))
    return max(s_star, params.s0)


def idm_accel(v: float, leader: Optional[Tuple[float, float]], params: IdmParams) -> float:
    """IDM acceleration for speed ``v`` behind ``leader = (gap, dv)``.

    ``dv`` is own speed minus leader speed (positive when closing in). With no
    leader the interaction term vanishes. The result is clamped to
    ``[-EMERGENCY_DECEL, a]``.
    """
    free = 1.0 - (v / params.v0) ** params.delta
    if leader is None:
        interaction = 0.0
    else:
        gap, dv = leader
        assert gap > 0.0, f"non-positive gap {gap}"
        interaction = (desired_gap(v, dv, params) / gap) ** 2
    acc = params.a * (free - interaction)
    if acc > params.a:
        return params.a
    if acc < -EMERGENCY_DECEL:
        return -EMERGENCY_DECEL
    return acc


def rv_longitudinal(
    decision: int,
    v: float,
    d_int: float,
    params: IdmParams,
    leader: Optional[Tuple[float, float]] = None,
) -> float:
    """Acceleration of a robot vehicle inside the control zone.

    Go accelerates at the maximum rate up to the desired speed; with a leader
    the car-following law caps it so a queued vehicle is never rear-ended.
    Stop brakes with ``-v**2 / (2 * d_int)``, which brings the vehicle to rest
    at the stop line, and never brakes less than the leader requires.
    """
    if decision == GO:
        if leader is None:
            return params.a if v < params.v0 else idm_accel(v, None, params)
        return min(params.a, idm_accel(v, leader, params))
    if v <= 0.0:
        return 0.0
    acc = -(v * v) / (2.0 * max(d_int, MIN_STOP_DISTANCE))
    if leader is not None:
        acc = min(acc, idm_accel(v, leader, params))
    return acc


def step_kinematics(v: float, x: float, accel: float, dt: float) -> Tuple[float, float]:
    """Semi-implicit Euler step; speed never goes negative."""
    v_next = v + accel * dt
    if v_next < 0.0:
        v_next = 0.0
    return v_next, x + v_next * dt


def equilibrium_gap(v: float, params: IdmParams) -> float:
    """Closed-form steady-state gap behind a leader at equal speed ``v < v0``."""
    return (params.s0 + v * params.time_headway) / math.sqrt(1.0 - (v / params.v0) ** params.delta)
