"""Fixed-time signal programs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

GREEN = "G"
YELLOW = "Y"
RED = "R"

COMPASS = ("N", "E", "S", "W")


@dataclass(frozen=True)
class Phase:
    green: frozenset  # compass slots 0..3
    green_time: float
    yellow_time: float

    @property
    def duration(self) -> float:
        return self.green_time + self.yellow_time


@dataclass(frozen=True)
class SignalProgram:
    phases: Tuple[Phase, ...]
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("signal program needs at least one phase")
        for phase in self.phases:
            if phase.green_time <= 0 or phase.yellow_time <= 0:
                raise ValueError("phase durations must be positive")
            if not phase.green:
                raise ValueError("phase has an empty green set")

    @property
    def cycle(self) -> float:
        return sum(p.duration for p in self.phases)

    def check_against(self, directions: Sequence[int], conflicts) -> None:
        """Raise ValueError unless the program is valid for an intersection."""
        served = set()
        for k, phase in enumerate(self.phases):
            served |= phase.green
            slots = sorted(phase.green)
            for i in slots:
                for j in slots:
                    if conflicts[i][j]:
                        raise ValueError(
                            f"phase {k} greens conflicting directions {COMPASS[i]} and {COMPASS[j]}"
                        )
        missing = [COMPASS[d] for d in directions if d not in served]
        if missing:
            raise ValueError(f"directions {missing} never receive green")


def default_program() -> SignalProgram:
    """Two phases, N-S then E-W, 30 s green and 3 s yellow each."""
    return SignalProgram(
        phases=(
            Phase(frozenset({0, 2}), 30.0, 3.0),
            Phase(frozenset({1, 3}), 30.0, 3.0),
        ),
        offset=0.0,
    )


def signal_state(program: SignalProgram, t: float) -> Tuple[str, str, str, str]:
    """Per-slot signal colour at time ``t`` (slots ordered N, E, S, W)."""
    into = (t + program.offset) % program.cycle
    for phase in program.phases:
        if into < phase.duration:
            colour = GREEN if into < phase.green_time else YELLOW
            return tuple(colour if d in phase.green else RED for d in range(4))
        into -= phase.duration
    # float round-off at the very end of the cycle
    phase = program.phases[-1]
    return tuple(YELLOW if d in phase.green else RED for d in range(4))


def stop_line_constraint(
    signal: str, v: float, distance: float, comfortable_decel: float
) -> Optional[Tuple[float, float]]:
    """Virtual stationary leader ``(gap, dv)`` at the stop line, or None.

    On yellow the vehicle only stops if it can do so at ``comfortable_decel``.
    """
    if signal == GREEN:
        return None
    if signal == YELLOW and v > 0.0:
        needed = v * v / (2.0 * max(distance, 1e-9))
        if needed > comfortable_decel:
            return None
    return (distance, v)
