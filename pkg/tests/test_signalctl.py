import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixflow.signalctl import (
    GREEN, RED, YELLOW, Phase, SignalProgram, default_program, signal_state, stop_line_constraint,
)


def test_t0_first_phase_green_others_red():
    prog = default_program()
    state = signal_state(prog, 0.0)
    for slot in range(4):
        assert state[slot] == (GREEN if slot in prog.phases[0].green else RED)


def test_periodic():
    prog = default_program()
    assert signal_state(prog, prog.cycle) == signal_state(prog, 0.0)


def test_default_timeline_t31_yellow():
    # Phase 0: green [0, 30), yellow [30, 33); phase 1 starts at 33.
    prog = default_program()
    assert prog.cycle == 66.0
    state = signal_state(prog, 31.0)
    for slot in prog.phases[0].green:
        assert state[slot] == YELLOW
    for slot in prog.phases[1].green:
        assert state[slot] == RED
    assert all(state[s] == GREEN for s in prog.phases[1].green for state in [signal_state(prog, 40.0)])


def test_offset_shifts_timeline():
    base = default_program()
    shifted = SignalProgram(base.phases, offset=10.0)
    assert signal_state(shifted, 21.0) == signal_state(base, 31.0)


@given(st.floats(0, 10_000))
def test_exactly_one_phase_active(t):
    prog = default_program()
    state = signal_state(prog, t)
    lit = {s for s in range(4) if state[s] != RED}
    assert any(lit == set(ph.green) for ph in prog.phases)


def test_conflicting_phase_rejected():
    prog = SignalProgram((Phase(frozenset({0, 1}), 30.0, 3.0),))
    conflicts = [[i % 2 != j % 2 for j in range(4)] for i in range(4)]
    with pytest.raises(ValueError):
        prog.check_against((0, 1, 2, 3), conflicts)


def test_red_always_virtual_leader():
    assert stop_line_constraint(RED, 5.0, 20.0, 2.0) == (20.0, 5.0)
    assert stop_line_constraint(RED, 0.0, 0.5, 2.0) is not None


def test_yellow_too_close_to_stop_passes():
    assert stop_line_constraint(YELLOW, 10.0, 5.0, 2.0) is None


def test_yellow_far_enough_stops():
    assert stop_line_constraint(YELLOW, 10.0, 40.0, 2.0) is not None


def test_green_free():
    assert stop_line_constraint(GREEN, 10.0, 5.0, 2.0) is None
