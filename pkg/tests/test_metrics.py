import csv

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixflow.metrics import (
    Event, MetricsReport, WaitRecord, avg_waiting_time, build_report, summarize, throughput,
    write_report,
)


def fixture_records():
    # three vehicles; vehicle 0 and 1 approach I1 from N, vehicle 2 from E
    return [WaitRecord(0, "I1", "N", 2.0), WaitRecord(1, "I1", "N", 4.0), WaitRecord(2, "I1", "E", 6.0)]


def test_two_vehicle_mean():
    recs = [WaitRecord(0, "I", "N", 2.0), WaitRecord(1, "I", "N", 4.0)]
    assert avg_waiting_time(recs, "network") == 3.0


def test_empty_scope_is_zero():
    assert avg_waiting_time([], "network") == 0.0
    assert avg_waiting_time(fixture_records(), "intersection", "I9") == 0.0


def test_hand_fixture_scopes():
    recs = fixture_records()
    assert avg_waiting_time(recs, "direction", ("I1", "N")) == 3.0
    assert avg_waiting_time(recs, "direction", ("I1", "E")) == 6.0
    assert avg_waiting_time(recs, "intersection", "I1") == 4.0
    assert avg_waiting_time(recs, "network") == 4.0


def test_network_scope_counts_vehicles_not_visits():
    recs = [WaitRecord(0, "I1", "N", 2.0), WaitRecord(0, "I2", "W", 4.0), WaitRecord(1, "I1", "E", 0.0)]
    assert avg_waiting_time(recs, "network") == 3.0


def test_window_rule():
    events = [Event(100.0, "arrival", 0, "", "B")]
    assert throughput(events, "network", (500.0, 1000.0)) == 0
    events = [Event(500.0, "arrival", 0, "", "B"), Event(1000.0, "arrival", 1, "", "B")]
    assert throughput(events, "network", (500.0, 1000.0)) == 1


def test_intersection_counting():
    events = [Event(600.0 + i, "interior_exit", i, "I3", "N") for i in range(7)]
    events += [Event(400.0, "interior_exit", 99, "I3", "N"), Event(700.0, "interior_exit", 98, "I4", "N")]
    assert throughput(events, "intersection", (500.0, 1000.0), "I3") == 7


def test_zero_demand_report():
    rep = build_report([], [], ["I1"], 1000.0, 0)
    assert rep.network_wait == 0.0 and rep.network_throughput == 0
    assert rep.per_intersection == {"I1": (0.0, 0)}


def _report(w, q):
    return MetricsReport({"I1": (w, q)}, w, q, 1, 1, 1, (500.0, 1000.0))


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_single_report_csv(tmp_path):
    write_report([_report(4.0, 3)], tmp_path)
    rows = _read(tmp_path / "network.csv")
    assert rows == [["scope", "eval W", "eval Q"], ["network", "4.00", "3"]]


def test_mean_of_two_reports(tmp_path):
    write_report({"2U+2S": [_report(4.0, 3), _report(6.0, 5)]}, tmp_path)
    rows = _read(tmp_path / "table.csv")
    assert rows[0] == ["scope", "2U+2S W", "2U+2S Q"]
    assert rows[1] == ["I1", "5.00", "4"]
    assert rows[2] == ["network", "5.00", "4"]


def test_table_layout_rows(tmp_path):
    nodes = {f"I{i:02d}": (1.0, 1) for i in range(14)}
    rep = MetricsReport(nodes, 1.0, 1, 1, 1, 1, (500.0, 1000.0))
    write_report({"a": [rep], "b": [rep]}, tmp_path)
    rows = _read(tmp_path / "table.csv")
    assert len(rows) == 1 + 14 + 1
    assert len(rows[0]) == 1 + 2 * 2


def test_unwritable_destination(tmp_path):
    target = tmp_path / "file"
    target.write_text("x")
    with pytest.raises(OSError):
        write_report([_report(1.0, 1)], target / "sub")


@given(st.lists(st.floats(0, 1000), min_size=1, max_size=30))
def test_network_mean_bounded(waits):
    recs = [WaitRecord(i, "I", "N", w) for i, w in enumerate(waits)]
    mean = avg_waiting_time(recs, "network")
    assert min(waits) - 1e-9 <= mean <= max(waits) + 1e-9


def test_summarize_means():
    out = summarize([_report(2.0, 1), _report(4.0, 2)])
    assert out["network"] == (3.0, 1.5)
