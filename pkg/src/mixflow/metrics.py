"""Average waiting time and throughput at direction, intersection and network scope."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union


class Event(NamedTuple):
    t: float
    kind: str
    vehicle: int
    node: str
    detail: str

    def to_line(self) -> str:
        return f"{self.t:.2f},{self.kind},{self.vehicle},{self.node},{self.detail}"


class WaitRecord(NamedTuple):
    vehicle: int
    node: str
    direction: str
    wait: float


@dataclass(frozen=True)
class MetricsReport:
    per_intersection: Mapping[str, Tuple[float, int]]  # node -> (W s, Q)
    network_wait: float
    network_throughput: int
    vehicles: int
    spawned: int
    arrived: int
    window: Tuple[float, float]
    label: str = ""
    per_direction: Mapping[Tuple[str, str], float] = field(default_factory=dict)


def avg_waiting_time(
    records: Iterable[WaitRecord],
    scope: str = "network",
    key: Union[None, str, Tuple[str, str]] = None,
) -> float:
    """Mean waiting time in seconds over a scope; an empty scope gives 0.

    ``direction`` scope takes ``key=(node, direction)``, ``intersection`` scope
    takes ``key=node``. Network scope sums every vehicle's waits and divides by
    the number of distinct vehicles.
    """
    records = list(records)
    if scope == "direction":
        node, direction = key
        waits = [r.wait for r in records if r.node == node and r.direction == direction]
        return math.fsum(waits) / len(waits) if waits else 0.0
    if scope == "intersection":
        waits = [r.wait for r in records if r.node == key]
        return math.fsum(waits) / len(waits) if waits else 0.0
    if scope == "network":
        vehicles = {r.vehicle for r in records}
        return math.fsum(r.wait for r in records) / len(vehicles) if vehicles else 0.0
    raise ValueError(f"unknown scope {scope!r}")


def throughput(
    events: Iterable[Event],
    scope: str,
    window: Tuple[float, float],
    node: Optional[str] = None,
) -> int:
    """Vehicles passing ``node`` (intersection scope) or reaching their
    destination (network scope) with event time in ``[start, end)``."""
    start, end = window
    if scope == "intersection":
        return sum(1 for e in events if e.kind == "interior_exit" and e.node == node and start <= e.t < end)
    if scope == "network":
        return sum(1 for e in events if e.kind == "arrival" and start <= e.t < end)
    raise ValueError(f"unknown scope {scope!r}")


def build_report(
    records: Sequence[WaitRecord],
    events: Sequence[Event],
    intersections: Sequence[str],
    horizon: float,
    spawned: int,
    label: str = "",
) -> MetricsReport:
    window = (horizon / 2.0, horizon)
    per_node = {
        node: (avg_waiting_time(records, "intersection", node), throughput(events, "intersection", window, node))
        for node in sorted(intersections)
    }
    per_dir = {}
    for node, direction in sorted({(r.node, r.direction) for r in records}):
        per_dir[(node, direction)] = avg_waiting_time(records, "direction", (node, direction))
    arrived = sum(1 for e in events if e.kind == "arrival")
    return MetricsReport(
        per_intersection=per_node,
        network_wait=avg_waiting_time(records, "network"),
        network_throughput=throughput(events, "network", window),
        vehicles=len({r.vehicle for r in records}),
        spawned=spawned,
        arrived=arrived,
        window=window,
        label=label,
        per_direction=per_dir,
    )


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def summarize(reports: Sequence[MetricsReport]) -> Dict[str, Tuple[float, float]]:
    """Mean (W, Q) per intersection plus a ``network`` entry."""
    if not reports:
        raise ValueError("need at least one report")
    nodes = sorted(reports[0].per_intersection)
    out = {}
    for node in nodes:
        out[node] = (_mean([r.per_intersection[node][0] for r in reports]),
                     _mean([r.per_intersection[node][1] for r in reports]))
    out["network"] = (_mean([r.network_wait for r in reports]),
                      _mean([r.network_throughput for r in reports]))
    return out


class ReportError(OSError):
    pass


def write_report(
    reports: Union[Sequence[MetricsReport], Mapping[str, Sequence[MetricsReport]]],
    destination: Union[str, Path],
) -> List[Path]:
    """Write ``per_intersection.csv``, ``network.csv`` and the combined ``table.csv``.

    ``reports`` maps a column label (e.g. ``8U+6S@0.8``) to the reports of the
    evaluation runs for that setting; a plain sequence becomes one column.
    Cells are means over runs.
    """
    if not isinstance(reports, Mapping):
        reports = {"eval": list(reports)}
    if not reports or any(len(v) == 0 for v in reports.values()):
        raise ValueError("need at least one report per column")
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {dest}: {exc}") from None
    labels = list(reports)
    summaries = {label: summarize(reports[label]) for label in labels}
    nodes = sorted(k for k in summaries[labels[0]] if k != "network")
    header = ["scope"] + [f"{label} {m}" for label in labels for m in ("W", "Q")]

    def row(key: str) -> List[str]:
        cells = [key]
        for label in labels:
            w, q = summaries[label].get(key, (0.0, 0.0))
            cells += [f"{w:.2f}", f"{q:.0f}"]
        return cells

    outputs = {
        "per_intersection.csv": [row(n) for n in nodes],
        "network.csv": [row("network")],
        "table.csv": [row(n) for n in nodes] + [row("network")],
    }
    paths = []
    for name, rows in outputs.items():
        path = dest / name
        try:
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from None
        paths.append(path)
    return paths
