"""Scenario documents: parsing, validation, routing and demand generation."""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import IdmParams
from .rl.config import TrainConfig
from .signalctl import COMPASS, Phase, SignalProgram, default_program
from .vehicle import HV, RV, Vehicle

FORMAT_VERSION = 1
DEFAULT_SPEED = 13.89
DATA_DIR = Path(__file__).parent / "data"


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending part of the document."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioParseError(ScenarioError):
    pass


class NoPathError(ScenarioError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    boundary: bool


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    length: float
    speed_limit: float


@dataclass(frozen=True)
class Intersection:
    node: str
    # slot (0=N, 1=E, 2=S, 3=W) -> incoming edge id, approach side of the node
    approaches: Tuple[Tuple[int, str], ...]
    conflicts: Tuple[Tuple[int, ...], ...]

    @property
    def slots(self) -> Tuple[int, ...]:
        return tuple(s for s, _ in self.approaches)

    def slot_of(self, edge_id: str) -> int:
        for slot, e in self.approaches:
            if e == edge_id:
                return slot
        raise KeyError(edge_id)


@dataclass(frozen=True)
class RoadNetwork:
    nodes: Mapping[str, Node]
    edges: Mapping[str, Edge]
    intersections: Mapping[str, Intersection]
    conflict_overrides: Mapping[str, Tuple[Tuple[str, str], ...]] = field(default_factory=dict)

    def out_edges(self, node: str) -> List[Edge]:
        return sorted((e for e in self.edges.values() if e.src == node), key=lambda e: e.id)

    def in_edges(self, node: str) -> List[Edge]:
        return sorted((e for e in self.edges.values() if e.dst == node), key=lambda e: e.id)

    @property
    def boundary_nodes(self) -> List[str]:
        return sorted(n.id for n in self.nodes.values() if n.boundary)


@dataclass(frozen=True)
class ControlAssignment:
    # intersection id -> signal program id, or None when RV-controlled
    modes: Mapping[str, Optional[str]]
    switch_order: Tuple[str, ...] = ()

    @property
    def unsignalized(self) -> Tuple[str, ...]:
        return tuple(sorted(k for k, m in self.modes.items() if m is None))

    @property
    def signalized(self) -> Tuple[str, ...]:
        return tuple(sorted(k for k, m in self.modes.items() if m is not None))

    @property
    def x(self) -> int:
        return len(self.unsignalized)

    @property
    def y(self) -> int:
        return len(self.signalized)

    @property
    def label(self) -> str:
        return f"{self.x}U+{self.y}S"


@dataclass(frozen=True)
class ODPair:
    origin: str
    destination: str
    rate: float


@dataclass(frozen=True)
class DemandSpec:
    od: Tuple[ODPair, ...]
    rv_penetration: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.5
    horizon: float = 1000.0
    zone_radius: float = 30.0
    stop_speed: float = 0.1
    idm: IdmParams = IdmParams()
    programs: Mapping[str, SignalProgram] = field(default_factory=lambda: {"default": default_program()})
    beta: float = 1.0
    priority_weight: float = 0.5
    vehicle_length: float = 5.0
    interior_length: float = 15.0
    decision_interval: float = 1.0
    hv_gap_time: float = 4.0
    lookahead: float = 100.0
    raw_tau_reward: bool = False
    windowed_wait: bool = False

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class Scenario:
    name: str
    network: RoadNetwork
    control: ControlAssignment
    demand: DemandSpec
    sim: SimParams
    train: TrainConfig
    routes: Mapping[Tuple[str, str], Tuple[str, ...]]

    def to_document(self) -> dict:
        return scenario_document(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))

    def with_config(self, config: str) -> "Scenario":
        """Reassign control modes for an ``xU+yS`` label.

        The first ``x`` intersections of the switch order become RV-controlled;
        the rest keep (or fall back to) signal programs.
        """
        x, y = parse_config_label(config)
        total = len(self.network.intersections)
        if x + y != total:
            raise ScenarioError("control", f"{config} does not cover {total} intersections")
        order = self.control.switch_order or tuple(sorted(self.network.intersections))
        chosen = set(order[:x])
        modes = {}
        for node in sorted(self.network.intersections):
            current = self.control.modes[node]
            modes[node] = None if node in chosen else (current or "default")
        return replace(self, control=ControlAssignment(modes, order))

    def with_rv_rate(self, rate: float) -> "Scenario":
        if not 0.0 <= rate <= 1.0:
            raise ScenarioError("demand.rv_penetration", f"must be in [0, 1], got {rate}")
        return replace(self, demand=replace(self.demand, rv_penetration=float(rate)))

    def with_train(self, **overrides: Any) -> "Scenario":
        data = self.train.to_dict()
        data.update(overrides)
        try:
            return replace(self, train=TrainConfig.from_dict(data))
        except (TypeError, ValueError) as exc:
            raise ScenarioError("train", str(exc)) from None

    def with_sim(self, **overrides: Any) -> "Scenario":
        return replace(self, sim=replace(self.sim, **overrides))


_CONFIG_RE = re.compile(r"^\s*(\d+)\s*U\s*\+\s*(\d+)\s*S\s*$", re.IGNORECASE)


def parse_config_label(label: str) -> Tuple[int, int]:
    m = _CONFIG_RE.match(label)
    if not m:
        raise ScenarioError("control.config", f"expected 'xU+yS', got {label!r}")
    return int(m.group(1)), int(m.group(2))


def _compass_slot(center: Node, other: Node) -> int:
    bearing = math.degrees(math.atan2(other.x - center.x, other.y - center.y)) % 360.0
    return int(round(bearing / 90.0)) % 4


def _default_conflicts() -> Tuple[Tuple[int, ...], ...]:
    # perpendicular approaches cross, opposing approaches do not
    return tuple(tuple(1 if (i - j) % 2 == 1 else 0 for j in range(4)) for i in range(4))


def _require(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise ScenarioError(f"{where}.{key}", "missing required field")
    return data[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(where, f"expected a finite number, got {value!r}")
    return float(value)


def _parse_network(data: Mapping[str, Any]) -> RoadNetwork:
    if not isinstance(data, Mapping):
        raise ScenarioError("network", "expected an object")
    nodes: Dict[str, Node] = {}
    for i, raw in enumerate(_require(data, "nodes", "network")):
        where = f"network.nodes[{i}]"
        nid = str(_require(raw, "id", where))
        if nid in nodes:
            raise ScenarioError(where, f"duplicate node id {nid!r}")
        nodes[nid] = Node(nid, _number(_require(raw, "x", where), where + ".x"),
                          _number(_require(raw, "y", where), where + ".y"),
                          bool(raw.get("boundary", False)))
    edges: Dict[str, Edge] = {}
    for i, raw in enumerate(_require(data, "edges", "network")):
        where = f"network.edges[{i}]"
        eid = str(_require(raw, "id", where))
        if eid in edges:
            raise ScenarioError(where, f"duplicate edge id {eid!r}")
        src, dst = str(_require(raw, "from", where)), str(_require(raw, "to", where))
        for end, name in ((src, "from"), (dst, "to")):
            if end not in nodes:
                raise ScenarioError(f"{where}.{name}", f"edge {eid!r} references unknown node {end!r}")
        if src == dst:
            raise ScenarioError(where, f"edge {eid!r} is a self-loop")
        if "length" in raw:
            length = _number(raw["length"], where + ".length")
        else:
            a, b = nodes[src], nodes[dst]
            length = math.hypot(a.x - b.x, a.y - b.y)
        speed = _number(raw.get("speed_limit", DEFAULT_SPEED), where + ".speed_limit")
        if length <= 0 or speed <= 0:
            raise ScenarioError(where, "length and speed_limit must be positive")
        edges[eid] = Edge(eid, src, dst, length, speed)

    overrides_raw = data.get("conflicts", {}) or {}
    overrides: Dict[str, Tuple[Tuple[str, str], ...]] = {}
    for node, pairs in overrides_raw.items():
        overrides[str(node)] = tuple(sorted(tuple(sorted((str(a), str(b)))) for a, b in pairs))

    intersections: Dict[str, Intersection] = {}
    for node in sorted(nodes.values(), key=lambda n: n.id):
        incoming = [e for e in edges.values() if e.dst == node.id]
        outgoing = [e for e in edges.values() if e.src == node.id]
        if node.boundary:
            if len(incoming) > 1 or len(outgoing) > 1 or not (incoming or outgoing):
                raise ScenarioError(f"network.nodes.{node.id}",
                                    "boundary node needs exactly one edge per travel direction")
            continue
        if not 2 <= len(incoming) <= 4:
            raise ScenarioError(f"network.nodes.{node.id}",
                                f"intersection has {len(incoming)} incoming directions (need 2-4)")
        approaches = {}
        for e in incoming:
            slot = _compass_slot(node, nodes[e.src])
            if slot in approaches:
                raise ScenarioError(f"network.nodes.{node.id}",
                                    f"edges {approaches[slot]!r} and {e.id!r} share approach {COMPASS[slot]}")
            approaches[slot] = e.id
        if node.id in overrides:
            matrix = [[0] * 4 for _ in range(4)]
            for a, b in overrides[node.id]:
                try:
                    i, j = COMPASS.index(a), COMPASS.index(b)
                except ValueError:
                    raise ScenarioError(f"network.conflicts.{node.id}", f"bad direction in {(a, b)}") from None
                if i == j:
                    raise ScenarioError(f"network.conflicts.{node.id}", "a direction cannot conflict with itself")
                matrix[i][j] = matrix[j][i] = 1
            conflicts = tuple(tuple(r) for r in matrix)
        else:
            conflicts = _default_conflicts()
        intersections[node.id] = Intersection(node.id, tuple(sorted(approaches.items())), conflicts)
    for node in overrides:
        if node not in intersections:
            raise ScenarioError(f"network.conflicts.{node}", "not an intersection")
    return RoadNetwork(nodes, edges, intersections, overrides)


def _parse_program(pid: str, raw: Mapping[str, Any]) -> SignalProgram:
    where = f"control.programs.{pid}"
    phases = []
    for k, ph in enumerate(_require(raw, "phases", where)):
        greens = ph.get("green", [])
        try:
            slots = frozenset(COMPASS.index(str(g)) for g in greens)
        except ValueError:
            raise ScenarioError(f"{where}.phases[{k}].green", f"bad direction in {greens}") from None
        phases.append(Phase(slots, _number(ph.get("green_time", 30.0), where),
                            _number(ph.get("yellow_time", 3.0), where)))
    try:
        return SignalProgram(tuple(phases), _number(raw.get("offset", 0.0), where + ".offset"))
    except ValueError as exc:
        raise ScenarioError(where, str(exc)) from None


def _parse_control(data: Mapping[str, Any], network: RoadNetwork):
    if not isinstance(data, Mapping):
        raise ScenarioError("control", "expected an object")
    programs = {"default": default_program()}
    for pid, raw in (data.get("programs") or {}).items():
        programs[str(pid)] = _parse_program(str(pid), raw)
    unsignalized = [str(n) for n in data.get("unsignalized", [])]
    signalized_raw = data.get("signalized", {})
    if isinstance(signalized_raw, list):
        signalized = {str(n): "default" for n in signalized_raw}
    else:
        signalized = {str(k): str(v) for k, v in signalized_raw.items()}
    names = set(network.intersections)
    for n in list(unsignalized) + list(signalized):
        if n not in names:
            raise ScenarioError("ControlAssignment", f"{n!r} is not an intersection")
    if len(set(unsignalized)) != len(unsignalized) or set(unsignalized) & set(signalized):
        raise ScenarioError("ControlAssignment", "an intersection is listed twice")
    missing = names - set(unsignalized) - set(signalized)
    if missing:
        raise ScenarioError("ControlAssignment", f"intersections without a mode: {sorted(missing)}")
    if "config" in data:
        x, y = parse_config_label(str(data["config"]))
        if (x, y) != (len(unsignalized), len(signalized)):
            raise ScenarioError(
                "ControlAssignment",
                f"declared {x}U+{y}S but lists {len(unsignalized)} unsignalized and "
                f"{len(signalized)} signalized intersections",
            )
    for node, pid in signalized.items():
        if pid not in programs:
            raise ScenarioError("ControlAssignment", f"{node!r} references unknown program {pid!r}")
        inter = network.intersections[node]
        try:
            programs[pid].check_against(inter.slots, inter.conflicts)
        except ValueError as exc:
            raise ScenarioError(f"control.programs.{pid}", f"invalid at {node!r}: {exc}") from None
    order = tuple(str(n) for n in data.get("switch_order", []))
    if order and sorted(order) != sorted(names):
        raise ScenarioError("control.switch_order", "must list every intersection exactly once")
    modes = {n: (None if n in unsignalized else signalized[n]) for n in sorted(names)}
    return ControlAssignment(modes, order), programs


def _parse_sim(data: Mapping[str, Any], programs: Mapping[str, SignalProgram]) -> SimParams:
    data = dict(data or {})
    idm_raw = data.pop("idm", {}) or {}
    try:
        idm = IdmParams(**{k: float(v) for k, v in idm_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioError("sim.idm", str(exc)) from None
    defaults = SimParams()
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if not hasattr(defaults, key) or key in ("idm", "programs"):
            raise ScenarioError(f"sim.{key}", "unknown field")
        if isinstance(getattr(defaults, key), bool):
            kwargs[key] = bool(value)
        else:
            kwargs[key] = _number(value, f"sim.{key}")
    params = SimParams(idm=idm, programs=dict(programs), **kwargs)
    if params.dt <= 0:
        raise ScenarioError("sim.dt", "must be positive")
    if params.horizon < 0 or abs(params.horizon / params.dt - round(params.horizon / params.dt)) > 1e-9:
        raise ScenarioError("sim.horizon", "must be a non-negative multiple of dt")
    if params.zone_radius <= 0:
        raise ScenarioError("sim.zone_radius", "must be positive")
    for key in ("stop_speed", "vehicle_length", "interior_length", "decision_interval",
                "hv_gap_time", "lookahead"):
        if getattr(params, key) <= 0:
            raise ScenarioError(f"sim.{key}", "must be positive")
    if not 0.0 <= params.priority_weight <= 1.0:
        raise ScenarioError("sim.priority_weight", "must be in [0, 1]")
    return params


def route_for(origin: str, destination: str, network: RoadNetwork) -> Tuple[str, ...]:
    """Fastest edge sequence from ``origin`` to ``destination``.

    Travel time is length over speed limit. Equal-time routes are ordered by
    their edge id sequence and the smallest wins.
    """
    if origin not in network.nodes or destination not in network.nodes:
        raise NoPathError("route", f"unknown node in {origin!r}->{destination!r}")
    for n in (origin, destination):
        if not network.nodes[n].boundary:
            raise NoPathError("route", f"{n!r} is not a boundary node")
    out: Dict[str, List[Edge]] = {}
    for e in network.edges.values():
        out.setdefault(e.src, []).append(e)
    heap: List[Tuple[float, Tuple[str, ...], str]] = [(0.0, (), origin)]
    settled = set()
    while heap:
        cost, path, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == destination and path:
            return path
        if network.nodes[node].boundary and node != origin:
            continue  # boundary nodes are sinks
        for e in out.get(node, ()):
            if e.dst not in settled:
                heapq.heappush(heap, (round(cost + e.length / e.speed_limit, 9), path + (e.id,), e.dst))
    raise NoPathError("route", f"no path from {origin!r} to {destination!r}")


def _parse_demand(data: Mapping[str, Any], network: RoadNetwork) -> DemandSpec:
    if not isinstance(data, Mapping):
        raise ScenarioError("demand", "expected an object")
    pairs = []
    for i, raw in enumerate(data.get("od", [])):
        where = f"demand.od[{i}]"
        rate = _number(_require(raw, "rate", where), where + ".rate")
        if rate < 0:
            raise ScenarioError(where + ".rate", f"negative rate {rate}")
        src, dst = str(_require(raw, "from", where)), str(_require(raw, "to", where))
        for n in (src, dst):
            if n not in network.nodes or not network.nodes[n].boundary:
                raise ScenarioError(where, f"{n!r} is not a boundary node")
        pairs.append(ODPair(src, dst, rate))
    pen = _number(data.get("rv_penetration", 0.5), "demand.rv_penetration")
    if not 0.0 <= pen <= 1.0:
        raise ScenarioError("demand.rv_penetration", f"must be in [0, 1], got {pen}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("demand.seed", "must be a non-negative integer")
    return DemandSpec(tuple(pairs), pen, seed)


def parse_scenario(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioParseError("document", "top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError("format_version", f"unsupported version {version!r} (expected {FORMAT_VERSION})")
    unknown = set(doc) - {"format_version", "name", "network", "control", "demand", "sim", "train"}
    if unknown:
        raise ScenarioError("document", f"unknown top-level keys {sorted(unknown)}")
    network = _parse_network(_require(doc, "network", "document"))
    control, programs = _parse_control(_require(doc, "control", "document"), network)
    demand = _parse_demand(_require(doc, "demand", "document"), network)
    sim = _parse_sim(doc.get("sim", {}), programs)
    try:
        train = TrainConfig.from_dict(doc.get("train", {}) or {})
    except (TypeError, ValueError) as exc:
        raise ScenarioError("train", str(exc)) from None
    routes = {}
    for pair in demand.od:
        key = (pair.origin, pair.destination)
        if key not in routes:
            try:
                routes[key] = route_for(pair.origin, pair.destination, network)
            except NoPathError as exc:
                raise ScenarioError("DemandSpec", str(exc)) from None
    return Scenario(str(doc.get("name", "scenario")), network, control, demand, sim, train, routes)


def load_scenario(source: Union[str, bytes, Path, Mapping[str, Any]]) -> Scenario:
    """Load a scenario from a path, JSON text, bytes or an already-parsed dict."""
    if isinstance(source, Mapping):
        return parse_scenario(source)
    if isinstance(source, Path):
        text = source.read_bytes()
    else:
        text = source
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioParseError("document", f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError("document", f"malformed JSON: {exc}") from None
    return parse_scenario(doc)


def load_preset(name: str) -> Scenario:
    """Load one of the bundled networks: ``single``, ``grid2x2`` or ``grid14``."""
    path = DATA_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(path)
    return load_scenario(path)


def _program_document(program: SignalProgram) -> dict:
    return {
        "offset": program.offset,
        "phases": [
            {"green": [COMPASS[s] for s in sorted(p.green)],
             "green_time": p.green_time, "yellow_time": p.yellow_time}
            for p in program.phases
        ],
    }


def scenario_document(s: Scenario) -> dict:
    """Fully expanded document; loading it back yields an equal scenario."""
    net = s.network
    sim = s.sim
    sim_doc = {k: getattr(sim, k) for k in (
        "dt", "horizon", "zone_radius", "stop_speed", "beta", "priority_weight",
        "vehicle_length", "interior_length", "decision_interval", "hv_gap_time", "lookahead",
        "raw_tau_reward", "windowed_wait")}
    idm = sim.idm
    sim_doc["idm"] = {"v0": idm.v0, "a": idm.a, "b": idm.b, "s0": idm.s0,
                      "time_headway": idm.time_headway, "delta": idm.delta}
    return {
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "network": {
            "nodes": [{"id": n.id, "x": n.x, "y": n.y, "boundary": n.boundary}
                      for n in sorted(net.nodes.values(), key=lambda n: n.id)],
            "edges": [{"id": e.id, "from": e.src, "to": e.dst, "length": e.length,
                       "speed_limit": e.speed_limit}
                      for e in sorted(net.edges.values(), key=lambda e: e.id)],
            "conflicts": {k: [list(p) for p in v] for k, v in sorted(net.conflict_overrides.items())},
        },
        "control": {
            "config": s.control.label,
            "unsignalized": list(s.control.unsignalized),
            "signalized": {n: s.control.modes[n] for n in s.control.signalized},
            "programs": {pid: _program_document(p) for pid, p in sorted(sim.programs.items())},
            "switch_order": list(s.control.switch_order),
        },
        "demand": {
            "od": [{"from": p.origin, "to": p.destination, "rate": p.rate} for p in s.demand.od],
            "rv_penetration": s.demand.rv_penetration,
            "seed": s.demand.seed,
        },
        "sim": sim_doc,
        "train": s.train.to_dict(),
    }


def spawn_vehicles(
    demand: DemandSpec,
    rng: np.random.Generator,
    t: float,
    dt: float,
    first_id: int = 0,
    vehicle_length: float = 5.0,
) -> List[Vehicle]:
    """Poisson arrivals for one step, in OD-pair order.

    Each OD pair draws a Poisson count with mean ``rate * dt``; each arrival is
    an RV with probability ``rv_penetration``. Vehicles get consecutive ids
    starting at ``first_id``. Placement on the network is the caller's job.
    """
    out: List[Vehicle] = []
    vid = first_id
    for pair in demand.od:
        if pair.rate <= 0.0:
            continue
        for _ in range(int(rng.poisson(pair.rate * dt))):
            kind = RV if rng.random() < demand.rv_penetration else HV
            out.append(Vehicle(vid, kind, pair.origin, pair.destination, t, vehicle_length))
            vid += 1
    return out
