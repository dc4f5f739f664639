"""Fixed-step simulation engine.

Each step runs, in this order: spawning, signal update, control-zone update
with RV decisions and priority arbitration, accelerations, kinematic update,
segment transfers and arrivals, then conflict bookkeeping.

Roads are single-lane directed edges. At every intersection the interior is
modelled as one short merge segment per outgoing edge; a vehicle occupies the
interior from the moment its front crosses the stop line until its rear has
left the merge segment.
"""

from __future__ import annotations

import struct
from bisect import insort
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import signalctl
from .dynamics import GO, STOP, IdmParams, idm_accel, rv_longitudinal, step_kinematics
from .metrics import Event, MetricsReport, WaitRecord, build_report
from .scenario import Scenario, spawn_vehicles
from .signalctl import COMPASS, YELLOW, signal_state, stop_line_constraint
from .vehicle import HV, RV, Vehicle
from .zonectl import (
    PROCEED, ZoneState, arbitrate_priority, build_observation, compute_reward,
    conflicting_pairs, detect_conflict, hv_head_rule, normalized_wait, update_zone,
)

Policy = Callable[[np.ndarray], int]
GAP_FLOOR = 0.01
EPS = 1e-9


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool


class Leader(NamedTuple):
    vehicle: Optional[Vehicle]  # None for a virtual stop-line leader
    gap: float
    dv: float


class Segment:
    __slots__ = ("idx", "id", "length", "idm", "vehicles", "straddlers", "node", "slot", "merge")

    def __init__(self, idx: int, sid: str, length: float, idm: IdmParams, node: Optional[str],
                 slot: int, merge: bool) -> None:
        self.idx = idx
        self.id = sid
        self.length = length
        self.idm = idm
        self.vehicles: List[Vehicle] = []
        self.straddlers: List[Vehicle] = []
        # approach edges: the intersection ahead and the compass slot they feed;
        # merge segments: the intersection they belong to
        self.node = node
        self.slot = slot
        self.merge = merge


@dataclass
class EpisodeResult:
    report: MetricsReport
    events: List[Event]
    trace: List[tuple]
    rewards: List[float]
    snapshot_hash: int
    spawned: int
    active: int
    arrived: int
    backlog: int
    conflicts: int
    negative_gaps: int = 0
    negative_speeds: int = 0
    records: List[WaitRecord] = field(default_factory=list)

    @property
    def episode_return(self) -> float:
        return float(sum(self.rewards))

    def event_log(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.events)

    def trace_csv(self) -> str:
        lines = ["t,intersection,vehicle,direction,action,granted,reward"]
        for t, node, vid, direction, action, granted, reward in self.trace:
            lines.append(f"{t:.2f},{node},{vid},{direction},{'go' if action == GO else 'stop'},"
                         f"{int(granted)},{reward:.6f}")
        return "\n".join(lines) + "\n"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class World:
    """Mutable simulation state for one episode; single writer."""

    def __init__(self, scenario: Scenario, seed: int, policy: Optional[Policy] = None,
                 on_transition: Optional[Callable[[Transition], None]] = None,
                 check_invariants: bool = False) -> None:
        self.scenario = scenario
        self.p = scenario.sim
        self.policy = policy
        self.on_transition = on_transition
        self.check = check_invariants
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.t = 0.0
        self.step_index = 0
        self.events: List[Event] = []
        self.trace: List[tuple] = []
        self.rewards: List[float] = []
        self.next_id = 0
        self.spawned = 0
        self.arrived: List[Vehicle] = []
        self.vehicles: Dict[int, Vehicle] = {}
        self.pending: Dict[int, list] = {}
        self.conflict_count = 0
        self.negative_gaps = 0
        self.negative_speeds = 0
        self._build_segments()
        self.backlog: Dict[int, Deque[Vehicle]] = {}
        self.zones = {n: ZoneState(n, inter.slots) for n, inter in scenario.network.intersections.items()}
        self.occupants: Dict[str, List[Vehicle]] = {n: [] for n in scenario.network.intersections}
        self.active_pairs: Dict[str, set] = {n: set() for n in scenario.network.intersections}
        self.signals: Dict[str, Tuple[str, ...]] = {}
        self.obs_cache: Dict[str, np.ndarray] = {}

    # ----------------------------------------------------------------- setup
    def _build_segments(self) -> None:
        net = self.scenario.network
        idm = self.p.idm
        self.segments: List[Segment] = []
        self.edge_seg: Dict[str, int] = {}
        self.merge_seg: Dict[Tuple[str, str], int] = {}
        idm_cache: Dict[float, IdmParams] = {}

        def params(speed: float) -> IdmParams:
            if speed not in idm_cache:
                idm_cache[speed] = idm.with_v0(speed)
            return idm_cache[speed]

        for eid in sorted(net.edges):
            e = net.edges[eid]
            inter = net.intersections.get(e.dst)
            slot = inter.slot_of(eid) if inter else -1
            seg = Segment(len(self.segments), eid, e.length, params(e.speed_limit),
                          e.dst if inter else None, slot, False)
            self.segments.append(seg)
            self.edge_seg[eid] = seg.idx
        for node in sorted(net.intersections):
            for e in net.out_edges(node):
                seg = Segment(len(self.segments), f"{node}>{e.id}", self.p.interior_length,
                              params(e.speed_limit), node, -1, True)
                self.segments.append(seg)
                self.merge_seg[(node, e.id)] = seg.idx
        self.paths: Dict[Tuple[str, str], List[int]] = {}
        for key, route in self.scenario.routes.items():
            self.paths[key] = self._path(route)

    def _path(self, route: Sequence[str]) -> List[int]:
        net = self.scenario.network
        path = []
        for i, eid in enumerate(route):
            path.append(self.edge_seg[eid])
            if i + 1 < len(route):
                node = net.edges[eid].dst
                path.append(self.merge_seg[(node, route[i + 1])])
        return path

    def add_vehicle(self, origin: str, destination: str, kind: int = HV) -> Vehicle:
        """Queue one extra vehicle at ``origin`` (counts as spawned)."""
        key = (origin, destination)
        if key not in self.paths:
            from .scenario import route_for
            route = route_for(origin, destination, self.scenario.network)
            self.paths[key] = self._path(route)
        veh = Vehicle(self.next_id, kind, origin, destination, self.t, self.p.vehicle_length)
        self.next_id += 1
        self._enqueue(veh)
        return veh

    def _enqueue(self, veh: Vehicle) -> None:
        veh.path = self.paths[(veh.origin, veh.destination)]
        veh.route = tuple(self.segments[i].id for i in veh.path if not self.segments[i].merge)
        self.spawned += 1
        self.backlog.setdefault(veh.path[0], deque()).append(veh)
        self.events.append(Event(self.t, "spawn", veh.id, "", "RV" if veh.kind == RV else "HV"))

    # ------------------------------------------------------------- queries
    def leader_of(self, veh: Vehicle) -> Optional[Leader]:
        """Nearest real leader ahead along the path, or the virtual stop-line
        leader when the vehicle is held; whichever is closer."""
        seg = self.segments[veh.path[veh.cursor]]
        best = self._real_leader(veh, seg)
        if veh.hold and not seg.merge:
            gap = seg.length - veh.pos
            if best is None or gap < best.gap:
                best = Leader(None, gap, veh.v)
        return best

    def _real_leader(self, veh: Vehicle, seg: Segment, index: Optional[int] = None) -> Optional[Leader]:
        if index is None:
            index = seg.vehicles.index(veh)
        if index > 0:
            lead = seg.vehicles[index - 1]
            return Leader(lead, lead.pos - lead.length - veh.pos, veh.v - lead.v)
        best: Optional[Leader] = None
        for s in seg.straddlers:
            gap = seg.length + s.pos - s.length - veh.pos
            if best is None or gap < best.gap:
                best = Leader(s, gap, veh.v - s.v)
        dist = seg.length - veh.pos
        path = veh.path
        for k in range(veh.cursor + 1, len(path)):
            if dist > self.p.lookahead:
                break
            nxt = self.segments[path[k]]
            if nxt.vehicles:
                r = nxt.vehicles[-1]
                gap = dist + r.pos - r.length
                if best is None or gap < best.gap:
                    best = Leader(r, gap, veh.v - r.v)
                break
            dist += nxt.length
        return best

    # ---------------------------------------------------------------- step
    def step(self) -> None:
        p = self.p
        t = self.t
        self._spawn()
        self._signals()
        self._zones()
        self._accelerate()
        self._move()
        self.t = (self.step_index + 1) * p.dt
        self.step_index += 1
        self._transfer()
        self._conflicts()
        if self.check:
            self.check_state()

    def _spawn(self) -> None:
        new = spawn_vehicles(self.scenario.demand, self.rng, self.t, self.p.dt, self.next_id,
                             self.p.vehicle_length)
        self.next_id += len(new)
        for veh in new:
            self._enqueue(veh)
        s0 = self.p.idm.s0
        for sidx in sorted(self.backlog):
            queue = self.backlog[sidx]
            seg = self.segments[sidx]
            while queue:
                if seg.vehicles:
                    r = seg.vehicles[-1]
                    if r.pos - r.length < s0:
                        break
                veh = queue.popleft()
                veh.pos, veh.v, veh.cursor = 0.0, 0.0, 0
                veh.release_t = self.t
                seg.vehicles.append(veh)
                self.vehicles[veh.id] = veh
                self.events.append(Event(self.t, "release", veh.id, "", seg.id))

    def _signals(self) -> None:
        programs = self.p.programs
        for node, pid in self.scenario.control.modes.items():
            if pid is not None:
                self.signals[node] = signal_state(programs[pid], self.t)

    def _zones(self) -> None:
        p = self.p
        net = self.scenario.network
        half = p.horizon / 2.0
        in_window = self.t >= half
        self.obs_cache.clear()
        for node in sorted(net.intersections):
            inter = net.intersections[node]
            zone = self.zones[node]
            members: Dict[int, List[Vehicle]] = {}
            for slot, eid in inter.approaches:
                seg = self.segments[self.edge_seg[eid]]
                group = []
                for veh in seg.vehicles:
                    if seg.length - veh.pos > p.zone_radius:
                        break
                    if veh.zone_node != node:
                        veh.zone_node = node
                        veh.zone_dir = slot
                        veh.zone_wait = 0.0
                        veh.zone_waits[node] = [COMPASS[slot], 0.0, 0.0]
                        self.events.append(Event(self.t, "zone_enter", veh.id, node, COMPASS[slot]))
                    group.append(veh)
                members[slot] = group
            occ = sorted({v.occupying[1] for v in self.occupants[node]})
            update_zone(zone, members, p.dt, p.stop_speed, occ, in_window)
            if self.check:
                for slot, group in members.items():
                    assert zone.queue[slot] == sum(1 for v in group if v.v < p.stop_speed)
            mode = self.scenario.control.modes[node]
            if mode is None:
                self._decide(node, inter, zone, members)
            else:
                self._obey_signal(node, inter)

    def _obey_signal(self, node: str, inter) -> None:
        colours = self.signals[node]
        b = self.p.idm.b
        for slot, eid in inter.approaches:
            seg = self.segments[self.edge_seg[eid]]
            for i, veh in enumerate(seg.vehicles):
                veh.hold = False
                if i > 0:
                    continue
                colour = colours[slot]
                if veh.yellow_commit and colour != signalctl.GREEN:
                    continue
                constraint = stop_line_constraint(colour, veh.v, seg.length - veh.pos, b)
                veh.hold = constraint is not None
                if colour == YELLOW and constraint is None:
                    veh.yellow_commit = True

    def _observation(self, node: str) -> np.ndarray:
        obs = self.obs_cache.get(node)
        if obs is None:
            obs = build_observation(self.zones[node])
            self.obs_cache[node] = obs
        return obs

    def _decide(self, node: str, inter, zone: ZoneState, members: Mapping[int, List[Vehicle]]) -> None:
        p = self.p
        conflicts = inter.conflicts
        rule_mode = self.policy is None
        deciders: List[Vehicle] = []
        for slot, group in members.items():
            for veh in group:
                if veh.kind == RV and not rule_mode:
                    if veh.action is None or self.t - veh.decided_at >= p.decision_interval - EPS:
                        obs = self._observation(node)
                        self._close(veh, obs, terminal=False)
                        veh.action = int(self.policy(obs))
                        veh.decided_at = self.t
                        deciders.append(veh)
        demands = []
        committed = []
        heads: Dict[int, Vehicle] = {}
        nearest = {}
        for slot, eid in inter.approaches:
            seg = self.segments[self.edge_seg[eid]]
            if seg.vehicles:
                front = seg.vehicles[0]
                nearest[slot] = (seg.length - front.pos, front.v)
        for slot, group in members.items():
            if not group:
                continue
            head = group[0]
            heads[slot] = head
            if head.kind == RV and not rule_mode:
                wants = head.action == GO
            else:
                wants = hv_head_rule(zone, slot, conflicts, nearest, p.hv_gap_time, p.stop_speed) == PROCEED
            if wants:
                demands.append(slot)
                d = self.segments[head.path[head.cursor]].length - head.pos
                if head.granted and head.v * head.v > 2.0 * p.idm.b * max(d, EPS):
                    committed.append(slot)
        granted = arbitrate_priority(zone, demands, conflicts, p.priority_weight, committed)
        for slot, group in members.items():
            for i, veh in enumerate(group):
                is_head = i == 0
                ok = is_head and slot in granted
                veh.granted = ok
                if veh.kind == RV and not rule_mode:
                    veh.hold = False
                    veh.exec = GO if veh.action == GO and (ok or not is_head) else STOP
                else:
                    veh.exec = None
                    veh.hold = is_head and not ok
        for veh in deciders:
            tau = zone.wait[veh.zone_dir]
            tau_r = tau if p.raw_tau_reward else normalized_wait(tau)
            local = compute_reward(veh.exec, tau_r, False, p.beta)
            self.pending[veh.id] = [self._observation(node), veh.exec, local, False, self.t, node,
                                    veh.zone_dir, veh.exec == veh.action]

    def _close(self, veh: Vehicle, next_obs: np.ndarray, terminal: bool) -> None:
        pend = self.pending.pop(veh.id, None)
        if pend is None:
            return
        obs, action, local, penalty, t0, node, slot, granted = pend
        reward = local - (1.0 if penalty else 0.0)
        self.rewards.append(reward)
        self.trace.append((t0, node, veh.id, COMPASS[slot], action, granted, reward))
        if self.on_transition is not None:
            self.on_transition(Transition(obs, action, reward, next_obs, terminal))

    def _accelerate(self) -> None:
        for seg in self.segments:
            idm = seg.idm
            for i, veh in enumerate(seg.vehicles):
                lead = self._real_leader(veh, seg, i)
                real = None
                if lead is not None:
                    real = (max(lead.gap, GAP_FLOOR), lead.dv)
                exec_ = veh.exec if (veh.kind == RV and not seg.merge and veh.zone_node == seg.node
                                     and seg.node is not None) else None
                if exec_ is not None:
                    acc = rv_longitudinal(exec_, veh.v, seg.length - veh.pos, idm, real)
                else:
                    acc = idm_accel(veh.v, real, idm)
                    if veh.hold and not seg.merge:
                        virtual = (max(seg.length - veh.pos, GAP_FLOOR), veh.v)
                        acc = min(acc, idm_accel(veh.v, virtual, idm))
                veh.accel = acc

    def _move(self) -> None:
        dt = self.p.dt
        for seg in self.segments:
            for veh in seg.vehicles:
                v, x = step_kinematics(veh.v, veh.pos, veh.accel, dt)
                stopping = (veh.kind == RV and not seg.merge and veh.zone_node == seg.node
                            and seg.node is not None and veh.exec == STOP)
                if stopping and x >= seg.length:
                    x, v = seg.length, 0.0
                veh.v, veh.pos = v, x
                if v < 0:
                    self.negative_speeds += 1

    def _transfer(self) -> None:
        t = self.t
        for seg in self.segments:
            vehicles = seg.vehicles
            while vehicles:
                veh = vehicles[0]
                if veh.pos < seg.length or (veh.pos == seg.length and veh.v == 0.0):
                    break
                if veh.cursor == len(veh.path) - 1:
                    vehicles.pop(0)
                    self._arrive(veh)
                    continue
                nxt = self.segments[veh.path[veh.cursor + 1]]
                new_pos = veh.pos - seg.length
                if nxt.vehicles:
                    r = nxt.vehicles[-1]
                    room = r.pos - r.length
                    if new_pos > room:
                        self.events.append(Event(t, "blocked", veh.id, nxt.node or "", nxt.id))
                        if room < 0.0:
                            veh.pos, veh.v = seg.length, 0.0
                            break
                        new_pos = room
                        veh.v = min(veh.v, r.v)
                vehicles.pop(0)
                self._unstraddle(veh)
                veh.cursor += 1
                veh.pos = new_pos
                nxt.vehicles.append(veh)
                veh.straddling = seg.idx
                seg.straddlers.append(veh)
                if nxt.merge:
                    self._enter_interior(veh, seg, nxt)
        # rear bumpers leaving the previous segment
        for seg in self.segments:
            if not seg.straddlers:
                continue
            keep = []
            for veh in seg.straddlers:
                if veh.arrive_t is None and veh.pos < veh.length and veh.straddling == seg.idx:
                    keep.append(veh)
                else:
                    if veh.straddling == seg.idx:
                        veh.straddling = -1
                    if seg.merge and veh.occupying is not None and veh.arrive_t is None:
                        self._exit_interior(veh)
            seg.straddlers = keep

    def _unstraddle(self, veh: Vehicle) -> None:
        if veh.straddling >= 0:
            prev = self.segments[veh.straddling]
            if veh in prev.straddlers:
                prev.straddlers.remove(veh)
            if prev.merge and veh.occupying is not None:
                self._exit_interior(veh)
            veh.straddling = -1

    def _enter_interior(self, veh: Vehicle, approach: Segment, merge: Segment) -> None:
        node = merge.node
        slot = approach.slot
        veh.occupying = (node, slot)
        self.occupants[node].append(veh)
        veh.zone_node = None
        veh.zone_dir = -1
        veh.hold = False
        veh.granted = False
        veh.yellow_commit = False
        veh.exec = None
        veh.action = None
        self.events.append(Event(self.t, "interior_enter", veh.id, node, COMPASS[slot]))

    def _exit_interior(self, veh: Vehicle) -> None:
        node, slot = veh.occupying
        veh.occupying = None
        self.occupants[node].remove(veh)
        self.events.append(Event(self.t, "interior_exit", veh.id, node, COMPASS[slot]))
        if veh.id in self.pending:
            self._close(veh, self._fresh_observation(node), terminal=True)

    def _fresh_observation(self, node: str) -> np.ndarray:
        zone = self.zones[node]
        occ = [0] * 4
        for v in self.occupants[node]:
            occ[v.occupying[1]] = 1
        zone.occupancy = occ
        return build_observation(zone)

    def _arrive(self, veh: Vehicle) -> None:
        if veh.occupying is not None:
            self._exit_interior(veh)
        self._unstraddle(veh)
        veh.arrive_t = self.t
        del self.vehicles[veh.id]
        self.arrived.append(veh)
        self.events.append(Event(self.t, "arrival", veh.id, "", veh.destination))

    def _conflicts(self) -> None:
        net = self.scenario.network
        for node in sorted(net.intersections):
            occupants = self.occupants[node]
            zone = self.zones[node]
            occ = [0] * 4
            for v in occupants:
                occ[v.occupying[1]] = 1
            zone.occupancy = occ
            if len(occupants) < 2:
                zone.conflict = False
                self.active_pairs[node] = set()
                continue
            conflicts = net.intersections[node].conflicts
            zone.conflict = detect_conflict(zone, conflicts)
            pairs = set(conflicting_pairs([(v.id, v.occupying[1]) for v in occupants], conflicts))
            for a, b in sorted(pairs - self.active_pairs[node]):
                self.conflict_count += 1
                self.events.append(Event(self.t, "conflict", a, node, str(b)))
            self.active_pairs[node] = pairs
            involved = {vid for pair in pairs for vid in pair}
            for vid in involved:
                pend = self.pending.get(vid)
                if pend is not None:
                    pend[3] = True

    # ------------------------------------------------------------ checking
    def check_state(self) -> None:
        backlog = sum(len(q) for q in self.backlog.values())
        assert self.spawned == len(self.vehicles) + len(self.arrived) + backlog, "conservation violated"
        for seg in self.segments:
            vs = seg.vehicles
            for a, b in zip(vs, vs[1:]):
                if a.pos - a.length - b.pos < -1e-9:
                    self.negative_gaps += 1
            if vs:
                for s in seg.straddlers:
                    if seg.length + s.pos - s.length - vs[0].pos < -1e-9:
                        self.negative_gaps += 1
            for veh in vs:
                assert veh.pos >= 0.0, veh
                if veh.v < 0:
                    self.negative_speeds += 1

    # ------------------------------------------------------------ results
    def finish(self) -> EpisodeResult:
        for veh in sorted(self.vehicles.values(), key=lambda v: v.id):
            if veh.id in self.pending:
                node = self.pending[veh.id][5]
                self._close(veh, self._fresh_observation(node), terminal=False)
        everyone = sorted(list(self.vehicles.values()) + self.arrived, key=lambda v: v.id)
        use_window = self.p.windowed_wait
        records = []
        for veh in everyone:
            for node, (direction, wait, window_wait) in sorted(veh.zone_waits.items()):
                records.append(WaitRecord(veh.id, node, direction, window_wait if use_window else wait))
        report = build_report(records, self.events, list(self.scenario.network.intersections),
                              self.p.horizon, self.spawned, self.scenario.control.label)
        backlog = sum(len(q) for q in self.backlog.values())
        return EpisodeResult(
            report=report, events=self.events, trace=self.trace, rewards=self.rewards,
            snapshot_hash=self.snapshot_hash(), spawned=self.spawned, active=len(self.vehicles),
            arrived=len(self.arrived), backlog=backlog, conflicts=self.conflict_count,
            negative_gaps=self.negative_gaps, negative_speeds=self.negative_speeds, records=records,
        )

    def snapshot_bytes(self) -> bytes:
        """Canonical little-endian serialization of every vehicle, by id.

        Per vehicle: u64 id, u8 kind, i64 segment index (-1 backlog, -2
        arrived), f64 position, f64 speed, f64 total wait, f64 arrival time
        (-1 when not arrived).
        """
        where: Dict[int, int] = {}
        for seg in self.segments:
            for veh in seg.vehicles:
                where[veh.id] = seg.idx
        everyone = list(self.vehicles.values()) + self.arrived
        for q in self.backlog.values():
            everyone.extend(q)
        chunks = []
        for veh in sorted(everyone, key=lambda v: v.id):
            loc = where.get(veh.id, -2 if veh.arrive_t is not None else -1)
            chunks.append(struct.pack("<QBqdddd", veh.id, veh.kind, loc, veh.pos, veh.v,
                                      veh.wait_total, -1.0 if veh.arrive_t is None else veh.arrive_t))
        return b"".join(chunks)

    def snapshot_hash(self) -> int:
        return fnv1a64(self.snapshot_bytes())


def leader_of(vehicle: Vehicle, world: World) -> Optional[Leader]:
    return world.leader_of(vehicle)


def simulate_episode(
    scenario: Scenario,
    policy: Optional[Policy],
    seed: int,
    on_transition: Optional[Callable[[Transition], None]] = None,
    check_invariants: bool = False,
) -> EpisodeResult:
    """Run one episode of ``horizon / dt`` steps.

    ``policy`` maps an observation to Stop (0) or Go (1) for every RV decision
    at unsignalized intersections. ``None`` makes RVs follow the same
    gap-acceptance rule as human drivers.
    """
    world = World(scenario, seed, policy, on_transition, check_invariants)
    for _ in range(scenario.sim.steps):
        world.step()
    return world.finish()
