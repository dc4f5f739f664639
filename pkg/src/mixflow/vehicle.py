from __future__ import annotations

from typing import Dict, List, Optional, Tuple

HV = 0
RV = 1


class Vehicle:
    """Kinematic and bookkeeping state of one vehicle.

    ``pos`` is the front bumper position on the current segment, measured from
    the segment start. ``path`` holds segment indices once the vehicle is
    routed by the simulator; ``route`` holds the network edge ids.
    """

    __slots__ = (
        "id", "kind", "origin", "destination", "route", "path", "cursor",
        "pos", "v", "accel", "length", "spawn_t", "release_t", "arrive_t",
        "wait_total", "zone_waits", "zone_node", "zone_dir", "zone_wait",
        "window_wait", "action", "exec", "decided_at", "granted", "hold", "committed",
        "occupying", "straddling", "yellow_commit",
    )

    def __init__(self, vid: int, kind: int, origin: str, destination: str, spawn_t: float,
                 length: float = 5.0) -> None:
        self.id = vid
        self.kind = kind
        self.origin = origin
        self.destination = destination
        self.route: Tuple[str, ...] = ()
        self.path: List[int] = []
        self.cursor = 0
        self.pos = 0.0
        self.v = 0.0
        self.accel = 0.0
        self.length = length
        self.spawn_t = spawn_t
        self.release_t: Optional[float] = None
        self.arrive_t: Optional[float] = None
        self.wait_total = 0.0
        # intersection id -> [direction label, wait s, wait inside the metric window s]
        self.zone_waits: Dict[str, list] = {}
        self.zone_node: Optional[str] = None
        self.zone_dir = -1
        self.zone_wait = 0.0
        self.window_wait = 0.0
        self.action: Optional[int] = None
        self.exec: Optional[int] = None  # action executed this step after arbitration
        self.decided_at = -1.0
        self.granted = False
        self.hold = False
        self.committed = False
        # (intersection id, slot) while any part of the body is in the interior
        self.occupying: Optional[Tuple[str, int]] = None
        # segment index the rear bumper still overhangs
        self.straddling = -1
        self.yellow_commit = False

    @property
    def is_rv(self) -> bool:
        return self.kind == RV

    def __repr__(self) -> str:
        kind = "RV" if self.kind == RV else "HV"
        return f"Vehicle({self.id}, {kind}, pos={self.pos:.2f}, v={self.v:.2f})"
