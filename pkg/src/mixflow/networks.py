"""Builders for the bundled desk-scale scenario documents.

``python -m mixflow.networks`` rewrites the JSON files under ``mixflow/data``.
"""

from __future__ import annotations

import json
from itertools import permutations
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

SPACING = 200.0
SPEED = 13.89


def _grid(cells: Sequence[Tuple[int, int]], stubs: Sequence[Tuple[str, Tuple[int, int], str]]):
    """Nodes and two-way edges for a grid of intersections plus boundary stubs.

    ``cells`` are (row, col) with row 0 at the top. Each stub is
    (boundary id, cell, side) with side in N/E/S/W.
    """
    nodes: List[dict] = []
    pos: Dict[str, Tuple[float, float]] = {}
    for r, c in cells:
        nid = f"I{r}{c}"
        pos[nid] = (c * SPACING, -r * SPACING)
        nodes.append({"id": nid, "x": pos[nid][0], "y": pos[nid][1], "boundary": False})
    offsets = {"N": (0.0, SPACING), "S": (0.0, -SPACING), "E": (SPACING, 0.0), "W": (-SPACING, 0.0)}
    links = []
    for bid, (r, c), side in stubs:
        cx, cy = pos[f"I{r}{c}"]
        dx, dy = offsets[side]
        nodes.append({"id": bid, "x": cx + dx, "y": cy + dy, "boundary": True})
        links.append((bid, f"I{r}{c}"))
    cellset = set(cells)
    for r, c in cells:
        if (r, c + 1) in cellset:
            links.append((f"I{r}{c}", f"I{r}{c + 1}"))
        if (r + 1, c) in cellset:
            links.append((f"I{r}{c}", f"I{r + 1}{c}"))
    edges = []
    for a, b in links:
        edges.append({"id": f"{a}-{b}", "from": a, "to": b, "speed_limit": SPEED})
        edges.append({"id": f"{b}-{a}", "from": b, "to": a, "speed_limit": SPEED})
    edges.sort(key=lambda e: e["id"])
    return nodes, edges


def _od_all_pairs(boundaries: Sequence[str], per_entrance: float) -> List[dict]:
    share = per_entrance / (len(boundaries) - 1)
    return [{"from": a, "to": b, "rate": round(share, 6)} for a, b in permutations(sorted(boundaries), 2)]


def single_intersection() -> dict:
    nodes, edges = _grid([(0, 0)], [("N", (0, 0), "N"), ("E", (0, 0), "E"),
                                    ("S", (0, 0), "S"), ("W", (0, 0), "W")])
    return {
        "format_version": 1,
        "name": "single",
        "network": {"nodes": nodes, "edges": edges},
        "control": {"config": "1U+0S", "unsignalized": ["I00"], "signalized": {}},
        "demand": {"od": _od_all_pairs(["N", "E", "S", "W"], 0.08), "rv_penetration": 1.0, "seed": 0},
        "sim": {"dt": 0.5, "horizon": 300.0},
        "train": {"iterations": 200, "hidden": [64, 64, 64]},
    }


def grid2x2() -> dict:
    cells = [(0, 0), (0, 1), (1, 0), (1, 1)]
    stubs = [("N0", (0, 0), "N"), ("N1", (0, 1), "N"), ("S0", (1, 0), "S"), ("S1", (1, 1), "S"),
             ("W0", (0, 0), "W"), ("W1", (1, 0), "W"), ("E0", (0, 1), "E"), ("E1", (1, 1), "E")]
    nodes, edges = _grid(cells, stubs)
    return {
        "format_version": 1,
        "name": "grid2x2",
        "network": {"nodes": nodes, "edges": edges},
        "control": {
            "config": "2U+2S",
            "unsignalized": ["I00", "I11"],
            "signalized": {"I01": "default", "I10": "default"},
            "switch_order": ["I00", "I11", "I01", "I10"],
        },
        "demand": {"od": _od_all_pairs([s[0] for s in stubs], 0.06), "rv_penetration": 0.8, "seed": 0},
        "sim": {"dt": 0.5, "horizon": 300.0},
        "train": {"iterations": 60, "hidden": [64, 64, 64]},
    }


def grid14() -> dict:
    """4x4 grid without two opposite corners: 14 intersections, 12 entrances."""
    cells = [(r, c) for r in range(4) for c in range(4) if (r, c) not in ((0, 3), (3, 0))]
    stubs = [(f"N{c}", (0, c), "N") for c in range(3)]
    stubs += [(f"S{c}", (3, c), "S") for c in range(1, 4)]
    stubs += [(f"W{r}", (r, 0), "W") for r in range(3)]
    stubs += [(f"E{r}", (r, 3), "E") for r in range(1, 4)]
    nodes, edges = _grid(cells, stubs)
    order = ["I11", "I22", "I12", "I21", "I01", "I32", "I10", "I23",
             "I00", "I33", "I02", "I31", "I13", "I20"]
    unsig = order[:8]
    return {
        "format_version": 1,
        "name": "grid14",
        "network": {"nodes": nodes, "edges": edges},
        "control": {
            "config": "8U+6S",
            "unsignalized": sorted(unsig),
            "signalized": {n: "default" for n in sorted(order[8:])},
            "switch_order": order,
        },
        "demand": {"od": _od_all_pairs([s[0] for s in stubs], 0.05), "rv_penetration": 0.8, "seed": 0},
        "sim": {"dt": 0.5, "horizon": 1000.0},
        "train": {"iterations": 1000},
    }


def road(length: float = 500.0, speed: float = 10.0) -> dict:
    """One straight road between two boundary nodes, no intersections."""
    return {
        "format_version": 1,
        "name": "road",
        "network": {
            "nodes": [{"id": "A", "x": 0.0, "y": 0.0, "boundary": True},
                      {"id": "B", "x": length, "y": 0.0, "boundary": True}],
            "edges": [{"id": "A-B", "from": "A", "to": "B", "length": length, "speed_limit": speed}],
        },
        "control": {"config": "0U+0S", "unsignalized": [], "signalized": {}},
        "demand": {"od": [{"from": "A", "to": "B", "rate": 0.0}], "rv_penetration": 0.0, "seed": 0},
        "sim": {"dt": 0.5, "horizon": 100.0},
    }


PRESETS = {"single": single_intersection, "grid2x2": grid2x2, "grid14": grid14}


def write_presets(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in PRESETS.items():
        (directory / f"{name}.json").write_text(json.dumps(build(), indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    write_presets(Path(__file__).parent / "data")
