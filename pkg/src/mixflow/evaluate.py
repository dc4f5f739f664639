"""Evaluation runs over seeds, optionally spread across worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

from .rl.checkpoint import load_checkpoint
from .rl.trainer import NetPolicy, RandomPolicy
from .scenario import Scenario
from .simcore import EpisodeResult, simulate_episode

POLICIES = ("greedy", "random", "rule")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MIXFLOW_WORKERS", "1")))
    except ValueError:
        return 1


def make_policy(kind: str, checkpoint: Optional[bytes], seed: int):
    if kind == "rule":
        return None
    if kind == "random":
        return RandomPolicy(seed)
    if kind == "greedy":
        if checkpoint is None:
            raise ValueError("greedy evaluation needs a checkpoint")
        ckpt = load_checkpoint(checkpoint)
        return NetPolicy(ckpt.net, ckpt.config, 0.0)
    raise ValueError(f"unknown policy kind {kind!r}")


def run_one(scenario: Scenario, kind: str, checkpoint: Optional[bytes], seed: int,
            check_invariants: bool = False) -> EpisodeResult:
    policy = make_policy(kind, checkpoint, seed)
    return simulate_episode(scenario, policy, seed, check_invariants=check_invariants)


def evaluate(scenario: Scenario, kind: str, checkpoint: Optional[bytes], seeds: Sequence[int],
             workers: Optional[int] = None, check_invariants: bool = False) -> List[EpisodeResult]:
    """One episode per seed; results come back in seed order."""
    if kind == "greedy" and scenario.control.x == 0:
        kind = "rule"  # no RV decisions happen without unsignalized intersections
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(seeds) <= 1:
        return [run_one(scenario, kind, checkpoint, s, check_invariants) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        futures = [pool.submit(run_one, scenario, kind, checkpoint, s, check_invariants) for s in seeds]
        return [f.result() for f in futures]
