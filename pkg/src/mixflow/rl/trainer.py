"""Shared-policy training loop and the policies used for rollouts."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..dynamics import GO, STOP
from ..scenario import Scenario
from ..simcore import Transition, simulate_episode
from ..zonectl import D_MAX
from .c51 import q_forward, select_action, support, train_step
from .checkpoint import Checkpoint
from .config import TrainConfig
from .network import Adam, CategoricalMLP
from .replay import PrioritizedBuffer

OBS_DIM = 3 * D_MAX
LOG_HEADER = ("iteration", "episode_return", "mean_loss", "epsilon", "buffer_size")


def episode_seed(base: int, iteration: int) -> int:
    return int(np.random.SeedSequence([base, iteration]).generate_state(1)[0])


def linear_schedule(start: float, end: float, progress: float) -> float:
    if progress >= 1.0:
        return end
    progress = max(progress, 0.0)
    return start + (end - start) * progress


class NetPolicy:
    """Epsilon-greedy policy over a categorical network.

    All RVs query the same network. Expected values are cached per observation
    until the network changes.
    """

    def __init__(self, net: CategoricalMLP, config: TrainConfig, epsilon: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> None:
        self.net = net
        self.atoms = support(config)
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.version = 0
        self._cache: dict = {}

    def invalidate(self) -> None:
        self.version += 1
        self._cache.clear()

    def __call__(self, obs: np.ndarray) -> int:
        key = obs.tobytes()
        dist = self._cache.get(key)
        if dist is None:
            dist = q_forward(self.net, obs)
            self._cache[key] = dist
        return select_action(dist, self.epsilon, self.rng, self.atoms)


class RandomPolicy:
    """Uniform Stop/Go."""

    def __init__(self, seed: int = 0) -> None:
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs: np.ndarray) -> int:
        return int(self.rng.integers(2))


def constant_policy(action: int) -> Callable[[np.ndarray], int]:
    return lambda obs: action


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: List[tuple] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)

    def log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for it, ret, loss, eps, size in self.log:
            writer.writerow([it, f"{ret:.6f}", f"{loss:.6f}", f"{eps:.6f}", size])
        return buf.getvalue()


class Learner:
    """Replay buffer, online/target networks and optimizer; single writer."""

    def __init__(self, config: TrainConfig) -> None:
        self.config = config
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.net = CategoricalMLP(OBS_DIM, config.hidden, 2, config.atoms, rng=self.rng)
        self.target = self.net.copy()
        self.optimizer = Adam(self.net.n_params, config.learning_rate, config.adam_beta1,
                              config.adam_beta2, config.adam_eps)
        self.buffer = PrioritizedBuffer(config.buffer_capacity, OBS_DIM, config.alpha)
        self.policy = NetPolicy(self.net, config, config.epsilon_start, self.rng)
        self.is_exponent = config.is_exponent_start
        self.grad_steps = 0
        self.losses: List[float] = []

    def observe(self, tr: Transition) -> None:
        self.buffer.push(tr.obs, tr.action, tr.reward, tr.next_obs, tr.terminal)
        if len(self.buffer) >= max(self.config.warmup, self.config.batch_size):
            self.learn()

    def learn(self) -> float:
        cfg = self.config
        batch, indices, weights = self.buffer.sample(cfg.batch_size, self.is_exponent, self.rng)
        loss, priorities = train_step(self.net, self.target, batch, weights, cfg, self.optimizer)
        self.buffer.update_priorities(indices, priorities)
        self.grad_steps += 1
        if self.grad_steps % cfg.target_sync == 0:
            self.target.set_flat(self.net.flat)
        self.policy.invalidate()
        self.losses.append(loss)
        return loss


def scenario_digest(scenario: Scenario) -> str:
    return hashlib.sha256(scenario.canonical_json().encode("utf-8")).hexdigest()


def train(scenario: Scenario, config: Optional[TrainConfig] = None,
          progress: Optional[Callable[[tuple], None]] = None) -> TrainResult:
    """Train one policy shared by every RV at every unsignalized intersection.

    One iteration is one full episode. Each closed RV decision is pushed into
    the shared buffer; after warmup every pushed transition triggers one
    gradient step.
    """
    config = config or scenario.train
    if scenario.control.x < 1:
        raise ValueError("training needs at least one unsignalized intersection")
    learner = Learner(config)
    log = []
    for it in range(config.iterations):
        frac = it / config.iterations
        learner.policy.epsilon = linear_schedule(
            config.epsilon_start, config.epsilon_end, frac / config.epsilon_fraction)
        learner.is_exponent = linear_schedule(config.is_exponent_start, config.is_exponent_end, frac)
        start = len(learner.losses)
        result = simulate_episode(scenario, learner.policy, episode_seed(config.seed, it),
                                  on_transition=learner.observe)
        losses = learner.losses[start:]
        mean_loss = math.fsum(losses) / len(losses) if losses else 0.0
        row = (it, result.episode_return, mean_loss, learner.policy.epsilon, len(learner.buffer))
        log.append(row)
        if progress is not None:
            progress(row)
    provenance = {
        "scenario": scenario.name,
        "scenario_sha256": scenario_digest(scenario),
        "control": scenario.control.label,
        "rv_penetration": scenario.demand.rv_penetration,
        "iterations": config.iterations,
        "grad_steps": learner.grad_steps,
    }
    ckpt = Checkpoint(learner.net, config, learner.rng.bit_generator.state, provenance)
    return TrainResult(ckpt, log, learner.losses)


def greedy_policy(checkpoint: Checkpoint) -> NetPolicy:
    return NetPolicy(checkpoint.net, checkpoint.config, 0.0)


__all__ = ["train", "TrainResult", "Learner", "NetPolicy", "RandomPolicy", "constant_policy",
           "greedy_policy", "episode_seed", "GO", "STOP"]
