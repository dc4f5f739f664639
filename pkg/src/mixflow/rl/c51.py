"""Categorical (C51) value distributions: projection, action selection, learning step."""

from __future__ import annotations

from typing import Mapping, Tuple

import numpy as np

from ..dynamics import GO, STOP
from .config import TrainConfig
from .network import Adam, CategoricalMLP, log_softmax, softmax


class NonFiniteLossError(FloatingPointError):
    pass


def support(config: TrainConfig) -> np.ndarray:
    return np.linspace(config.v_min, config.v_max, config.atoms)


def q_forward(net: CategoricalMLP, obs: np.ndarray) -> np.ndarray:
    """Per-action probabilities over atoms, shape ``(actions, atoms)``."""
    return net.probs(np.asarray(obs, dtype=float)[None, :])[0]


def q_values(dist: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    return dist @ atoms


def project_batch(next_dist: np.ndarray, rewards: np.ndarray, gamma: float,
                  terminals: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Project ``r + gamma * z`` (``r`` alone when terminal) back onto ``atoms``.

    Each shifted atom is clamped to the support and its mass split linearly
    between the two neighbouring atoms.
    """
    next_dist = np.atleast_2d(next_dist)
    batch, n = next_dist.shape
    v_min, v_max = atoms[0], atoms[-1]
    dz = (v_max - v_min) / (n - 1)
    rewards = np.asarray(rewards, dtype=float).reshape(batch, 1)
    keep = (1.0 - np.asarray(terminals, dtype=float)).reshape(batch, 1)
    tz = np.clip(rewards + keep * gamma * atoms[None, :], v_min, v_max)
    b = (tz - v_min) / dz
    snapped = np.rint(b)
    b = np.where(np.abs(b - snapped) < 1e-9, snapped, b)
    lower = np.floor(b).astype(np.int64)
    upper = np.ceil(b).astype(np.int64)
    w_upper = b - lower
    w_lower = 1.0 - w_upper
    offsets = (np.arange(batch) * n)[:, None]
    out = np.bincount((lower + offsets).ravel(), (next_dist * w_lower).ravel(), minlength=batch * n)
    out += np.bincount((upper + offsets).ravel(), (next_dist * w_upper).ravel(), minlength=batch * n)
    return out.reshape(batch, n)


def project_target(next_dist: np.ndarray, reward: float, gamma: float, terminal: bool,
                   atoms: np.ndarray) -> np.ndarray:
    return project_batch(np.asarray(next_dist)[None, :], [reward], gamma, [terminal], atoms)[0]


def select_action(dist: np.ndarray, epsilon: float, rng: np.random.Generator,
                  atoms: np.ndarray) -> int:
    """Epsilon-greedy over expected values; Stop wins exact ties."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(2))
    q = q_values(dist, atoms)
    return GO if q[GO] > q[STOP] else STOP


def cross_entropy(net: CategoricalMLP, obs: np.ndarray, actions: np.ndarray, target: np.ndarray,
                  weights: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Weighted mean cross-entropy at the taken actions.

    Returns ``(loss, flat gradient, per-sample cross-entropy)``.
    """
    logits, acts = net.logits(obs, keep=True)
    rows = np.arange(obs.shape[0])
    taken = logits[rows, actions]
    logp = log_softmax(taken)
    ce = -(target * logp).sum(axis=1)
    n = obs.shape[0]
    loss = float((weights * ce).sum() / n)
    grad_logits = np.zeros_like(logits)
    grad_logits[rows, actions] = (softmax(taken) - target) * (weights / n)[:, None]
    return loss, net.backward(acts, grad_logits), ce


def train_step(net: CategoricalMLP, target_net: CategoricalMLP, batch: Mapping[str, np.ndarray],
               weights: np.ndarray, config: TrainConfig, optimizer: Adam) -> Tuple[float, np.ndarray]:
    """One double-Q distributional update. Returns ``(loss, new priorities)``."""
    atoms = support(config)
    next_obs = batch["next_obs"]
    rows = np.arange(next_obs.shape[0])
    best = np.argmax(net.probs(next_obs) @ atoms, axis=1)
    next_dist = target_net.probs(next_obs)[rows, best]
    target = project_batch(next_dist, batch["rewards"], config.gamma, batch["terminals"], atoms)
    loss, grad, ce = cross_entropy(net, batch["obs"], batch["actions"], target, weights)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NonFiniteLossError(
            f"non-finite loss {loss}; reward range [{batch['rewards'].min()}, {batch['rewards'].max()}], "
            f"max |param| {np.abs(net.flat).max()}"
        )
    optimizer.step(net.flat, grad)
    return loss, ce + config.priority_eps
