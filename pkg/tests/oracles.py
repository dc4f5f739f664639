"""Independent reference implementations used by the tests."""

import numpy as np


def brute_force_projection(p, reward, gamma, terminal, atoms):
    """Distribute each shifted atom's mass with an explicit O(N^2) triangle kernel."""
    n = len(atoms)
    v_min, v_max = atoms[0], atoms[-1]
    dz = (v_max - v_min) / (n - 1)
    out = np.zeros(n)
    for j in range(n):
        tz = reward if terminal else reward + gamma * atoms[j]
        tz = min(max(tz, v_min), v_max)
        for i in range(n):
            out[i] += p[j] * max(0.0, 1.0 - abs(tz - atoms[i]) / dz)
    return out


def loss_only(net, obs, actions, target, weights):
    logits = net.logits(obs)
    rows = np.arange(obs.shape[0])
    taken = logits[rows, actions]
    shifted = taken - taken.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float((weights * -(target * logp).sum(axis=1)).sum() / obs.shape[0])


def finite_difference(net, obs, actions, target, weights, h=1e-4):
    grad = np.zeros(net.n_params)
    for k in range(net.n_params):
        keep = net.flat[k]
        net.flat[k] = keep + h
        up = loss_only(net, obs, actions, target, weights)
        net.flat[k] = keep - h
        down = loss_only(net, obs, actions, target, weights)
        net.flat[k] = keep
        grad[k] = (up - down) / (2 * h)
    return grad


def gradient_check_case(seed=0, batch=6):
    from mixflow.rl.network import CategoricalMLP
    rng = np.random.default_rng(seed)
    net = CategoricalMLP(4, (8,), 2, 11, rng=rng)
    obs = rng.normal(size=(batch, 4))
    actions = rng.integers(0, 2, size=batch)
    target = rng.dirichlet(np.ones(11), size=batch)
    weights = rng.uniform(0.2, 1.0, size=batch)
    return net, obs, actions, target, weights


def relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
