"""Fully connected categorical value network and its Adam optimizer, in numpy."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np


class CategoricalMLP:
    """ReLU MLP mapping an observation to ``actions x atoms`` logits.

    All weights and biases are views into one flat float64 vector, which is
    what the optimizer updates and what checkpoints store.
    """

    def __init__(self, n_inputs: int, hidden: Sequence[int], n_actions: int = 2, atoms: int = 51,
                 rng: np.random.Generator | None = None) -> None:
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.n_actions = n_actions
        self.atoms = atoms
        sizes = [n_inputs, *self.hidden, n_actions * atoms]
        self.shapes: List[Tuple[Tuple[int, int], Tuple[int]]] = [
            ((a, b), (b,)) for a, b in zip(sizes[:-1], sizes[1:])
        ]
        count = sum(a * b + b for (a, b), _ in self.shapes)
        self.flat = np.zeros(count)
        self._bind()
        if rng is not None:
            self.initialize(rng)

    def _bind(self) -> None:
        self.layers = []
        offset = 0
        for (a, b), _ in self.shapes:
            w = self.flat[offset: offset + a * b].reshape(a, b)
            offset += a * b
            bias = self.flat[offset: offset + b]
            offset += b
            self.layers.append((w, bias))

    def initialize(self, rng: np.random.Generator) -> None:
        """Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        for w, bias in self.layers:
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            bias[...] = rng.uniform(-bound, bound, size=bias.shape)

    @property
    def n_params(self) -> int:
        return self.flat.size

    def set_flat(self, values: np.ndarray) -> None:
        if values.shape != self.flat.shape:
            raise ValueError(f"expected {self.flat.size} parameters, got {values.size}")
        self.flat[...] = values

    def copy(self) -> "CategoricalMLP":
        twin = CategoricalMLP(self.n_inputs, self.hidden, self.n_actions, self.atoms)
        twin.set_flat(self.flat)
        return twin

    def logits(self, x: np.ndarray, keep: bool = False):
        x = np.atleast_2d(x)
        acts = [x]
        h = x
        last = len(self.layers) - 1
        for k, (w, bias) in enumerate(self.layers):
            h = h @ w + bias
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        out = h.reshape(x.shape[0], self.n_actions, self.atoms)
        return (out, acts) if keep else out

    def probs(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def backward(self, acts: List[np.ndarray], grad_logits: np.ndarray) -> np.ndarray:
        """Gradient of the flat parameter vector given d(loss)/d(logits)."""
        grad = np.empty_like(self.flat)
        g = grad_logits.reshape(grad_logits.shape[0], -1)
        offsets = []
        offset = 0
        for (a, b), _ in self.shapes:
            offsets.append(offset)
            offset += a * b + b
        for k in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[k]
            a_in = acts[k]
            a, b = w.shape
            o = offsets[k]
            grad[o: o + a * b] = (a_in.T @ g).ravel()
            grad[o + a * b: o + a * b + b] = g.sum(axis=0)
            if k > 0:
                g = (g @ w.T) * (acts[k] > 0.0)
        return grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Adam:
    def __init__(self, n_params: int, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> None:
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
