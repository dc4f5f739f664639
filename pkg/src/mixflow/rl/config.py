from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping, Tuple


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 32
    learning_rate: float = 5e-4
    buffer_capacity: int = 50_000
    alpha: float = 0.5
    is_exponent_start: float = 0.4
    is_exponent_end: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.3
    target_sync: int = 500
    v_min: float = -10.0
    v_max: float = 10.0
    atoms: int = 51
    hidden: Tuple[int, ...] = (512, 512, 512)
    iterations: int = 1000
    warmup: int = 1000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    priority_eps: float = 1e-6
    # reserved for the omitted Rainbow components; only the defaults are supported
    noisy: bool = False
    dueling: bool = False
    n_step: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        positive = ("gamma", "batch_size", "learning_rate", "buffer_capacity", "alpha",
                    "target_sync", "atoms", "adam_eps", "priority_eps")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} must be positive")
        if self.gamma > 1:
            raise ValueError("train.gamma must be <= 1")
        if self.iterations < 0 or self.warmup < 0:
            raise ValueError("train.iterations and train.warmup must be >= 0")
        if not self.v_min < self.v_max:
            raise ValueError("train.v_min must be below train.v_max")
        if self.atoms < 2:
            raise ValueError("train.atoms must be >= 2")
        if not all(h > 0 for h in self.hidden):
            raise ValueError("train.hidden sizes must be positive")
        if not (0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0):
            raise ValueError("train.epsilon schedule must satisfy 0 <= end <= start <= 1")
        if not 0.0 < self.epsilon_fraction <= 1.0:
            raise ValueError("train.epsilon_fraction must be in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("train.batch_size exceeds train.buffer_capacity")
        if self.noisy or self.dueling or self.n_step != 1:
            raise ValueError("noisy nets, dueling heads and n-step returns are not implemented")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(kwargs["hidden"])
        return cls(**kwargs)

    def digest(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).digest()
