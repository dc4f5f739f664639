"""Binary checkpoint format.

Layout (little-endian)::

    b"MFCK"                 magic
    u32                     format version (1)
    32 bytes                SHA-256 digest of the canonical training config
    u64                     parameter count
    f64 * count             flat network parameters
    u32                     metadata length
    bytes                   UTF-8 JSON metadata (config, architecture, rng state, provenance)
    u32                     CRC32 of everything above
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .config import TrainConfig
from .network import CategoricalMLP

MAGIC = b"MFCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    net: CategoricalMLP
    config: TrainConfig
    rng_state: Optional[dict] = None
    provenance: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(net: CategoricalMLP, config: TrainConfig, rng_state: Optional[dict] = None,
                    provenance: Optional[Dict[str, Any]] = None) -> bytes:
    meta = {
        "architecture": {"inputs": net.n_inputs, "hidden": list(net.hidden),
                         "actions": net.n_actions, "atoms": net.atoms},
        "config": config.to_dict(),
        "rng": rng_state,
        "provenance": provenance or {},
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = net.flat.astype("<f8").tobytes()
    body = b"".join([
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        config.digest(),
        struct.pack("<Q", net.n_params),
        params,
        struct.pack("<I", len(blob)),
        blob,
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def load_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptCheckpointError("not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    if len(data) < 4 + 4 + 32 + 8 + 4:
        raise CorruptCheckpointError("checkpoint truncated")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptCheckpointError("CRC mismatch (truncated or corrupted checkpoint)")
    digest = data[8:40]
    (count,) = struct.unpack_from("<Q", data, 40)
    start = 48
    end = start + 8 * count
    if end + 4 > len(data) - 4:
        raise CorruptCheckpointError("parameter block overruns the stream")
    params = np.frombuffer(data[start:end], dtype="<f8").astype(np.float64)
    (meta_len,) = struct.unpack_from("<I", data, end)
    if end + 4 + meta_len != len(data) - 4:
        raise CorruptCheckpointError("metadata length mismatch")
    try:
        meta = json.loads(data[end + 4: end + 4 + meta_len].decode("utf-8"))
        config = TrainConfig.from_dict(meta["config"])
        arch = meta["architecture"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"bad metadata: {exc}") from None
    if config.digest() != digest:
        raise CorruptCheckpointError("config digest does not match metadata")
    net = CategoricalMLP(arch["inputs"], arch["hidden"], arch["actions"], arch["atoms"])
    if net.n_params != count:
        raise CorruptCheckpointError(f"architecture needs {net.n_params} parameters, file has {count}")
    net.set_flat(params)
    return Checkpoint(net, config, meta.get("rng"), meta.get("provenance", {}))


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return load_checkpoint(Path(path).read_bytes())


def write_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    Path(path).write_bytes(save_checkpoint(checkpoint.net, checkpoint.config,
                                           checkpoint.rng_state, checkpoint.provenance))
