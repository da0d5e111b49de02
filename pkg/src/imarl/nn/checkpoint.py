"""Binary checkpoint files.

Layout, all little-endian:
  bytes 0..3   magic "IMRL"
  bytes 4..7   format version, uint32 (currently 1)
  bytes 8..11  descriptor length L, uint32
  L bytes      network spec descriptor, JSON (NetworkSpec.to_dict)
  rest         parameter vector, float32

The loader cross-checks the parameter count against the descriptor.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointError
from .network import NetworkSpec, param_count

MAGIC = b"IMRL"
VERSION = 1


def save_checkpoint(path, spec: NetworkSpec, params: np.ndarray) -> None:
    n = param_count(spec)
    if params.shape != (n,):
        raise CheckpointError(f"parameter vector has shape {params.shape}, spec wants ({n},)")
    desc = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        fh.write(np.asarray(params, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[NetworkSpec, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    desc_len = struct.unpack_from("<I", blob, 8)[0]
    if len(blob) < 12 + desc_len:
        raise CheckpointError(f"{path}: truncated spec descriptor")
    try:
        spec = NetworkSpec.from_dict(json.loads(blob[12:12 + desc_len].decode("utf-8")))
    except (ValueError, TypeError, KeyError) as exc:
        raise CheckpointError(f"{path}: invalid spec descriptor: {exc}") from exc
    payload = blob[12 + desc_len:]
    n = param_count(spec)
    if len(payload) != 4 * n:
        raise CheckpointError(
            f"{path}: parameter payload is {len(payload)} bytes, spec wants {4 * n}")
    return spec, np.frombuffer(payload, dtype="<f4").astype(np.float32)
