"""Model checkpoint container.

Layout: ``b"WCKPT1\\n"``, an unsigned 64-bit little-endian header length, the
UTF-8 JSON header, then every parameter as raw little-endian float64 in the
order listed in the header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WCKPT1\n"


class CheckpointError(ValueError):
    pass


def dumps(kind: str, config: dict, params: dict[str, np.ndarray], seed: int, step: int) -> bytes:
    header = {
        "kind": kind,
        "config": config,
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()],
        "seed": int(seed),
        "step": int(step),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in params.values())
    return MAGIC + struct.pack("<Q", len(head)) + head + blobs


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint: bad magic bytes")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (n,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    try:
        header = json.loads(blob[pos:pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    pos += n
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(blob):
            raise CheckpointError(f"truncated parameter blob for {entry['name']}")
        params[entry["name"]] = np.frombuffer(blob[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after parameters")
    return header, params


def save(path, kind: str, config: dict, params: dict[str, np.ndarray], seed: int, step: int) -> None:
    Path(path).write_bytes(dumps(kind, config, params, seed, step))


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
