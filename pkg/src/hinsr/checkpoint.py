"""Checkpoint files: a JSON header line followed by raw little-endian float64.

The header carries a version tag and the ordered (name, shape) list, so a
file round-trips bit-exactly and hashes identically for identical weights.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import HinError

FORMAT = "hinsr-checkpoint"
VERSION = 1


class CheckpointError(HinError):
    pass


def dumps(params: dict) -> bytes:
    header = {
        "format": FORMAT,
        "version": VERSION,
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params.items()],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    body = b"".join(np.ascontiguousarray(_array(p), dtype="<f8").tobytes() for p in params.values())
    return head + body


def loads(blob: bytes) -> dict:
    nl = blob.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing checkpoint header")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    body = memoryview(blob)[nl + 1:]
    out = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(body):
            raise CheckpointError(f"truncated checkpoint at parameter {entry['name']}")
        out[entry["name"]] = np.frombuffer(body[offset:offset + nbytes], dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise CheckpointError("trailing bytes after last parameter")
    return out


def save(path, params: dict) -> str:
    """Write ``params`` to ``path`` and return the sha256 of the file contents."""
    blob = dumps(params)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path) -> dict:
    return loads(Path(path).read_bytes())


def content_hash(params: dict) -> str:
    return hashlib.sha256(dumps(params)).hexdigest()


def _array(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else np.asarray(p)
