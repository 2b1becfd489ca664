"""Checkpoint files.

Layout (all integers little-endian)::

    b"FQM1" | uint32 version | uint32 header_len | header (UTF-8 JSON) | float32 weights

The header's ``"params"`` entry lists ``[name, shape]`` pairs; weights follow
in exactly that order, C-contiguous.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"FQM1"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


class CheckpointError(DataError):
    pass


def write_checkpoint(path, header: dict, params: dict[str, np.ndarray]):
    header = dict(header)
    header["params"] = [[name, list(arr.shape)] for name, arr in params.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise CheckpointError("checkpoint truncated")
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
        layout = [(str(name), tuple(int(d) for d in shape)) for name, shape in header["params"]]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header ({exc})") from exc
    expected = 4 * sum(int(np.prod(shape)) for _, shape in layout)
    available = len(data) - start
    if available < expected:
        raise CheckpointError("checkpoint truncated")
    if available > expected:
        raise CheckpointError(
            f"{path}: header declares {expected} weight bytes but file holds {available}"
        )
    params, offset = {}, start
    for name, shape in layout:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset += 4 * count
    return header, params
