"""Single-file parameter container.

Layout: a UTF-8 text header terminated by an ``end`` line, then every parameter
array as little-endian float64 in the order the header lists them::

    acscreen-checkpoint 1
    arch=blstm
    dims={"hidden": 64, ...}
    params=fwd.Wx:64x256;fwd.Wh:64x256;...
    end
    <raw bytes>
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = "acscreen-checkpoint"
VERSION = 1


def _shape_str(shape) -> str:
    return "x".join(str(s) for s in shape) if shape else "scalar"


def _parse_shape(s: str) -> tuple[int, ...]:
    return () if s == "scalar" else tuple(int(v) for v in s.split("x"))


def write_checkpoint(path, arch: str, dims: dict, params: dict[str, np.ndarray]) -> None:
    spec = ";".join(f"{name}:{_shape_str(np.shape(a))}" for name, a in params.items())
    header = (
        f"{MAGIC} {VERSION}\n"
        f"arch={arch}\n"
        f"dims={json.dumps(dims, sort_keys=True)}\n"
        f"params={spec}\n"
        "end\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode())
        for a in params.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise FormatError(f"{path}: no checkpoint header")
    lines = raw[:cut].decode().split("\n")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    if int(magic[1]) != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {magic[1]}")
    fields = dict(line.split("=", 1) for line in lines[1:])
    body = raw[cut + len(marker):]
    params = {}
    offset = 0
    for item in filter(None, fields.get("params", "").split(";")):
        name, shape_s = item.rsplit(":", 1)
        shape = _parse_shape(shape_s)
        n = int(np.prod(shape)) if shape else 1
        chunk = body[offset : offset + 8 * n]
        if len(chunk) != 8 * n:
            raise FormatError(f"{path}: truncated data for {name}")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += 8 * n
    if offset != len(body):
        raise FormatError(f"{path}: {len(body) - offset} trailing bytes")
    return fields["arch"], json.loads(fields["dims"]), params
