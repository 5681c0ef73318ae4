"""Versioned binary checkpoints: magic, JSON header, raw little-endian tensors.

The header is written with sorted keys and no timestamps, so saving the same
networks twice gives identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .mlp import MLP

MAGIC = b"LAMARLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _net_meta(net: MLP) -> dict:
    return {"sizes": list(net.sizes), "output": net.output}


def save_checkpoint(path: Union[str, Path], nets: dict, config: dict, episode: int) -> None:
    meta, chunks, offset = {}, [], 0
    tensors = []
    for name in sorted(nets):
        net = nets[name]
        meta[name] = _net_meta(net)
        for k, arr in enumerate(net.params()):
            data = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
            tensors.append(
                {"net": name, "index": k, "dtype": arr.dtype.str.lstrip("<>|="), "shape": list(arr.shape),
                 "offset": offset, "nbytes": len(data)}
            )
            chunks.append(data)
            offset += len(data)
    header = json.dumps(
        {"version": VERSION, "episode": int(episode), "config": config, "nets": meta, "tensors": tensors},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path: Union[str, Path]) -> tuple[dict, dict, int]:
    """Returns (nets by name, config echo, episode counter)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<II", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 8
    header = json.loads(raw[start : start + hlen].decode("utf-8"))
    body = memoryview(raw)[start + hlen :]
    params = {name: [] for name in header["nets"]}
    for t in header["tensors"]:
        dtype = np.dtype(t["dtype"]).newbyteorder("<")
        if t["offset"] + t["nbytes"] > len(body):
            raise CheckpointError(f"{path}: truncated tensor data")
        arr = np.frombuffer(body[t["offset"] : t["offset"] + t["nbytes"]], dtype=dtype).reshape(t["shape"])
        params[t["net"]].append(arr.astype(dtype.newbyteorder("="), copy=True))
    nets = {}
    for name, meta in header["nets"].items():
        p = params[name]
        nets[name] = MLP(tuple(meta["sizes"]), meta["output"], p[0::2], p[1::2])
    return nets, header["config"], header["episode"]
