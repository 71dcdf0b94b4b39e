"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes   b"SOCCERCK"
    version    uint32    FORMAT_VERSION
    meta_len   uint32
    meta       meta_len bytes of UTF-8 JSON
    blocks     raw little-endian arrays, back to back, in the order of
               meta["blocks"]

``meta["blocks"]`` is the dimension table: one ``{"name", "dtype", "shape"}``
entry per block.  Network parameters are stored as ``<f4`` blocks whose names
start with ``params.``; a full training checkpoint adds optimizer moments,
self-play snapshots and environment state under other prefixes.  The
``dense_active`` flag, network dimensions and curriculum state live in the
JSON metadata.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .neural import NetDims, NetworkParams

MAGIC = b"SOCCERCK"
FORMAT_VERSION = 1
_ALLOWED = {"<f4", "<f8", "<i8", "|b1", "|i1", "<i4"}


class CheckpointError(IOError):
    pass


def write_blocks(path, blocks: dict, meta: dict) -> None:
    table = []
    payload = []
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype
        arr = arr.astype(dt, copy=False)
        if dt.str not in _ALLOWED:
            raise CheckpointError(f"unsupported dtype {dt.str} for block {name!r}")
        table.append({"name": name, "dtype": dt.str, "shape": list(arr.shape)})
        payload.append(np.ascontiguousarray(arr).tobytes())
    meta = dict(meta, format_version=FORMAT_VERSION, blocks=table)
    raw = json.dumps(meta).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for chunk in payload:
            fh.write(chunk)
    tmp.replace(path)


def read_blocks(path) -> tuple[dict, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {data[:8]!r})")
    version, meta_len = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} unsupported "
                              f"(this build reads version {FORMAT_VERSION})")
    try:
        meta = json.loads(data[16:16 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata (format version {version}): {exc}") from exc
    offset = 16 + meta_len
    blocks = {}
    for entry in meta.get("blocks", []):
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        size = count * dt.itemsize
        if offset + size > len(data):
            raise CheckpointError(f"{path}: truncated at block {entry['name']!r} "
                                  f"(format version {version}, {len(data)} bytes)")
        blocks[entry["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=offset) \
            .reshape(entry["shape"]).copy()
        offset += size
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes (format version {version})")
    return blocks, meta


def params_to_blocks(params: NetworkParams, prefix: str = "params.") -> dict:
    return {prefix + k: v.astype("<f4") for k, v in params.arrays.items()}


def params_from_blocks(blocks: dict, dims: NetDims, prefix: str = "params.") -> NetworkParams:
    arrays = {k[len(prefix):]: v for k, v in blocks.items() if k.startswith(prefix)}
    if not arrays:
        raise CheckpointError(f"no parameter blocks with prefix {prefix!r}")
    checked = {}
    for net in ("actor", "critic"):
        for part in ("mate", "opp", "head"):
            sizes = dims.layer_sizes(part, net)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                for key, shape in ((f"{net}.{part}.{i}.W", (a, b)), (f"{net}.{part}.{i}.b", (b,))):
                    got = arrays.get(key)
                    if got is None or got.shape != shape:
                        raise CheckpointError(f"parameter {key}: expected shape {shape}, "
                                              f"found {None if got is None else got.shape}")
                    checked[key] = got
    extra = set(arrays) - set(checked)
    if extra:
        raise CheckpointError(f"unexpected parameter blocks: {sorted(extra)[:4]}")
    return NetworkParams(dims, checked)


def save_policy(path, params: NetworkParams, dense_active: bool = True, extra_meta: dict | None = None) -> None:
    meta = {"kind": "policy", "dims": params.dims.to_dict(), "dense_active": bool(dense_active)}
    meta.update(extra_meta or {})
    write_blocks(path, params_to_blocks(params), meta)


def load_policy(path) -> tuple[NetworkParams, dict]:
    """Network parameters from a policy or training checkpoint."""
    blocks, meta = read_blocks(path)
    if "dims" not in meta:
        raise CheckpointError(f"{path}: metadata lacks the network dimension table")
    dims = NetDims.from_dict(meta["dims"])
    return params_from_blocks(blocks, dims), meta
