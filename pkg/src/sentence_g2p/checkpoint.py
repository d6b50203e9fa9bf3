"""Binary checkpoint container: JSON header plus raw little-endian arrays.

Layout:
    magic   8 bytes  b"SG2PCKPT"
    version 4 bytes  uint32 LE
    hlen    8 bytes  uint64 LE, JSON header byte length
    header  hlen bytes of UTF-8 JSON
    data    concatenated C-order array bytes at the offsets the header lists

The header carries a ``meta`` object (model config, symbol tables, optimizer
scalars, RNG state, history) and a ``tensors`` manifest (name, dtype, shape,
offset). Writes go through a temp file and os.replace, so a crash never
leaves a truncated checkpoint behind. Round-trips are bit-identical.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

MAGIC = b"SG2PCKPT"
FORMAT_VERSION = 1


def write_container(path, meta: Dict, arrays: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    manifest = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<")
        # tobytes always emits C order, so no contiguity fix-up is needed
        # (and none is wanted: ascontiguousarray turns 0-d into shape (1,))
        buf = arr.astype(le, copy=False).tobytes()
        manifest.append(
            {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape), "offset": offset}
        )
        offset += len(buf)
        blobs.append(buf)
    header = json.dumps({"meta": meta, "tensors": manifest}).encode("utf-8")

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for buf in blobs:
            f.write(buf)
    os.replace(tmp, path)


def read_container(path) -> Tuple[Dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        base = f.tell()
        arrays = {}
        for entry in header["tensors"]:
            dtype = np.dtype(entry["dtype"]).newbyteorder("<")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            f.seek(base + entry["offset"])
            buf = f.read(count * dtype.itemsize)
            arr = np.frombuffer(buf, dtype=dtype).reshape(shape)
            arrays[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return header["meta"], arrays


def rng_state(rng: np.random.Generator) -> Dict:
    return rng.bit_generator.state


def restore_rng(state: Dict) -> np.random.Generator:
    bg_name = state["bit_generator"]
    bg = getattr(np.random, bg_name)()
    bg.state = state
    return np.random.Generator(bg)
