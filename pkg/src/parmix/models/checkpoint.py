"""Binary checkpoint container for :class:`MiniNeuralModel`.

Layout (all integers little-endian)::

    magic        8 bytes   b"PARMIXCK"
    version      uint32    FORMAT_VERSION
    header_len   uint32    byte length of the JSON header
    header       utf-8 JSON, keys sorted: format_version, vocab (size, pad,
                 bos, sep), dims (d_model, n_heads, d_ff, n_layers,
                 max_positions), tensors [[name, shape], ...]
    tensors      float32 little-endian, C order, concatenated in the order
                 listed in the header (which is ``param_shapes`` order)

Loading then saving reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..core import Vocab
from .neural import MiniNeuralModel, ModelDims, param_shapes

MAGIC = b"PARMIXCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(model: MiniNeuralModel) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "vocab": {"size": model.vocab.size, "pad": model.vocab.pad, "bos": model.vocab.bos, "sep": model.vocab.sep},
        "dims": asdict(model.dims),
        "tensors": [[name, list(p.shape)] for name, p in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.params.values()]
    return b"".join(parts)


def from_bytes(data: bytes) -> MiniNeuralModel:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a parmix checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16 : 16 + hlen])
        vocab = Vocab(**header["vocab"])
        dims = ModelDims(**header["dims"])
        listed = {name: tuple(shape) for name, shape in header["tensors"]}
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    expected = param_shapes(vocab.size, dims)
    if list(listed) != list(expected) or listed != expected:
        raise CheckpointError("tensor table does not match the declared architecture")
    offset = 16 + hlen
    payload = 4 * sum(int(np.prod(shape)) for shape in expected.values())
    if len(data) < offset + payload:
        raise CheckpointError(f"truncated checkpoint: {offset + payload - len(data)} bytes missing")
    params = {}
    for name, shape in expected.items():
        n = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float32)
        offset += 4 * n
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after the last tensor")
    return MiniNeuralModel(vocab, dims, params)


def save(model: MiniNeuralModel, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(model))
    return path


def load(path) -> MiniNeuralModel:
    return from_bytes(Path(path).read_bytes())
