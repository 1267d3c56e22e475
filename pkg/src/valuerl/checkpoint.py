"""Binary checkpoints for Q-tables and networks.

Layout (all little-endian)::

    8 bytes   magic b"VRLCKPT\\0"
    uint32    format version
    uint32    payload kind (0 = Q-table, 1 = network)
    uint16 n + n bytes   experiment tag (utf-8)
    uint16 n + n bytes   algorithm tag (utf-8)
    float64[] payload

Q-table payload: state_count, action_count, then the table row-major.
Network payload: number of layer sizes, the sizes, then for each layer the
(fan_in x fan_out) weight matrix row-major followed by its bias vector.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .nn import Network

MAGIC = b"VRLCKPT\x00"
VERSION = 1
KIND_TABLE, KIND_NETWORK = 0, 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    experiment: str
    algorithm: str
    model: Union[np.ndarray, Network]


def _tag(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    if isinstance(model, Network):
        kind = KIND_NETWORK
        parts = [np.array([len(model.layer_sizes), *model.layer_sizes], dtype=np.float64)]
        for w, b in zip(model.weights, model.biases):
            parts += [w.reshape(-1), b]
    else:
        q = np.asarray(model, dtype=np.float64)
        if q.ndim != 2:
            raise CheckpointError("Q-table must be two-dimensional")
        kind = KIND_TABLE
        parts = [np.array(q.shape, dtype=np.float64), q.reshape(-1)]
    payload = np.concatenate(parts).astype("<f8").tobytes()
    header = MAGIC + struct.pack("<II", VERSION, kind)
    return header + _tag(ckpt.experiment) + _tag(ckpt.algorithm) + payload


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic or truncated header)")
    version, kind = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    tags = []
    for _ in range(2):
        if len(data) < pos + 2:
            raise CheckpointError("truncated checkpoint tags")
        (n,) = struct.unpack("<H", data[pos:pos + 2])
        pos += 2
        if len(data) < pos + n:
            raise CheckpointError("truncated checkpoint tags")
        tags.append(data[pos:pos + n].decode("utf-8"))
        pos += n
    body = data[pos:]
    if len(body) % 8:
        raise CheckpointError("checkpoint payload length is not a multiple of 8 bytes")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)

    def need(count):
        if len(values) < count:
            raise CheckpointError(f"truncated checkpoint: expected {count} values, found {len(values)}")

    if kind == KIND_TABLE:
        need(2)
        rows, cols = int(values[0]), int(values[1])
        need(2 + rows * cols)
        if len(values) != 2 + rows * cols:
            raise CheckpointError("checkpoint length does not match table shape")
        model = values[2:].reshape(rows, cols).copy()
    elif kind == KIND_NETWORK:
        need(1)
        n = int(values[0])
        need(1 + n)
        sizes = [int(v) for v in values[1:1 + n]]
        expected = 1 + n + sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        need(expected)
        if len(values) != expected:
            raise CheckpointError("checkpoint length does not match layer sizes")
        pos = 1 + n
        weights, biases = [], []
        for i, o in zip(sizes[:-1], sizes[1:]):
            weights.append(values[pos:pos + i * o].reshape(i, o).copy())
            pos += i * o
            biases.append(values[pos:pos + o].copy())
            pos += o
        model = Network(sizes, weights, biases)
    else:
        raise CheckpointError(f"unknown checkpoint kind {kind}")
    return Checkpoint(tags[0], tags[1], model)


def save_checkpoint(path, model, experiment: str, algorithm: str) -> None:
    Path(path).write_bytes(encode_checkpoint(Checkpoint(experiment, algorithm, model)))


def load_checkpoint(path, experiment: Optional[str] = None) -> Checkpoint:
    """Read a checkpoint; with ``experiment`` given, reject a mismatched tag."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = decode_checkpoint(path.read_bytes())
    if experiment is not None and ckpt.experiment != experiment:
        raise CheckpointError(
            f"checkpoint {path} is for experiment {ckpt.experiment!r}, not {experiment!r}")
    return ckpt
