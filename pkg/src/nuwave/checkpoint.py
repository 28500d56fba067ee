"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes   b"NUWAVECK"
    version      u32       FORMAT_VERSION
    header_len   u32
    header       JSON, UTF-8, sorted keys:
                   {"config": {...}, "step": int, "optimizer": {...} | null, "meta": {...}}
    n_tensors    u32
    n_tensors x:
      name_len   u16
      name       UTF-8
      ndim       u8
      dims       ndim x u32
      payload    prod(dims) x float32
    crc32        u32       over every preceding byte

Model tensors use their parameter names; Adam moments are stored as
``adam.m/<name>`` and ``adam.v/<name>``.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, NuWaveNetwork
from .tensor import AdamState

MAGIC = b"NUWAVECK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: NuWaveNetwork
    step: int = 0
    optimizer: AdamState | None = None
    meta: dict = field(default_factory=dict)


def _tensor_table(model, optimizer):
    table = [(name, p.data) for name, p in model.named_parameters()]
    if optimizer is not None:
        names = [name for name, _ in model.named_parameters()]
        table += [(f"adam.m/{n}", m) for n, m in zip(names, optimizer.first_moment)]
        table += [(f"adam.v/{n}", v) for n, v in zip(names, optimizer.second_moment)]
    return table


def encode_checkpoint(model, *, step=0, optimizer=None, meta=None):
    header = {
        "config": model.config.to_dict(),
        "step": int(step),
        "optimizer": None if optimizer is None else {
            "lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
            "eps": optimizer.eps, "step_count": optimizer.step_count},
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes]
    table = _tensor_table(model, optimizer)
    parts.append(struct.pack("<I", len(table)))
    for name, arr in table:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model, path, *, step=0, optimizer=None, meta=None):
    data = encode_checkpoint(model, step=step, optimizer=optimizer, meta=meta)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError("unexpected end of checkpoint payload")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data, expect_config=None):
    if len(data) < len(MAGIC) + 12 or data[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic or too short)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError("checksum mismatch: file is truncated or corrupt")
    rd = _Reader(body)
    rd.take(len(MAGIC))
    version, hlen = rd.unpack("<II")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format v{version}, expected v{FORMAT_VERSION}")
    header = json.loads(rd.take(hlen).decode())
    config = ModelConfig.from_dict(header["config"])
    if expect_config is not None and config != expect_config:
        diffs = {k: (v, getattr(expect_config, k)) for k, v in config.to_dict().items()
                 if getattr(expect_config, k) != v}
        raise ConfigMismatchError(f"checkpoint config differs from the run's: {diffs}")
    (n,) = rd.unpack("<I")
    arrays = {}
    for _ in range(n):
        (nlen,) = rd.unpack("<H")
        name = rd.take(nlen).decode()
        (ndim,) = rd.unpack("<B")
        shape = rd.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(shape).astype(np.float64)
    if rd.pos != len(body):
        raise CorruptCheckpointError("trailing bytes after tensor table")

    model = NuWaveNetwork(config, init=False)
    params = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    try:
        model.load_arrays(params)
    except ValueError as exc:
        raise ConfigMismatchError(str(exc)) from None
    optimizer = None
    if header["optimizer"] is not None:
        names = [name for name, _ in model.named_parameters()]
        optimizer = AdamState(**header["optimizer"])
        try:
            optimizer.first_moment = [arrays[f"adam.m/{n}"] for n in names]
            optimizer.second_moment = [arrays[f"adam.v/{n}"] for n in names]
        except KeyError as exc:
            raise CorruptCheckpointError(f"missing optimizer tensor {exc}") from None
    return Checkpoint(model, header["step"], optimizer, header["meta"])


def load_checkpoint(path, expect_config=None):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), expect_config)
