"""Mono WAV reading/writing: 16-bit PCM and 32-bit IEEE float."""
from __future__ import annotations

import struct

import numpy as np

from .dsp import AudioSignal

PCM16 = "pcm16"
FLOAT32 = "float32"

_FORMAT_PCM = 1
_FORMAT_FLOAT = 3
_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    pass


def encode_wav(signal, encoding=PCM16):
    x = signal.samples
    if encoding == PCM16:
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        fmt_code, bits = _FORMAT_PCM, 16
    elif encoding == FLOAT32:
        q = x.astype("<f4")
        fmt_code, bits = _FORMAT_FLOAT, 32
    else:
        raise ValueError(f"unknown WAV encoding {encoding!r}")
    payload = q.tobytes()
    block = bits // 8
    fmt = struct.pack("<HHIIHH", fmt_code, 1, signal.sample_rate,
                      signal.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if fmt_code == _FORMAT_FLOAT:
        # non-PCM formats carry a fact chunk with the frame count
        chunks += b"fact" + struct.pack("<II", 4, q.size)
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def write_wav(path, signal, encoding=PCM16):
    with open(path, "wb") as fh:
        fh.write(encode_wav(signal, encoding))


def decode_wav(data):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _FORMAT_EXTENSIBLE and len(body) >= 26:
                fmt = (struct.unpack("<H", body[24:26])[0],) + fmt[1:]
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size % 2)
    if fmt is None or payload is None:
        raise WavFormatError("missing fmt or data chunk")
    code, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise WavFormatError(f"only mono audio is supported, got {channels} channels")
    if code == _FORMAT_PCM and bits == 16:
        x = np.frombuffer(payload[:len(payload) // 2 * 2], dtype="<i2") / 32768.0
    elif code == _FORMAT_FLOAT and bits == 32:
        x = np.frombuffer(payload[:len(payload) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"unsupported WAV format code={code} bits={bits}")
    return AudioSignal(x, rate)


def read_wav(path):
    with open(path, "rb") as fh:
        return decode_wav(fh.read())
