"""WAV I/O and the canonical in-memory audio representation.

Every front-end in the package consumes an :class:`AudioBuffer`: mono float64
samples plus an integer sample rate. The canonical pipeline rate is 16 kHz.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import CorruptHeader, EmptyAudio, NotFound, UnsupportedFormat

CANONICAL_RATE = 16000

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def slice_seconds(self, start_s: float, end_s: float) -> "AudioBuffer":
        i0 = int(round(start_s * self.sample_rate_hz))
        i1 = int(round(end_s * self.sample_rate_hz))
        return AudioBuffer(self.samples[i0:i1], self.sample_rate_hz)


def _require_samples(buf: AudioBuffer):
    if len(buf) == 0:
        raise EmptyAudio("audio buffer has no samples")


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        yield cid, size, body
        pos += 8 + size + (size & 1)


def _decode_fmt(body: bytes):
    if len(body) < 16:
        raise CorruptHeader(f"fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise CorruptHeader("extensible fmt chunk too short")
        # the sub-format GUID starts with the plain format tag
        (tag,) = struct.unpack("<H", body[24:26])
    if tag not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormat(f"compressed or unknown WAV format tag 0x{tag:04x}")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels; only mono and stereo are supported")
    if rate == 0:
        raise CorruptHeader("sample rate of 0 in fmt chunk")
    if tag == _WAVE_FORMAT_PCM and bits not in (8, 16, 24, 32):
        raise UnsupportedFormat(f"{bits}-bit integer PCM")
    if tag == _WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedFormat(f"{bits}-bit float PCM")
    if block_align != channels * bits // 8:
        raise CorruptHeader(f"block align {block_align} inconsistent with {channels}x{bits} bit")
    return tag, channels, rate, bits


def _decode_samples(raw: bytes, tag: int, bits: int) -> np.ndarray:
    if tag == _WAVE_FORMAT_IEEE_FLOAT:
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if bits == 8:
        # 8-bit WAV is unsigned with a 128 offset
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)


def load_wav(path) -> AudioBuffer:
    """Read a PCM/float RIFF WAVE file, mixing stereo down to mono."""
    path = Path(path)
    if not path.is_file():
        raise NotFound(f"no such audio file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    raw = None
    for cid, size, body in _iter_chunks(data):
        if cid == b"fmt ":
            fmt = _decode_fmt(body)
        elif cid == b"data":
            raw = body
            break
    if fmt is None:
        raise CorruptHeader(f"{path}: missing fmt chunk")
    if raw is None:
        raise CorruptHeader(f"{path}: missing data chunk")

    tag, channels, rate, bits = fmt
    frame_bytes = channels * bits // 8
    raw = raw[: len(raw) - len(raw) % frame_bytes]
    if not raw:
        raise EmptyAudio(f"{path}: zero samples")
    x = _decode_samples(raw, tag, bits).reshape(-1, channels).mean(axis=1)
    return AudioBuffer(x, rate)


def write_wav(path, buf: AudioBuffer):
    """Write ``buf`` as 16-bit little-endian mono PCM.

    Samples are mapped with the same 1/32768 scale ``load_wav`` uses, so a
    loaded 16-bit file is a fixed point of write -> load.
    """
    _require_samples(buf)
    q = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1,
                                buf.sample_rate_hz, buf.sample_rate_hz * 2, 2, 16)
    data = b"data" + struct.pack("<I", len(payload)) + payload
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + fmt + data)
    os.replace(tmp, path)


def resample(buf: AudioBuffer, target_hz: int) -> AudioBuffer:
    """Polyphase (Kaiser-windowed sinc) sample-rate conversion."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    _require_samples(buf)
    if target_hz == buf.sample_rate_hz:
        return buf
    g = gcd(int(target_hz), buf.sample_rate_hz)
    y = resample_poly(buf.samples, int(target_hz) // g, buf.sample_rate_hz // g)
    return AudioBuffer(y, target_hz)


def peak_normalize(buf: AudioBuffer, peak: float = 1.0) -> AudioBuffer:
    m = float(np.max(np.abs(buf.samples))) if len(buf) else 0.0
    if m == 0.0:
        return buf
    return AudioBuffer(buf.samples * (peak / m), buf.sample_rate_hz)


def load_clip(path, target_hz: int = CANONICAL_RATE) -> AudioBuffer:
    """Load a clip and bring it to the canonical pipeline rate."""
    return resample(load_wav(path), target_hz)
