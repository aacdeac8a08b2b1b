"""Multilevel orthogonal DWT filter bank.

The analysis step convolves the (extended) signal with the low/high-pass
decomposition filters over its full support and keeps the odd-indexed
outputs. Keeping the full support means every coefficient the infinite
transform would produce is retained, so with zero padding the transform is
exactly energy preserving, and with either boundary mode the synthesis
(adjoint) step reconstructs the signal exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio_io import AudioBuffer
from .errors import InconsistentShapes, InvalidLevel, SignalTooShort

_SQRT_HALF = math.sqrt(0.5)

# low-pass decomposition filters, Daubechies family (db1 == Haar)
_DEC_LO = {
    "haar": np.array([_SQRT_HALF, _SQRT_HALF]),
    "db4": np.array([
        -0.010597401785069032105,
        0.032883011666885199735,
        0.030841381835560763627,
        -0.18703481171909308408,
        -0.027983769416859854211,
        0.63088076792985890788,
        0.71484657055291564709,
        0.23037781330889650086,
    ]),
}


class Family(str, Enum):
    HAAR = "haar"
    DB4 = "db4"


class Boundary(str, Enum):
    SYMMETRIC = "symmetric"
    ZERO = "zero"


@dataclass(frozen=True)
class WaveletSpec:
    family: Family = Family.DB4
    level: int = 5
    boundary: Boundary = Boundary.SYMMETRIC

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if int(self.level) < 1:
            raise InvalidLevel(f"decomposition level must be >= 1, got {self.level}")

    @property
    def n_subbands(self) -> int:
        return self.level + 1

    def filters(self):
        """Return ``(dec_lo, dec_hi)``; the high-pass is the alternating flip."""
        h = _DEC_LO[self.family.value]
        n = np.arange(h.size)
        g = ((-1.0) ** (n + 1)) * h[::-1]
        return h, g

    def with_level(self, level: int) -> "WaveletSpec":
        return WaveletSpec(self.family, level, self.boundary)

    def to_dict(self):
        return {"family": self.family.value, "level": self.level, "boundary": self.boundary.value}


@dataclass(frozen=True, eq=False)
class WaveletDecomposition:
    approx: np.ndarray
    details: tuple  # (CD_n, ..., CD_1)
    spec: WaveletSpec

    @property
    def level(self) -> int:
        return len(self.details)

    def subbands(self):
        """Arrays in feature order: CA_n, CD_n, ..., CD_1."""
        return [self.approx, *self.details]


def _extend(x, pad, boundary):
    if boundary is Boundary.ZERO:
        return np.pad(x, pad)
    return np.pad(x, pad, mode="symmetric")


def analysis_step(x, spec: WaveletSpec):
    """One level: returns ``(approx, detail)`` each of length ``(len(x)+L-1)//2``."""
    h, g = spec.filters()
    L = h.size
    xe = _extend(x, L - 1, spec.boundary)
    # valid conv of xe: index m equals the full-support index of x * h
    lo = np.convolve(xe, h, mode="valid")
    hi = np.convolve(xe, g, mode="valid")
    return lo[1::2], hi[1::2]


def synthesis_step(approx, detail, out_len: int, spec: WaveletSpec):
    """Adjoint of :func:`analysis_step`, evaluated on ``out_len`` samples."""
    h, g = spec.filters()
    L = h.size
    if approx.shape != detail.shape:
        raise InconsistentShapes(f"approx {approx.shape} vs detail {detail.shape}")
    if approx.size != (out_len + L - 1) // 2:
        raise InconsistentShapes(
            f"{approx.size} coefficients cannot come from a length-{out_len} signal")
    # coefficient k sits at full-support position m = 2k+1; x[n] = sum_k c[k] f[2k+1-n]
    up_a = np.zeros(2 * approx.size + 1)
    up_d = np.zeros(2 * approx.size + 1)
    up_a[1::2] = approx
    up_d[1::2] = detail
    y = np.correlate(up_a, h, mode="full") + np.correlate(up_d, g, mode="full")
    # correlate 'full' index j <-> shift n = j - (L-1)
    return y[L - 1:L - 1 + out_len]


def max_level(n_samples: int) -> int:
    return int(math.floor(math.log2(n_samples))) if n_samples > 0 else 0


def dwt_multilevel(buf, spec: WaveletSpec = WaveletSpec(), clamp: bool = True) -> WaveletDecomposition:
    """n-level cascade; the approximation is fed forward at every level.

    ``buf`` may be an :class:`AudioBuffer` or a 1-D array. If the signal is
    shorter than ``2**level`` the level is clamped to ``floor(log2(len))``
    (with a warning) unless ``clamp`` is False.
    """
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    n = x.size
    level = spec.level
    if n < 2 ** level:
        if not clamp or n < 2:
            raise SignalTooShort(f"{n} samples cannot support a level-{level} decomposition")
        level = max_level(n)
        warnings.warn(f"signal of {n} samples: DWT level clamped from {spec.level} to {level}",
                      stacklevel=2)
        spec = spec.with_level(level)

    details = []
    a = x
    for _ in range(level):
        a, d = analysis_step(a, spec)
        details.append(d)
    return WaveletDecomposition(a, tuple(reversed(details)), spec)


def idwt_multilevel(dec: WaveletDecomposition, original_len: int) -> AudioBuffer:
    """Synthesis cascade. Returns an AudioBuffer at a nominal 16 kHz rate."""
    return AudioBuffer(idwt_array(dec, original_len), 16000)


def idwt_array(dec: WaveletDecomposition, original_len: int) -> np.ndarray:
    if len(dec.details) != dec.spec.level:
        raise InconsistentShapes(
            f"{len(dec.details)} detail arrays for a level-{dec.spec.level} spec")
    details = list(dec.details)  # CD_n ... CD_1
    a = np.asarray(dec.approx, dtype=np.float64)
    for i, d in enumerate(details):
        # length of the signal this level was computed from
        out_len = original_len if i == len(details) - 1 else len(details[i + 1])
        a = synthesis_step(a, np.asarray(d, dtype=np.float64), out_len, dec.spec)
    return a
