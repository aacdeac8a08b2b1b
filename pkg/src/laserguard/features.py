"""Per-clip feature front-ends.

``dwt_moment_features`` is the detector's own representation: variance,
skew and excess kurtosis of every DWT subband, in the order CA_n, CD_n, ...,
CD_1. The cepstral front-ends (MFCC, LFCC, CQCC) are the comparison
baselines; they produce frame matrices that ``aggregate_frames`` reduces to
a fixed-length clip vector.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy.fft import dct, rfft, rfftfreq
from scipy.interpolate import CubicSpline
from scipy.signal import get_window, resample_poly, welch

from .audio_io import AudioBuffer
from .dwt import WaveletSpec, dwt_multilevel
from .errors import ClipTooShort, EmptyAudio, EmptyFrames
from .stats import moments

LOG_FLOOR = 1e-10
# subbands whose peak is below this fraction of the signal peak are round-off
_ROUNDOFF = 1e-12


class Scheme(str, Enum):
    DWT = "dwt"
    MFCC = "mfcc"
    LFCC = "lfcc"
    CQCC = "cqcc"


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    scheme: Scheme

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.scheme} feature vector has non-finite entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class CepstralConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    n_filters: int = 26
    n_coeffs: int = 20
    cqt_bins_per_octave: int = 96
    cqt_octaves: int = 9
    cqcc_resample_period: int = 16
    aggregation: str = "mean_std"

    def __post_init__(self):
        if not self.frame_ms > self.hop_ms > 0:
            raise ValueError("need frame_ms > hop_ms > 0")
        if self.n_coeffs > self.n_filters:
            raise ValueError("n_coeffs cannot exceed n_filters")
        if self.aggregation != "mean_std":
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def frame_len(self, sr) -> int:
        return int(round(self.frame_ms * sr / 1000))

    def hop_len(self, sr) -> int:
        return int(round(self.hop_ms * sr / 1000))

    def to_dict(self):
        return asdict(self)


# --- DWT moments -----------------------------------------------------------

def dwt_feature_dim(spec: WaveletSpec) -> int:
    return 3 * (spec.level + 1)


def dwt_moment_features(buf: AudioBuffer, spec: WaveletSpec = WaveletSpec()) -> FeatureVector:
    x = buf.samples
    if x.size == 0:
        raise EmptyAudio("cannot featurize an empty clip")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = dwt_multilevel(x, spec)
    if dec.level < spec.level:
        warnings.warn(f"clip of {x.size} samples decomposed at level {dec.level}; "
                      f"features zero-padded to {dwt_feature_dim(spec)}", stacklevel=2)
    floor = _ROUNDOFF * float(np.max(np.abs(x)))
    values = []
    for band in dec.subbands():
        if float(np.max(np.abs(band))) <= floor:
            band = np.zeros_like(band)
        values.extend(moments(band).as_tuple())
    out = np.zeros(dwt_feature_dim(spec))
    out[:len(values)] = values
    return FeatureVector(out, Scheme.DWT)


# --- framing and filterbanks ------------------------------------------------

def frame_signal(x, frame_len: int, hop: int) -> np.ndarray:
    if x.size < frame_len:
        raise ClipTooShort(f"{x.size} samples is shorter than one {frame_len}-sample frame")
    n_frames = (x.size - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def filter_edges(kind: str, n_filters: int, sr: int) -> np.ndarray:
    """``n_filters + 2`` edge/center frequencies from 0 Hz to Nyquist."""
    nyq = sr / 2
    if kind == "mel":
        return mel_to_hz(np.linspace(0.0, hz_to_mel(nyq), n_filters + 2))
    return np.linspace(0.0, nyq, n_filters + 2)


def filter_centers(kind: str, n_filters: int, sr: int) -> np.ndarray:
    return filter_edges(kind, n_filters, sr)[1:-1]


def triangular_filterbank(edges, fft_size: int, sr: int) -> np.ndarray:
    """Triangles evaluated at the rfft bin frequencies; shape (n_filters, bins)."""
    f = rfftfreq(fft_size, 1.0 / sr)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (f[None, :] - lo) / (mid - lo)
    falling = (hi - f[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def filterbank_log_energies(buf: AudioBuffer, cfg: CepstralConfig, kind: str) -> np.ndarray:
    """Per-frame log filter energies before the DCT (frames x n_filters)."""
    sr = buf.sample_rate_hz
    frame_len = cfg.frame_len(sr)
    if cfg.fft_size < frame_len:
        raise ValueError(f"fft_size {cfg.fft_size} shorter than {frame_len}-sample frame")
    frames = frame_signal(buf.samples, frame_len, cfg.hop_len(sr))
    frames = frames * get_window("hamming", frame_len, fftbins=False)
    power = np.abs(rfft(frames, n=cfg.fft_size, axis=1)) ** 2 / cfg.fft_size
    fb = triangular_filterbank(filter_edges(kind, cfg.n_filters, sr), cfg.fft_size, sr)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def _filterbank_cepstra(buf, cfg, kind):
    log_e = filterbank_log_energies(buf, cfg, kind)
    return dct(log_e, type=2, norm="ortho", axis=1)[:, :cfg.n_coeffs]


def mfcc(buf: AudioBuffer, cfg: CepstralConfig = CepstralConfig()) -> np.ndarray:
    """Mel cepstra, frames x n_coeffs (c0 included)."""
    return _filterbank_cepstra(buf, cfg, "mel")


def lfcc(buf: AudioBuffer, cfg: CepstralConfig = CepstralConfig()) -> np.ndarray:
    """Linear-frequency cepstra, frames x n_coeffs (c0 included)."""
    return _filterbank_cepstra(buf, cfg, "linear")


# --- constant-Q ---------------------------------------------------------------

def cqt_frequencies(cfg: CepstralConfig, sr: int) -> np.ndarray:
    fmin = (sr / 2) / 2 ** cfg.cqt_octaves
    k = np.arange(cfg.cqt_bins_per_octave * cfg.cqt_octaves)
    return fmin * 2.0 ** (k / cfg.cqt_bins_per_octave)


def _octave_kernels(freqs, rate, Q):
    lengths = np.ceil(Q * rate / freqs).astype(int)
    width = int(lengths.max()) | 1  # odd so every kernel centres on one sample
    half = width // 2
    kern = np.zeros((freqs.size, width), dtype=np.complex128)
    for i, (f, n) in enumerate(zip(freqs, lengths)):
        w = get_window("hann", int(n), fftbins=False)
        t = np.arange(n) - (n - 1) / 2.0
        start = half - (n - 1) // 2
        kern[i, start:start + n] = w * np.exp(2j * np.pi * f * t / rate) / w.sum()
    return kern, half


def cqt(buf: AudioBuffer, cfg: CepstralConfig = CepstralConfig()):
    """Constant-Q transform by direct kernel evaluation at each frame centre.

    Every octave below the top one is evaluated on a copy of the signal
    decimated so that the octave lies in the lower half of its band; kernel
    lengths then stay under ``8 Q`` samples. Kernels overhanging the clip see
    zeros. Returns ``(freqs, X)`` with ``X`` complex, frames x bins.
    """
    sr = buf.sample_rate_hz
    frame_len, hop = cfg.frame_len(sr), cfg.hop_len(sr)
    x = buf.samples
    if x.size < frame_len:
        raise ClipTooShort(f"{x.size} samples is shorter than one {frame_len}-sample frame")
    n_frames = (x.size - frame_len) // hop + 1
    centres = hop * np.arange(n_frames) + frame_len // 2

    B = cfg.cqt_bins_per_octave
    freqs = cqt_frequencies(cfg, sr)
    Q = 1.0 / (2.0 ** (1.0 / B) - 1.0)
    out = np.zeros((n_frames, freqs.size), dtype=np.complex128)
    sig, factor = x, 1
    for octave in range(cfg.cqt_octaves):
        want = 2 ** max(octave - 1, 0)
        while factor < want:
            sig = resample_poly(sig, 1, 2)
            factor *= 2
        hi = freqs.size - octave * B
        band = slice(hi - B, hi)
        kern, half = _octave_kernels(freqs[band], sr / factor, Q)
        padded = np.pad(sig, half)
        c = np.round(centres / factor).astype(int)
        segs = padded[c[:, None] + np.arange(2 * half + 1)[None, :]]
        out[:, band] = segs @ kern.conj().T
    return freqs, out


def cqcc(buf: AudioBuffer, cfg: CepstralConfig = CepstralConfig()) -> np.ndarray:
    """Constant-Q cepstra, frames x n_coeffs (c0 included)."""
    freqs, X = cqt(buf, cfg)
    log_p = np.log(np.maximum(np.abs(X) ** 2, LOG_FLOOR))
    # uniform resampling of the geometric axis: d samples across the first octave
    step = freqs[0] / cfg.cqcc_resample_period
    grid = np.arange(freqs[0], freqs[-1], step)
    uniform = CubicSpline(freqs, log_p, axis=1)(grid)
    return dct(uniform, type=2, norm="ortho", axis=1)[:, :cfg.n_coeffs]


# --- clip-level reduction -------------------------------------------------------

def aggregate_frames(frames, scheme=Scheme.MFCC) -> FeatureVector:
    """Per-coefficient mean followed by population std across frames."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise EmptyFrames("no frames to aggregate")
    return FeatureVector(np.concatenate([frames.mean(axis=0), frames.std(axis=0)]), scheme)


def feature_dim(scheme, spec: WaveletSpec = WaveletSpec(), cfg: CepstralConfig = CepstralConfig()) -> int:
    if Scheme(scheme) is Scheme.DWT:
        return dwt_feature_dim(spec)
    return 2 * cfg.n_coeffs


_CEPSTRAL = {Scheme.MFCC: mfcc, Scheme.LFCC: lfcc, Scheme.CQCC: cqcc}


def featurize(buf: AudioBuffer, scheme, spec: WaveletSpec = WaveletSpec(),
              cfg: CepstralConfig = CepstralConfig()) -> FeatureVector:
    scheme = Scheme(scheme)
    if scheme is Scheme.DWT:
        return dwt_moment_features(buf, spec)
    return aggregate_frames(_CEPSTRAL[scheme](buf, cfg), scheme)


# --- spectrum export -----------------------------------------------------------

def log_spectrum(buf: AudioBuffer, nperseg: int = 512):
    """Welch-averaged power spectrum in dB, 0 Hz to Nyquist."""
    if len(buf) == 0:
        raise EmptyAudio("cannot take the spectrum of an empty clip")
    f, p = welch(buf.samples, fs=buf.sample_rate_hz, window="hann",
                 nperseg=min(nperseg, len(buf)), scaling="spectrum")
    return f, 10.0 * np.log10(np.maximum(p, 1e-20))


def band_mean_db(freqs, mag_db, lo, hi) -> float:
    sel = (freqs >= lo) & (freqs <= hi)
    return float(mag_db[sel].mean())
