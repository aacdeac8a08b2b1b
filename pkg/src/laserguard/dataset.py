"""Corpus manifests, evaluation partitions and the synthetic corpus.

The synthetic generator stands in for the 19-speaker x 5-utterance recording
campaign. Every (speaker, utterance) pair gets one dry speech-like signal
that is passed through two channels:

* acoustic: room impulse response (exponential-decay noise tail) plus
  broadband sensor noise;
* laser: low-pass response plus band-limited low-frequency noise, no room.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import bilinear, butter, fftconvolve, lfilter, sosfilt

from .audio_io import AudioBuffer, write_wav
from .errors import (
    DuplicateKey,
    IncompleteCorpus,
    InvalidBand,
    IoError,
    MalformedRow,
    UnknownLabel,
)

MANIFEST_FIELDS = ["clip_id", "speaker_id", "utterance_id", "label", "path"]


class Label(str, Enum):
    ACOUSTIC = "acoustic"
    LASER = "laser"

    @property
    def y(self) -> int:
        return 1 if self is Label.LASER else -1


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    speaker_id: int
    utterance_id: int
    label: Label
    path: Path


def load_manifest(path) -> list[ClipRecord]:
    """Parse a manifest CSV; relative clip paths resolve against its folder."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError as exc:
        raise IoError(f"manifest not found: {path}") from exc
    records, seen_keys, seen_ids = [], set(), set()
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != MANIFEST_FIELDS:
            raise MalformedRow(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise MalformedRow(f"{path}:{lineno}: wrong number of fields")
            try:
                speaker = int(row["speaker_id"])
                utterance = int(row["utterance_id"])
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from exc
            if speaker < 1 or utterance < 1:
                raise MalformedRow(f"{path}:{lineno}: ids must be positive")
            try:
                label = Label(row["label"].strip())
            except ValueError:
                raise UnknownLabel(f"{path}:{lineno}: unknown label {row['label']!r}") from None
            clip_id = row["clip_id"].strip()
            key = (speaker, utterance, label)
            if key in seen_keys or clip_id in seen_ids:
                raise DuplicateKey(f"{path}:{lineno}: duplicate clip {clip_id} {key}")
            seen_keys.add(key)
            seen_ids.add(clip_id)
            clip_path = Path(row["path"].strip())
            if not clip_path.is_absolute():
                clip_path = path.parent / clip_path
            records.append(ClipRecord(clip_id, speaker, utterance, label, clip_path))
    return records


def write_manifest(records, path, relative_to=None):
    path = Path(path)
    base = Path(relative_to) if relative_to else path.parent
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in records:
            p = Path(r.path)
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
            w.writerow([r.clip_id, r.speaker_id, r.utterance_id, r.label.value, p.as_posix()])


# --- partitions --------------------------------------------------------------

class Protocol(str, Enum):
    SD_TD = "sd_td"
    SI_TD = "si_td"
    SI_TI = "si_ti"


@dataclass(frozen=True)
class Partition:
    train: tuple
    test: tuple
    protocol: Protocol


TRAIN_FRACTION = 0.7
# 14 of 19 speakers and 3 of 5 utterances go to training
SPEAKER_TRAIN_RATIO = (14, 19)
UTTERANCE_TRAIN_RATIO = (3, 5)


def _complete_grid(records):
    speakers = sorted({r.speaker_id for r in records})
    utterances = sorted({r.utterance_id for r in records})
    have = {(r.speaker_id, r.utterance_id, r.label) for r in records}
    missing = [(s, u, lab.value) for s in speakers for u in utterances for lab in Label
               if (s, u, lab) not in have]
    if not records or missing:
        raise IncompleteCorpus(
            f"speaker-independent protocols need every speaker x utterance x label; "
            f"missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return speakers, utterances


def make_partition(records, protocol, seed: int = 0) -> Partition:
    protocol = Protocol(protocol)
    ids = [r.clip_id for r in records]
    if protocol is Protocol.SD_TD:
        perm = np.random.default_rng(seed).permutation(len(ids))
        n_train = int(math.floor(TRAIN_FRACTION * len(ids)))
        chosen = set(perm[:n_train].tolist())
        train = tuple(i for k, i in enumerate(ids) if k in chosen)
        test = tuple(i for k, i in enumerate(ids) if k not in chosen)
        return Partition(train, test, protocol)

    speakers, utterances = _complete_grid(records)
    n_spk = round(len(speakers) * SPEAKER_TRAIN_RATIO[0] / SPEAKER_TRAIN_RATIO[1])
    train_spk, test_spk = set(speakers[:n_spk]), set(speakers[n_spk:])
    if protocol is Protocol.SI_TD:
        train = tuple(r.clip_id for r in records if r.speaker_id in train_spk)
        test = tuple(r.clip_id for r in records if r.speaker_id in test_spk)
    else:
        n_utt = round(len(utterances) * UTTERANCE_TRAIN_RATIO[0] / UTTERANCE_TRAIN_RATIO[1])
        train_utt, test_utt = set(utterances[:n_utt]), set(utterances[n_utt:])
        train = tuple(r.clip_id for r in records
                      if r.speaker_id in train_spk and r.utterance_id in train_utt)
        test = tuple(r.clip_id for r in records
                     if r.speaker_id in test_spk and r.utterance_id in test_utt)
    return Partition(train, test, protocol)


# --- colored noise -------------------------------------------------------------

def band_limited_noise(n: int, sr: int, band_hz, rng, exponent: float = 0.0) -> np.ndarray:
    """Unit-variance noise confined to ``band_hz`` by zeroing FFT bins.

    ``exponent`` shapes the in-band power spectrum as 1/f**exponent (0 is
    white, 1 pink, 2 brown), held flat below 20 Hz.
    """
    lo, hi = band_hz
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    if exponent:
        spec *= np.maximum(f, 20.0) ** (-exponent / 2)
    spec[(f < lo) | (f > hi)] = 0.0
    noise = np.fft.irfft(spec, n)
    noise -= noise.mean()
    std = noise.std()
    return noise / std if std > 0 else noise


def add_colored_noise(buf: AudioBuffer, band_hz, snr_db: float, seed: int) -> AudioBuffer:
    """Mix band-limited noise into ``buf`` at ``snr_db`` (signal variance / noise variance).

    ``snr_db=inf`` disables the noise. The result is rescaled to peak 1 only
    if the mix would clip.
    """
    lo, hi = float(band_hz[0]), float(band_hz[1])
    nyq = buf.sample_rate_hz / 2
    if not (0 <= lo < hi <= nyq):
        raise InvalidBand(f"band {band_hz} must satisfy 0 <= low < high <= {nyq}")
    if math.isinf(snr_db) and snr_db > 0:
        return buf
    x = buf.samples
    p_sig = float(x.var())
    if p_sig == 0.0:
        return buf
    noise = band_limited_noise(x.size, buf.sample_rate_hz, (lo, hi), np.random.default_rng(seed))
    y = x + noise * math.sqrt(p_sig / 10.0 ** (snr_db / 10.0))
    peak = float(np.max(np.abs(y)))
    if peak > 1.0:
        y = y / peak
    return AudioBuffer(y, buf.sample_rate_hz)


# --- synthetic corpus ---------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_speakers: int = 19
    n_utterances: int = 5
    clip_seconds: float = 3.0
    sample_rate_hz: int = 16000
    cutoff_hz: float = 2000.0
    lf_noise_band: tuple = (0.0, 2000.0)
    lf_noise_snr_db: float = 10.0
    lf_noise_exponent: float = 2.0  # power spectrum slope 1/f**exponent
    lf_shelf_db: float = 10.0
    lf_shelf_hz: float = 600.0
    rt60_s: float = 0.3
    drr_db: float = 0.0  # direct-to-reverberant energy ratio
    sensor_snr_db: float = 30.0
    gain: float = 0.25

    def __post_init__(self):
        if not self.cutoff_hz < self.sample_rate_hz / 2:
            raise ValueError("cutoff must be below Nyquist")
        if not self.clip_seconds > 1:
            raise ValueError("clips must be longer than 1 s for frame analysis")
        object.__setattr__(self, "lf_noise_band", tuple(float(b) for b in self.lf_noise_band))

    def to_dict(self):
        return asdict(self)


# (F1, F2, F3) in Hz for a handful of vowels
_VOWELS = np.array([
    [730, 1090, 2440], [270, 2290, 3010], [530, 1840, 2480], [660, 1720, 2410],
    [570, 840, 2410], [300, 870, 2240], [640, 1190, 2390], [490, 1350, 1690],
])
_LABEL_CODE = {Label.ACOUSTIC: 0, Label.LASER: 1}


def _rng(*keys):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _resonator(freq, bw, sr):
    r = math.exp(-math.pi * bw / sr)
    a = [1.0, -2.0 * r * math.cos(2 * math.pi * freq / sr), r * r]
    return [sum(a)], a  # unity gain at DC


def dry_utterance(cfg: SynthConfig, speaker: int, utterance: int) -> np.ndarray:
    """Speech-like surrogate: formant-filtered glottal pulse trains in syllables.

    The syllable layout depends on the utterance only (same "text" for every
    speaker); pitch, formant scaling and timing jitter depend on the speaker.
    """
    sr = cfg.sample_rate_hz
    n = int(round(cfg.clip_seconds * sr))
    text = _rng(cfg.seed, 0, utterance)
    voice = _rng(cfg.seed, 1, speaker)
    take = _rng(cfg.seed, 2, speaker, utterance)

    f0 = voice.uniform(90.0, 250.0)
    formant_scale = voice.uniform(0.9, 1.15)
    tilt = voice.uniform(0.90, 0.97)

    # pitch contour with declination and slow vibrato; pulses on phase wraps
    t = np.arange(n) / sr
    contour = f0 * (1.1 - 0.2 * t / cfg.clip_seconds) * (1 + 0.02 * np.sin(2 * np.pi * 5.0 * t))
    phase = np.cumsum(contour) / sr
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    # two-pole glottal tilt followed by a lip-radiation differencer (no DC)
    glottal = lfilter([1.0, -1.0], [1.0, -2 * tilt, tilt * tilt], pulses)

    fric = sosfilt(butter(4, [2500, 7000], btype="band", fs=sr, output="sos"),
                   take.standard_normal(n))

    n_syl = int(text.integers(6, 10))
    usable = cfg.clip_seconds - 0.4
    bounds = np.sort(text.uniform(0, 1, n_syl - 1))
    edges = 0.2 + usable * np.concatenate([[0.0], bounds, [1.0]])
    vowel_ids = text.integers(0, len(_VOWELS), n_syl)
    has_fric = text.uniform(size=n_syl) < 0.4
    out = np.zeros(n)
    for k in range(n_syl):
        jitter = take.uniform(-0.02, 0.02)
        start = int((edges[k] + jitter + 0.01) * sr)
        stop = int((edges[k + 1] + jitter - 0.03) * sr)
        start, stop = max(start, 0), min(stop, n)
        if stop - start < int(0.05 * sr):
            continue
        seg = glottal[start:stop]
        for f, bw in zip(_VOWELS[vowel_ids[k]] * formant_scale, (80.0, 100.0, 140.0)):
            b, a = _resonator(f, bw, sr)
            seg = lfilter(b, a, seg)
        m = stop - start
        env = np.sin(np.pi * np.arange(m) / m) ** 0.7 * take.uniform(0.6, 1.0)
        seg = seg / (np.max(np.abs(seg)) + 1e-12) * env
        if has_fric[k]:
            nf = min(int(0.08 * sr), m // 3)
            burst = fric[start:start + nf] / (np.max(np.abs(fric[start:start + nf])) + 1e-12)
            seg[:nf] += 0.3 * burst * np.hanning(nf)
        out[start:stop] += seg
    return out / (np.max(np.abs(out)) + 1e-12)


def room_impulse_response(cfg: SynthConfig, rng) -> np.ndarray:
    sr = cfg.sample_rate_hz
    n = int(cfg.rt60_s * sr)
    t = np.arange(n) / sr
    # 60 dB amplitude decay over rt60: exp(-6.91 t / rt60)
    tail = rng.standard_normal(n) * np.exp(-6.91 * t / cfg.rt60_s)
    tail *= math.sqrt(10 ** (-cfg.drr_db / 10) / np.sum(tail ** 2))
    delay = int(0.005 * sr)
    h = np.zeros(n + delay)
    h[0] = 1.0
    h[delay:] += tail
    return h


def acoustic_channel(dry, cfg: SynthConfig, rng) -> np.ndarray:
    y = fftconvolve(dry, room_impulse_response(cfg, rng))[:dry.size]
    noise = rng.standard_normal(y.size)
    return y + noise * math.sqrt(y.var() / 10 ** (cfg.sensor_snr_db / 10))


def laser_channel(dry, cfg: SynthConfig, seed_keys) -> np.ndarray:
    sos = butter(6, cfg.cutoff_hz, btype="low", fs=cfg.sample_rate_hz, output="sos")
    x = sosfilt(sos, dry)
    if cfg.lf_shelf_db:
        # first-order low shelf: gain g at DC, unity well above the corner
        g = 10 ** (cfg.lf_shelf_db / 20)
        w0 = 2 * math.pi * cfg.lf_shelf_hz
        b, a = bilinear([1.0, g * w0], [1.0, w0], fs=cfg.sample_rate_hz)
        x = lfilter(b, a, x)
    # mixed directly rather than via add_colored_noise: the caller sets the final peak
    noise = band_limited_noise(x.size, cfg.sample_rate_hz, cfg.lf_noise_band, _rng(*seed_keys),
                               cfg.lf_noise_exponent)
    return x + noise * math.sqrt(x.var() / 10 ** (cfg.lf_noise_snr_db / 10))


def synth_clip(cfg: SynthConfig, speaker: int, utterance: int, label) -> AudioBuffer:
    label = Label(label)
    dry = dry_utterance(cfg, speaker, utterance)
    keys = (cfg.seed, 3, speaker, utterance, _LABEL_CODE[label])
    if label is Label.ACOUSTIC:
        wet = acoustic_channel(dry, cfg, _rng(*keys))
    else:
        wet = laser_channel(dry, cfg, keys)
    # fixed recording gain; rescale only if the clip would clip
    wet = wet * cfg.gain
    peak = float(np.max(np.abs(wet)))
    if peak > 0.99:
        wet *= 0.99 / peak
    return AudioBuffer(wet, cfg.sample_rate_hz)


def clip_id_for(speaker: int, utterance: int, label) -> str:
    return f"{Label(label).value}_s{speaker:02d}_u{utterance}"


def _render(job):
    cfg, speaker, utterance, label, path = job
    write_wav(path, synth_clip(cfg, speaker, utterance, label))


def synth_corpus(cfg: SynthConfig, out_dir, jobs: int = 1) -> list[ClipRecord]:
    """Render the corpus as 16-bit WAVs plus ``manifest.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    records, work = [], []
    try:
        for label in Label:
            (out_dir / label.value).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create corpus directory {out_dir}: {exc}") from exc
    for speaker in range(1, cfg.n_speakers + 1):
        for utterance in range(1, cfg.n_utterances + 1):
            for label in Label:
                cid = clip_id_for(speaker, utterance, label)
                path = out_dir / label.value / f"{cid}.wav"
                records.append(ClipRecord(cid, speaker, utterance, label, path))
                work.append((cfg, speaker, utterance, label, path))
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(_render, work))
        else:
            for job in work:
                _render(job)
        write_manifest(records, out_dir / "manifest.csv")
    except OSError as exc:
        raise IoError(f"writing corpus under {out_dir} failed: {exc}") from exc
    return records


def splice(first: AudioBuffer, second: AudioBuffer, boundary_s: float) -> AudioBuffer:
    """``first`` truncated at ``boundary_s`` followed by all of ``second``."""
    if first.sample_rate_hz != second.sample_rate_hz:
        raise ValueError("cannot splice clips with different sample rates")
    head = first.samples[:int(round(boundary_s * first.sample_rate_hz))]
    return AudioBuffer(np.concatenate([head, second.samples]), first.sample_rate_hz)
