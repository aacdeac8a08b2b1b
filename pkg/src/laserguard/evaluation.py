"""Evaluation protocols, frame-level splice scanning and the noise sweep."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import CANONICAL_RATE, AudioBuffer, load_clip
from .dataset import Label, Protocol, add_colored_noise, make_partition
from .dwt import WaveletSpec
from .errors import ClipTooShort, IoError, LeakageError
from .features import CepstralConfig, Scheme, featurize
from .svm import (
    ACOUSTIC,
    LASER,
    SvmConfig,
    SvmModel,
    decision_function,
    labels_from_scores,
    train,
)

REPORT_FIELDS = ["protocol", "scheme", "accuracy", "tp", "fp", "tn", "fn", "seed", "config_hash"]
FRAME_FIELDS = ["frame_index", "start_s", "label_pred", "composition"]


@dataclass(frozen=True)
class PipelineConfig:
    wavelet: WaveletSpec = WaveletSpec()
    cepstral: CepstralConfig = CepstralConfig()
    svm: SvmConfig = SvmConfig()
    sample_rate_hz: int = CANONICAL_RATE

    def feature_config(self) -> dict:
        return {"wavelet": self.wavelet.to_dict(), "cepstral": self.cepstral.to_dict(),
                "sample_rate_hz": self.sample_rate_hz}

    def to_dict(self) -> dict:
        return {**self.feature_config(), "svm": self.svm.to_dict()}

    @classmethod
    def from_feature_config(cls, d: dict, svm_cfg: SvmConfig = SvmConfig()):
        return cls(WaveletSpec(**d["wavelet"]), CepstralConfig(**d["cepstral"]), svm_cfg,
                   int(d.get("sample_rate_hz", CANONICAL_RATE)))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --- featurization ---------------------------------------------------------------

def _featurize_path(job):
    path, scheme, cfg = job
    buf = load_clip(path, cfg.sample_rate_hz)
    return featurize(buf, scheme, cfg.wavelet, cfg.cepstral).values


def featurize_records(records, scheme, cfg: PipelineConfig = PipelineConfig(), jobs: int = 1) -> dict:
    """Feature vectors keyed by clip_id; work order and results follow the manifest."""
    scheme = Scheme(scheme)
    work = [(r.path, scheme, cfg) for r in records]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_featurize_path, work, chunksize=4))
    else:
        rows = [_featurize_path(w) for w in work]
    return {r.clip_id: v for r, v in zip(records, rows)}


# --- experiments -----------------------------------------------------------------

@dataclass
class EvalReport:
    protocol: str
    scheme: str
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    seed: int
    config: dict
    config_hash: str
    verdicts: list = field(default_factory=list)  # (clip_id, true_y, pred_y, score)
    train_ids: tuple = ()
    snr_db: float = float("inf")

    @property
    def n_test(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def row(self) -> dict:
        return {"protocol": self.protocol, "scheme": self.scheme, "accuracy": repr(self.accuracy),
                "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "seed": self.seed, "config_hash": self.config_hash}


def _confusion(y_true, y_pred):
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == -1) & (y_pred == 1)))
    tn = int(np.sum((y_true == -1) & (y_pred == -1)))
    fn = int(np.sum((y_true == 1) & (y_pred == -1)))
    return tp, fp, tn, fn


def fit_guarded(features: dict, labels: dict, fit_ids, allowed_ids, scheme, cfg: PipelineConfig):
    """Train on ``fit_ids``, refusing any clip outside ``allowed_ids``."""
    stray = set(fit_ids) - set(allowed_ids)
    if stray:
        raise LeakageError(f"{len(stray)} non-training clips reached the fit: {sorted(stray)[:5]}")
    X = np.stack([features[i] for i in fit_ids])
    y = np.array([labels[i] for i in fit_ids])
    return train(X, y, cfg.svm, scheme=Scheme(scheme).value,
                 feature_config=cfg.feature_config())


def score_clips(model, features: dict, labels: dict, test_ids):
    X = np.stack([features[i] for i in test_ids])
    y = np.array([labels[i] for i in test_ids])
    scores = decision_function(model, X)
    pred = labels_from_scores(scores)
    verdicts = [(cid, int(t), int(p), float(s)) for cid, t, p, s in zip(test_ids, y, pred, scores)]
    return _confusion(y, pred), verdicts


def run_experiment(records, protocol, scheme, cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
                   features: dict | None = None, resubstitution: bool = False,
                   jobs: int = 1) -> EvalReport:
    """Partition, fit standardizer + SVM on train clips only, score the test clips.

    ``resubstitution`` is a diagnostic mode that scores the training clips.
    """
    protocol, scheme = Protocol(protocol), Scheme(scheme)
    part = make_partition(records, protocol, seed)
    if set(part.train) & set(part.test):
        raise LeakageError("partition puts the same clip in train and test")
    if features is None:
        features = featurize_records(records, scheme, cfg, jobs)
    labels = {r.clip_id: r.label.y for r in records}
    model = fit_guarded(features, labels, part.train, part.train, scheme, cfg)
    test_ids = part.train if resubstitution else part.test
    (tp, fp, tn, fn), verdicts = score_clips(model, features, labels, test_ids)
    config = {**cfg.to_dict(), "protocol": protocol.value, "scheme": scheme.value, "seed": seed,
              "resubstitution": resubstitution}
    return EvalReport(protocol.value, scheme.value, (tp + tn) / (tp + tn + fp + fn),
                      tp, fp, tn, fn, seed, config, config_hash(config), verdicts, part.train)


def robustness_sweep(records, snr_list_db, band_hz=(0.0, 2000.0), scheme=Scheme.DWT,
                     cfg: PipelineConfig = PipelineConfig(), protocol=Protocol.SI_TD,
                     seed: int = 0, noise_seed: int = 0, features: dict | None = None) -> list:
    """Re-score the test clips of one partition after adding colored noise.

    The model is fitted once on clean training clips; only test clips are
    perturbed. One report per SNR, in the order given.
    """
    protocol, scheme = Protocol(protocol), Scheme(scheme)
    part = make_partition(records, protocol, seed)
    if features is None:
        features = featurize_records(records, scheme, cfg)
    labels = {r.clip_id: r.label.y for r in records}
    by_id = {r.clip_id: r for r in records}
    model = fit_guarded(features, labels, part.train, part.train, scheme, cfg)
    reports = []
    for snr in snr_list_db:
        noisy = {}
        for k, cid in enumerate(part.test):
            buf = load_clip(by_id[cid].path, cfg.sample_rate_hz)
            clip_seed = int(np.random.SeedSequence([noise_seed, k]).generate_state(1)[0])
            buf = add_colored_noise(buf, band_hz, snr, clip_seed)
            noisy[cid] = featurize(buf, scheme, cfg.wavelet, cfg.cepstral).values
        (tp, fp, tn, fn), verdicts = score_clips(model, noisy, labels, part.test)
        config = {**cfg.to_dict(), "protocol": protocol.value, "scheme": scheme.value,
                  "seed": seed, "resubstitution": False}
        if snr != float("inf"):
            config.update(noise_band_hz=list(band_hz), noise_snr_db=snr, noise_seed=noise_seed)
        reports.append(EvalReport(protocol.value, scheme.value, (tp + tn) / len(part.test),
                                  tp, fp, tn, fn, seed, config, config_hash(config), verdicts,
                                  part.train, snr))
    return reports


# --- frame scan --------------------------------------------------------------------

PURE_ACOUSTIC = "pure_acoustic"
PURE_LASER = "pure_laser"
BORDERING = "bordering"


@dataclass(frozen=True)
class FrameVerdict:
    frame_index: int
    start_s: float
    end_s: float
    label_pred: int
    score: float
    composition: str

    @property
    def label_true(self) -> int:
        # any laser-induced content makes the frame an attack frame
        return ACOUSTIC if self.composition == PURE_ACOUSTIC else LASER

    @property
    def correct(self) -> bool:
        return self.label_pred == self.label_true


@dataclass
class FrameScanResult:
    verdicts: list

    def _acc(self, sel):
        hits = [v.correct for v in self.verdicts if sel(v)]
        return sum(hits) / len(hits) if hits else float("nan")

    @property
    def accuracy(self):
        return self._acc(lambda v: True)

    @property
    def accuracy_bordering(self):
        return self._acc(lambda v: v.composition == BORDERING)

    @property
    def accuracy_non_bordering(self):
        return self._acc(lambda v: v.composition != BORDERING)


def frame_composition(start_s, end_s, boundary_s, first=Label.ACOUSTIC) -> str:
    """Ground truth for a frame of a clip that switches source at ``boundary_s``."""
    before = PURE_ACOUSTIC if Label(first) is Label.ACOUSTIC else PURE_LASER
    after = PURE_LASER if before == PURE_ACOUSTIC else PURE_ACOUSTIC
    if end_s <= boundary_s:
        return before
    if start_s >= boundary_s:
        return after
    return BORDERING


def frame_offsets(n_samples: int, sr: int, t_f: float, t_h: float):
    frame_len = int(round(t_f * sr))
    hop = int(round(t_h * sr))
    if n_samples < frame_len:
        raise ClipTooShort(f"{n_samples / sr:.3f} s clip is shorter than a {t_f} s frame")
    count = (n_samples - frame_len) // hop + 1
    return frame_len, hop, count


def frame_scan(model: SvmModel, composite: AudioBuffer, boundary_s: float,
               t_f: float = 1.0, t_h: float = 0.5, first=Label.ACOUSTIC) -> FrameScanResult:
    """Slide a ``t_f`` window in ``t_h`` steps and classify every frame."""
    sr = composite.sample_rate_hz
    if not 0 <= boundary_s <= composite.duration_s:
        raise ValueError(f"boundary {boundary_s} s lies outside the {composite.duration_s:.3f} s clip")
    frame_len, hop, count = frame_offsets(len(composite), sr, t_f, t_h)
    cfg = PipelineConfig.from_feature_config(model.feature_config) if model.feature_config \
        else PipelineConfig()
    rows = []
    for k in range(count):
        seg = AudioBuffer(composite.samples[k * hop:k * hop + frame_len], sr)
        rows.append(featurize(seg, model.scheme, cfg.wavelet, cfg.cepstral).values)
    scores = decision_function(model, np.stack(rows))
    preds = labels_from_scores(scores)
    verdicts = []
    for k in range(count):
        start = k * hop / sr
        end = start + frame_len / sr
        verdicts.append(FrameVerdict(k, start, end, int(preds[k]), float(scores[k]),
                                     frame_composition(start, end, boundary_s, first)))
    return FrameScanResult(verdicts)


# --- reports -----------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    if not path.parent.is_dir():
        raise IoError(f"output directory does not exist: {path.parent} (writing {path.name})")
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["accuracy"] = float(row["accuracy"])
        for k in ("tp", "fp", "tn", "fn", "seed"):
            row[k] = int(row[k])
    return rows


def accuracy_grid(reports):
    """Mean accuracy per (scheme, protocol); repeated seeds are averaged."""
    cells = {}
    for r in reports:
        cells.setdefault((r.scheme, r.protocol), []).append(r.accuracy)
    schemes = list(dict.fromkeys(r.scheme for r in reports))
    protocols = list(dict.fromkeys(r.protocol for r in reports))
    grid = {s: {p: float(np.mean(cells[(s, p)])) for p in protocols if (s, p) in cells}
            for s in schemes}
    return schemes, protocols, grid


def format_table(reports) -> str:
    schemes, protocols, grid = accuracy_grid(reports)
    header = ["method"] + [p.upper() for p in protocols]
    lines = ["  ".join(f"{h:>10}" for h in header)]
    for s in schemes:
        cells = [f"{s.upper()} + SVM"] + [
            f"{grid[s][p]:.4f}" if p in grid[s] else "-" for p in protocols]
        lines.append("  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines) + "\n"


def write_report(reports, path) -> list[Path]:
    """Write ``<path>.csv``, ``<path>.jsonl`` (full config) and ``<path>.txt``."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    base = Path(path)
    if base.suffix in (".csv", ".txt", ".jsonl"):
        base = base.with_suffix("")
    csv_path = base.with_name(base.name + ".csv")
    jsonl_path = base.with_name(base.name + ".jsonl")
    txt_path = base.with_name(base.name + ".txt")
    jsonl = "".join(json.dumps({**r.row(), "accuracy": r.accuracy, "snr_db": repr(r.snr_db),
                                "config": r.config,
                                "verdicts": [list(v) for v in r.verdicts]},
                               sort_keys=True) + "\n" for r in reports)
    _atomic_write(csv_path, reports_csv(reports))
    _atomic_write(jsonl_path, jsonl)
    _atomic_write(txt_path, format_table(reports))
    return [csv_path, jsonl_path, txt_path]


def frame_scan_csv(result: FrameScanResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_FIELDS)
    for v in result.verdicts:
        w.writerow([v.frame_index, f"{v.start_s:.3f}", v.label_pred, v.composition])
    return buf.getvalue()


def write_frame_scan(result: FrameScanResult, path):
    _atomic_write(Path(path), frame_scan_csv(result))


SWEEP_FIELDS = ["snr_db"] + REPORT_FIELDS


def sweep_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({"snr_db": repr(float(r.snr_db)), **r.row()})
    return buf.getvalue()


def write_sweep(reports, path):
    _atomic_write(Path(path), sweep_csv(reports))
