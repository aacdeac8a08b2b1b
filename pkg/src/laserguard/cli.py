"""Command-line entry point: ``laserguard <command> [flags]``.

Exit codes: 0 benign / success, 1 error, 2 laser-induced audio detected.
Settings resolve as command-line flags > ``--config`` INI file > defaults.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import os
import sys
from pathlib import Path

import numpy as np

from .audio_io import load_clip
from .dataset import Label, Protocol, SynthConfig, load_manifest, make_partition, synth_corpus
from .dwt import Boundary, Family, WaveletSpec
from .errors import IoError, LaserGuardError, MalformedRow
from .evaluation import (
    PipelineConfig,
    _atomic_write,
    config_hash,
    featurize_records,
    fit_guarded,
    format_table,
    frame_scan,
    frame_scan_csv,
    robustness_sweep,
    run_experiment,
    write_frame_scan,
    write_report,
    write_sweep,
)
from .features import CepstralConfig, Scheme, featurize, log_spectrum
from .svm import LABEL_MAP, SvmConfig, load_model, predict, save_model

DATA_DIR_ENV = "LASERGUARD_DATA_DIR"
EXIT_OK, EXIT_ERROR, EXIT_LASER = 0, 1, 2
SD_REPEATS = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which would read as "laser detected"
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --- configuration ---------------------------------------------------------------

def _coerce(default, text: str):
    if isinstance(default, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        return tuple(float(t) for t in text.split(","))
    if isinstance(default, (Family, Boundary)):
        return type(default)(text.strip())
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if default is None:  # only SvmConfig.gamma: number or "scale"
        return None if text.strip().lower() in ("", "scale", "none") else float(text)
    return text.strip()


def _section(parser: configparser.ConfigParser, name: str, cls):
    if not parser.has_section(name):
        return {}
    fields = {f.name: f.default for f in dataclasses.fields(cls)}
    out = {}
    for key, text in parser.items(name):
        if key not in fields:
            raise ValueError(f"unknown key {key!r} in config section [{name}]")
        out[key] = _coerce(fields[key], text)
    return out


def read_config_file(path) -> dict:
    """Parse the INI file into per-section override dicts."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep "C" upper case
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ValueError(f"bad config file {path}: {exc}") from exc
    run = dict(parser.items("run")) if parser.has_section("run") else {}
    return {
        "wavelet": _section(parser, "wavelet", WaveletSpec),
        "cepstral": _section(parser, "cepstral", CepstralConfig),
        "svm": _section(parser, "svm", SvmConfig),
        "synth": _section(parser, "synth", SynthConfig),
        "run": {k: int(v) for k, v in run.items() if k in ("seed", "jobs")},
    }


@dataclasses.dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig
    synth: SynthConfig
    seed: int
    jobs: int
    data_dir: Path

    def to_dict(self) -> dict:
        # paths stay out of the hash so relocated runs stay comparable
        return {**self.pipeline.to_dict(), "synth": self.synth.to_dict(), "seed": self.seed}

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


def resolve_config(args) -> RunConfig:
    file_cfg = read_config_file(args.config) if args.config else {
        "wavelet": {}, "cepstral": {}, "svm": {}, "synth": {}, "run": {}}
    wavelet = dict(file_cfg["wavelet"])
    for key, flag in (("family", args.family), ("level", args.level), ("boundary", args.boundary)):
        if flag is not None:
            wavelet[key] = flag
    svm_over = dict(file_cfg["svm"])
    if args.C is not None:
        svm_over["C"] = args.C
    if args.gamma is not None:
        svm_over["gamma"] = None if args.gamma == "scale" else float(args.gamma)
    if wavelet.get("level") is not None and int(wavelet["level"]) < 1:
        raise ValueError(f"wavelet level must be >= 1, got {wavelet['level']}")
    seed = args.seed if args.seed is not None else file_cfg["run"].get("seed", 0)
    jobs = args.jobs if args.jobs is not None else file_cfg["run"].get("jobs", 1)
    if jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {jobs}")
    synth_over = dict(file_cfg["synth"])
    synth_over["seed"] = seed
    pipeline = PipelineConfig(
        WaveletSpec(**{k: (Family(v) if k == "family" else Boundary(v) if k == "boundary" else v)
                       for k, v in wavelet.items()}),
        CepstralConfig(**file_cfg["cepstral"]),
        SvmConfig(**svm_over))
    data_dir = Path(args.data_dir or os.environ.get(DATA_DIR_ENV) or "data")
    return RunConfig(pipeline, SynthConfig(**synth_over), seed, jobs, data_dir)


# --- helpers ---------------------------------------------------------------------

def _say(*parts):
    print(*parts, flush=True)


def _note(*parts):
    print(*parts, file=sys.stderr, flush=True)


def _manifest(args, rc: RunConfig) -> Path:
    return Path(args.manifest) if args.manifest else rc.data_dir / "corpus" / "manifest.csv"


def _csv_list(text: str, kind):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError(f"empty list: {text!r}")
    return [kind(t) for t in items]


def _snr(text: str) -> float:
    t = text.strip().lower()
    return float("inf") if t in ("inf", "clean", "none") else float(t)


def features_csv(features: dict, scheme) -> str:
    dims = {v.size for v in features.values()}
    if len(dims) != 1:
        raise ValueError("feature vectors have inconsistent dimensions")
    dim = dims.pop()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["clip_id", "scheme", "dim"] + [f"v{i}" for i in range(dim)])
    for cid, v in features.items():
        w.writerow([cid, Scheme(scheme).value, dim] + [repr(float(x)) for x in v])
    return buf.getvalue()


def read_features_csv(path) -> tuple[str, dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read feature file {path}: {exc}") from exc
    if not rows or rows[0][:3] != ["clip_id", "scheme", "dim"]:
        raise MalformedRow(f"{path}: missing clip_id,scheme,dim header")
    schemes, out = set(), {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            dim = int(row[2])
            vals = np.array([float(x) for x in row[3:]])
        except (IndexError, ValueError) as exc:
            raise MalformedRow(f"{path}:{lineno}: {exc}") from exc
        if vals.size != dim:
            raise MalformedRow(f"{path}:{lineno}: expected {dim} values, found {vals.size}")
        schemes.add(row[1])
        out[row[0]] = vals
    if len(schemes) != 1:
        raise MalformedRow(f"{path}: expected exactly one scheme, found {sorted(schemes)}")
    return schemes.pop(), out


# --- commands --------------------------------------------------------------------

def cmd_synth(args, rc: RunConfig) -> int:
    out = Path(args.out) if args.out else rc.data_dir / "corpus"
    records = synth_corpus(rc.synth, out, jobs=rc.jobs)
    _say(f"wrote {len(records)} clips and {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_featurize(args, rc: RunConfig) -> int:
    records = load_manifest(_manifest(args, rc))
    feats = featurize_records(records, args.scheme, rc.pipeline, rc.jobs)
    _atomic_write(Path(args.out), features_csv(feats, args.scheme))
    _say(f"wrote {len(feats)} {args.scheme} vectors to {args.out}")
    return EXIT_OK


def cmd_train(args, rc: RunConfig) -> int:
    records = load_manifest(_manifest(args, rc))
    scheme = Scheme(args.scheme)
    if args.features:
        file_scheme, feats = read_features_csv(args.features)
        if file_scheme != scheme.value:
            raise ValueError(f"{args.features} holds {file_scheme} features, not {scheme.value}")
        missing = [r.clip_id for r in records if r.clip_id not in feats]
        if missing:
            raise MalformedRow(f"{len(missing)} manifest clips have no feature row, e.g. {missing[0]}")
    else:
        feats = featurize_records(records, scheme, rc.pipeline, rc.jobs)
    if args.protocol == "all":
        train_ids = tuple(r.clip_id for r in records)
    else:
        train_ids = make_partition(records, args.protocol, rc.seed).train
    labels = {r.clip_id: r.label.y for r in records}
    model = fit_guarded(feats, labels, train_ids, train_ids, scheme, rc.pipeline)
    save_model(model, args.model_out)
    _say(f"trained on {len(train_ids)} clips, {len(model.dual_coef)} support vectors "
         f"-> {args.model_out}")
    return EXIT_OK


def cmd_eval(args, rc: RunConfig) -> int:
    records = load_manifest(_manifest(args, rc))
    schemes = _csv_list(args.scheme, Scheme)
    protocols = _csv_list(args.protocol, Protocol)
    reports = []
    for scheme in schemes:
        feats = featurize_records(records, scheme, rc.pipeline, rc.jobs)
        for protocol in protocols:
            repeats = args.repeats if protocol is Protocol.SD_TD else 1
            for k in range(repeats):
                reports.append(run_experiment(records, protocol, scheme, rc.pipeline,
                                              seed=rc.seed + k, features=feats))
    for r in reports:
        _say(f"{r.scheme}\t{r.protocol}\tseed={r.seed}\taccuracy={r.accuracy:.4f}")
    sys.stdout.write(format_table(reports))
    if args.report_out:
        for p in write_report(reports, args.report_out):
            _note(f"wrote {p}")
    return EXIT_OK


def cmd_detect(args, rc: RunConfig) -> int:
    model = load_model(args.model)
    cfg = PipelineConfig.from_feature_config(model.feature_config) if model.feature_config \
        else rc.pipeline
    any_laser = False
    for path in args.wav:
        buf = load_clip(path, cfg.sample_rate_hz)
        label, score = predict(model, featurize(buf, model.scheme, cfg.wavelet, cfg.cepstral).values)
        any_laser |= label == 1
        _say(f"{path}\t{LABEL_MAP[str(label)]}\t{score:.6f}")
    return EXIT_LASER if any_laser else EXIT_OK


def cmd_frame_scan(args, rc: RunConfig) -> int:
    model = load_model(args.model)
    buf = load_clip(args.wav)
    result = frame_scan(model, buf, args.boundary_s, args.frame_s, args.hop_s, Label(args.first))
    if args.out:
        write_frame_scan(result, args.out)
    else:
        sys.stdout.write(frame_scan_csv(result))
    _note(f"frames={len(result.verdicts)} accuracy={result.accuracy:.4f} "
          f"bordering={result.accuracy_bordering:.4f} "
          f"non_bordering={result.accuracy_non_bordering:.4f}")
    return EXIT_OK


def cmd_spectrum(args, rc: RunConfig) -> int:
    freqs, db = log_spectrum(load_clip(args.wav), nperseg=args.nperseg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz", "mag_db"])
    for f, m in zip(freqs, db):
        w.writerow([repr(float(f)), repr(float(m))])
    if args.out:
        _atomic_write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_robustness(args, rc: RunConfig) -> int:
    records = load_manifest(_manifest(args, rc))
    snrs = _csv_list(args.snr_list, _snr)
    band = tuple(_csv_list(args.band, float))
    if len(band) != 2:
        raise ValueError(f"--band needs two comma-separated frequencies, got {args.band!r}")
    scheme = Scheme(args.scheme)
    feats = featurize_records(records, scheme, rc.pipeline, rc.jobs)
    reports = robustness_sweep(records, snrs, band, scheme, rc.pipeline, Protocol(args.protocol),
                               seed=rc.seed, noise_seed=rc.seed, features=feats)
    for r in reports:
        _say(f"snr_db={r.snr_db}\taccuracy={r.accuracy:.4f}")
    if args.out:
        write_sweep(reports, args.out)
        _note(f"wrote {args.out}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    g.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    g.add_argument("--config", default=None, help="INI file with [wavelet] [cepstral] [svm] [synth] [run]")
    g.add_argument("--data-dir", default=None, help=f"default data directory (env {DATA_DIR_ENV})")
    g.add_argument("--family", choices=[f.value for f in Family], default=None)
    g.add_argument("--level", type=int, default=None)
    g.add_argument("--boundary", choices=[b.value for b in Boundary], default=None)
    g.add_argument("-C", dest="C", type=float, default=None, help="SVM box constraint")
    g.add_argument("--gamma", default=None, help="RBF gamma or 'scale'")

    parser = _Parser(prog="laserguard", description="Detect laser-injected audio from DWT moment features.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    schemes = [s.value for s in Scheme]
    protocols = [p.value for p in Protocol]

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    p.add_argument("--out", help="corpus directory (default <data-dir>/corpus)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", parents=[common], help="write per-clip feature vectors")
    p.add_argument("--manifest")
    p.add_argument("--scheme", choices=schemes, default="dwt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit an SVM and save the model")
    p.add_argument("--manifest")
    p.add_argument("--features", help="feature CSV from 'featurize' (skips feature extraction)")
    p.add_argument("--scheme", choices=schemes, default="dwt")
    p.add_argument("--protocol", choices=protocols + ["all"], default="all",
                   help="train on that protocol's training split, or on every clip")
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="accuracy grid over schemes and protocols")
    p.add_argument("--manifest")
    p.add_argument("--scheme", default="dwt", help="comma list of " + ",".join(schemes))
    p.add_argument("--protocol", default="sd_td,si_td,si_ti", help="comma list of " + ",".join(protocols))
    p.add_argument("--repeats", type=int, default=SD_REPEATS, help="seeds averaged for sd_td")
    p.add_argument("--report-out", help="report base path; writes .csv, .jsonl and .txt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", parents=[common], help="classify WAV files (exit 2 if any is laser)")
    p.add_argument("--model", required=True)
    p.add_argument("wav", nargs="+")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("frame-scan", parents=[common], help="classify sliding frames of a spliced clip")
    p.add_argument("--model", required=True)
    p.add_argument("wav")
    p.add_argument("--boundary-s", type=float, required=True)
    p.add_argument("--frame-s", type=float, default=1.0)
    p.add_argument("--hop-s", type=float, default=0.5)
    p.add_argument("--first", choices=[lab.value for lab in Label], default="acoustic",
                   help="source before the boundary")
    p.add_argument("--out")
    p.set_defaults(func=cmd_frame_scan)

    p = sub.add_parser("spectrum", parents=[common], help="Welch log-magnitude spectrum as CSV")
    p.add_argument("wav")
    p.add_argument("--nperseg", type=int, default=512)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("robustness", parents=[common], help="accuracy under added colored noise")
    p.add_argument("--manifest")
    p.add_argument("--snr-list", default="inf,30,20,10,0")
    p.add_argument("--band", default="0,2000", help="noise band lo,hi in Hz")
    p.add_argument("--scheme", choices=schemes, default="dwt")
    p.add_argument("--protocol", choices=protocols, default="si_td")
    p.add_argument("--out")
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"laserguard: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        rc = resolve_config(args)
        if getattr(args, "repeats", 1) < 1:
            raise ValueError("--repeats must be >= 1")
        _note(f"config_hash={rc.hash}")
        return args.func(args, rc)
    except (LaserGuardError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"laserguard: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
