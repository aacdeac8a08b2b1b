"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or see the
"acceptance criteria" section at the end of a normal pytest run.
"""

import os
import time
from fractions import Fraction

import numpy as np
import pytest

from acceptance_log import record
from laserguard.audio_io import load_wav
from laserguard.cli import main as cli_main
from laserguard.dataset import Protocol, SynthConfig, load_manifest, make_partition, splice, synth_corpus
from laserguard.dwt import Boundary, Family, WaveletSpec, dwt_multilevel, idwt_array
from laserguard.evaluation import (
    BORDERING,
    PURE_ACOUSTIC,
    PURE_LASER,
    PipelineConfig,
    accuracy_grid,
    featurize_records,
    fit_guarded,
    frame_scan,
    robustness_sweep,
    run_experiment,
)
from laserguard.stats import moments
from laserguard.svm import SvmConfig, decision_function, labels_from_scores, train
from oracles import moments_direct, qp_dual_projected_gradient, rbf

CFG = PipelineConfig()
REAL_MANIFEST_ENV = "LASERGUARD_REAL_MANIFEST"

# reference grid for the real recordings: scheme -> (SD_TD, SI_TD, SI_TI)
REFERENCE_GRID = {
    "dwt": (0.98, 1.0, 1.0),
    "cqcc": (0.91, 1.0, 1.0),
    "lfcc": (0.98, 1.0, 1.0),
    "mfcc": (0.96, 0.96, 0.95),
}


def test_reference_grid_on_real_recordings():
    manifest = os.environ.get(REAL_MANIFEST_ENV)
    name = "reference accuracy grid on the real recordings (+/-0.04)"
    if not manifest:
        record(name, None, f"dataset not available (set {REAL_MANIFEST_ENV}); "
                           "the synthetic end-to-end criterion governs")
        pytest.skip("real recordings not available; criterion waived")
    records = load_manifest(manifest)
    reports = []
    for scheme in REFERENCE_GRID:
        feats = featurize_records(records, scheme, CFG)
        for protocol in Protocol:
            seeds = range(10) if protocol is Protocol.SD_TD else [0]
            reports += [run_experiment(records, protocol, scheme, CFG, s, features=feats)
                        for s in seeds]
    _, _, grid = accuracy_grid(reports)
    worst = max(abs(grid[s][p.value] - ref)
                for s, refs in REFERENCE_GRID.items() for p, ref in zip(Protocol, refs))
    ok = worst <= 0.04
    record(name, ok, f"max |deviation| = {worst:.3f}")
    assert ok


def test_synthetic_end_to_end(tmp_path):
    t0 = time.perf_counter()
    records = synth_corpus(SynthConfig(seed=0), tmp_path / "corpus")
    feats = featurize_records(records, "dwt", CFG)
    si_td = run_experiment(records, "si_td", "dwt", CFG, 0, features=feats).accuracy
    si_ti = run_experiment(records, "si_ti", "dwt", CFG, 0, features=feats).accuracy
    sd = [run_experiment(records, "sd_td", "dwt", CFG, s, features=feats).accuracy for s in range(10)]
    elapsed = time.perf_counter() - t0
    ok = len(records) == 190 and si_td >= 0.95 and si_ti >= 0.95 and np.mean(sd) >= 0.90 \
        and elapsed < 180
    record("synthetic end-to-end (DWT+SVM)", ok,
           f"SI_TD={si_td:.3f} SI_TI={si_ti:.3f} SD_TD mean={np.mean(sd):.3f} "
           f"(min {min(sd):.3f}, 10 seeds), {elapsed:.1f} s incl. synthesis")
    assert ok


def test_dwt_correctness():
    rng = np.random.default_rng(2024)
    worst_pr = worst_parseval = 0.0
    for i in range(100):
        n = int(rng.integers(257, 8193))
        x = rng.standard_normal(n)
        fam = (Family.HAAR, Family.DB4)[i % 2]
        for bd in Boundary:
            dec = dwt_multilevel(x, WaveletSpec(fam, 5, bd))
            worst_pr = max(worst_pr, float(np.max(np.abs(idwt_array(dec, n) - x))))
            if bd is Boundary.ZERO:
                e = sum(float(b @ b) for b in dec.subbands())
                worst_parseval = max(worst_parseval, abs(e - x @ x) / (x @ x))
    t = np.arange(16000) / 16000
    shares = []
    for freq, idx in ((100.0, 0), (6000.0, -1)):
        bands = dwt_multilevel(np.sin(2 * np.pi * freq * t), WaveletSpec()).subbands()
        total = sum(float(b @ b) for b in bands)
        shares.append(float(bands[idx] @ bands[idx]) / total)
    ok = worst_pr < 1e-8 and worst_parseval < 1e-8 and min(shares) > 0.9
    record("DWT correctness", ok,
           f"max PR error {worst_pr:.1e}, max Parseval rel error {worst_parseval:.1e}, "
           f"100 Hz in CA5 {shares[0]:.3f}, 6 kHz in CD1 {shares[1]:.3f}")
    assert ok


def test_moments_oracle():
    rng = np.random.default_rng(99)
    worst = 0.0
    draws = (rng.standard_normal, rng.standard_cauchy, lambda n: rng.exponential(1.0, n),
             lambda n: rng.uniform(-1, 1, n), lambda n: rng.lognormal(0, 1, n))
    for i in range(1000):
        n = int(rng.integers(2, 3000))
        xs = draws[i % len(draws)](n) * 10 ** rng.uniform(-3, 3)
        ours, ref = moments(xs).as_tuple(), moments_direct(xs)
        for a, b in zip(ours, ref):
            worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    const_ok = all(moments(np.full(k, c)).as_tuple() == (0.0, 0.0, 0.0)
                   for k, c in ((1, 2.0), (3, -7.25), (500, 0.1), (64, 0.0)))
    ok = worst <= 1e-10 and const_ok
    record("moments vs direct-summation oracle", ok,
           f"1000 arrays, max error {worst:.1e} (abs, relative above 1); constants -> (0,0,0): {const_ok}")
    assert ok


def test_svm_oracle():
    rng = np.random.default_rng(7)
    worst_gap = worst_kkt = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 21))
        X = rng.standard_normal((n, 2))
        y = np.where(X[:, 0] + 0.5 * rng.standard_normal(n) > 0, 1, -1)
        y[0], y[1] = 1, -1
        C = float(rng.choice([0.1, 1.0, 10.0]))
        gamma = float(rng.uniform(0.2, 2.0))
        cfg = SvmConfig(C=C, gamma=gamma, standardize=False)
        model = train(X, y, cfg)
        _, ref = qp_dual_projected_gradient(rbf(X, X, gamma), y, C)
        worst_gap = max(worst_gap, abs(model.dual_objective - ref))
        a = np.zeros(n)
        a[model.support_indices] = model.alphas
        m = y * decision_function(model, X)
        r = np.where(a <= 0, np.maximum(0, 1 - m),
                     np.where(a >= C, np.maximum(0, m - 1), np.abs(m - 1)))
        worst_kkt = max(worst_kkt, float(r.max()))
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([-1, -1, 1, 1])
    xor = train(X, y, SvmConfig(C=10.0, gamma=1.0, standardize=False))
    xor_acc = float(np.mean(labels_from_scores(decision_function(xor, X)) == y))
    ok = worst_gap <= 1e-4 and worst_kkt <= 1e-3 and xor_acc == 1.0
    record("SVM vs projected-gradient QP oracle", ok,
           f"50 problems, max objective gap {worst_gap:.1e}, max KKT residual {worst_kkt:.1e}, "
           f"XOR accuracy {xor_acc:.2f} (default kkt_tol)")
    assert ok


def test_partition_invariants(records):
    by_id = {r.clip_id: r for r in records}
    expected = {Protocol.SD_TD: (133, 57), Protocol.SI_TD: (140, 50), Protocol.SI_TI: (84, 20)}
    bad = []
    for seed in range(200):
        for protocol, sizes in expected.items():
            part = make_partition(records, protocol, seed)
            if (len(part.train), len(part.test)) != sizes or set(part.train) & set(part.test):
                bad.append((seed, protocol.value))
            if protocol is not Protocol.SD_TD:
                if {by_id[i].speaker_id for i in part.train} & {by_id[i].speaker_id for i in part.test}:
                    bad.append((seed, protocol.value, "speaker"))
            if protocol is Protocol.SI_TI:
                if {by_id[i].utterance_id for i in part.train} & {by_id[i].utterance_id for i in part.test}:
                    bad.append((seed, protocol.value, "utterance"))
    ok = not bad
    record("partition sizes and disjointness", ok,
           f"200 seeds x 3 protocols, sizes 133/57, 140/50, 84/20; violations: {len(bad)}")
    assert ok


def test_frame_scan(records, dwt_features, labels):
    part = make_partition(records, "si_td", 0)
    model = fit_guarded(dwt_features, labels, part.train, part.train, "dwt", CFG)
    by = {(r.speaker_id, r.utterance_id, r.label.value): r for r in records}
    on_lattice, off_lattice = ["1.0", "1.5", "2.0", "2.5", "3.0"], ["1.25", "1.75", "2.1", "2.6", "2.9"]
    verdicts, mislabelled, n = [], 0, 0
    for spk in range(15, 20):
        for utt in range(1, 6):
            for bstr in (on_lattice[utt - 1], off_lattice[utt - 1]):
                comp = splice(load_wav(by[(spk, utt, "acoustic")].path),
                              load_wav(by[(spk, utt, "laser")].path), float(bstr))
                res = frame_scan(model, comp, float(bstr))
                n += 1
                bd = Fraction(bstr)
                for v in res.verdicts:
                    s = Fraction(v.frame_index, 2)
                    e = s + 1
                    exact = BORDERING if s < bd < e else PURE_ACOUSTIC if e <= bd else PURE_LASER
                    mislabelled += v.composition != exact
                verdicts += res.verdicts
    bord = [v.correct for v in verdicts if v.composition == BORDERING]
    non = [v.correct for v in verdicts if v.composition != BORDERING]
    acc_b, acc_n = float(np.mean(bord)), float(np.mean(non))
    ok = n == 50 and mislabelled == 0 and acc_n >= acc_b
    record("frame scan", ok,
           f"{n} composites, {len(verdicts)} frames, labelling mismatches {mislabelled}; "
           f"non-bordering acc {acc_n:.3f} >= bordering acc {acc_b:.3f} "
           f"(all frames {float(np.mean(bord + non)):.3f})")
    assert ok


def test_robustness_sweep(records, dwt_features):
    clean = run_experiment(records, "si_td", "dwt", CFG, 0, features=dwt_features)
    inf_row, db20 = robustness_sweep(records, [float("inf"), 20.0], (0.0, 2000.0),
                                     features=dwt_features)
    exact = inf_row.verdicts == clean.verdicts and inf_row.accuracy == clean.accuracy
    drop = clean.accuracy - db20.accuracy
    ok = exact and drop <= 0.05
    record("robustness sweep", ok,
           f"SNR=inf row bit-identical to clean run: {exact}; clean {clean.accuracy:.3f}, "
           f"20 dB (0-2 kHz) {db20.accuracy:.3f}, drop {100 * drop:.1f} points")
    assert ok


def test_cli_determinism(tmp_path):
    outputs = {}
    for run in ("a", "b"):
        d = tmp_path / run
        base = ["--data-dir", str(d), "--seed", "3"]
        assert cli_main(["synth", *base]) == 0
        assert cli_main(["featurize", *base, "--out", str(d / "feat.csv")]) == 0
        assert cli_main(["eval", *base, "--protocol", "sd_td,si_td,si_ti", "--repeats", "3",
                         "--report-out", str(d / "report")]) == 0
        assert cli_main(["train", *base, "--model-out", str(d / "m.lgsvm")]) == 0
        wav = d / "corpus" / "laser" / "laser_s15_u4.wav"
        assert cli_main(["spectrum", *base, str(wav), "--out", str(d / "spec.csv")]) == 0
        assert cli_main(["frame-scan", *base, "--model", str(d / "m.lgsvm"), str(wav),
                         "--boundary-s", "1.75", "--out", str(d / "frames.csv")]) == 0
        assert cli_main(["robustness", *base, "--snr-list", "inf,20,10",
                         "--out", str(d / "sweep.csv")]) == 0
        outputs[run] = {p.relative_to(d): p.read_bytes()
                        for p in sorted(d.rglob("*")) if p.is_file()}
    same = outputs["a"] == outputs["b"]
    csvs = sum(1 for p in outputs["a"] if p.suffix == ".csv")
    record("determinism", same,
           f"{len(outputs['a'])} files from synth/featurize/eval/train/spectrum/frame-scan/robustness "
           f"({csvs} CSVs) byte-identical across two invocations: {same}")
    assert same
