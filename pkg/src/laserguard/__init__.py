"""Laser-injection detection for MEMS microphone audio via DWT moment features and an SVM."""

from .audio_io import AudioBuffer, load_clip, load_wav, resample, write_wav
from .dataset import (
    ClipRecord,
    Label,
    Partition,
    Protocol,
    SynthConfig,
    add_colored_noise,
    load_manifest,
    make_partition,
    splice,
    synth_corpus,
)
from .dwt import Boundary, Family, WaveletDecomposition, WaveletSpec, dwt_multilevel, idwt_multilevel
from .evaluation import EvalReport, PipelineConfig, frame_scan, robustness_sweep, run_experiment
from .features import CepstralConfig, FeatureVector, Scheme, featurize, log_spectrum
from .stats import DistributionFit, FitKind, MomentSet, fit_distribution, moments
from .svm import SvmConfig, SvmModel, load_model, predict, save_model, train

__version__ = "0.1.0"
