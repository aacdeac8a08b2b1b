"""Binary soft-margin RBF SVM trained with SMO.

Labels are +1 (laser) and -1 (acoustic). Training solves the dual

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0

by repeatedly optimising the maximal violating pair (first-order working set
selection) until the KKT gap drops below ``kkt_tol``.
"""

from __future__ import annotations

import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    NonFiniteFeature,
    SingleClassData,
    VersionMismatch,
)

LASER = 1
ACOUSTIC = -1
LABEL_MAP = {"1": "laser", "-1": "acoustic"}


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    gamma: Optional[float] = None  # None -> "scale" rule
    kkt_tol: float = 1e-3
    max_iter: int = 100_000
    standardize: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.kkt_tol > 0:
            raise ValueError(f"kkt_tol must be positive, got {self.kkt_tol}")

    @property
    def gamma_mode(self) -> str:
        return "scale" if self.gamma is None else "fixed"

    def to_dict(self):
        return {"C": self.C, "gamma": self.gamma, "kkt_tol": self.kkt_tol,
                "max_iter": self.max_iter, "standardize": self.standardize}


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # zero-variance dims pass through centred but unscaled
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X):
        return (X - self.mean) / self.std


@dataclass(eq=False)
class SvmModel:
    support_vectors: np.ndarray  # in standardized space
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    standardizer: Optional[Standardizer] = None
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    scheme: str = "dwt"
    feature_config: dict = field(default_factory=dict)
    # diagnostics from training, not serialized
    n_iter: int = 0
    converged: bool = True
    dual_objective: float = 0.0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)


def rbf_kernel(A, B, gamma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X shape {X.shape} does not match {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature matrix contains NaN or inf")
    if not set(np.unique(y)) <= {-1, 1}:
        raise ValueError("labels must be +1 (laser) or -1 (acoustic)")
    if np.all(y == 1) or np.all(y == -1):
        raise SingleClassData("training data needs both classes")
    return X, y.astype(np.float64)


def smo_solve(K, y, C, tol, max_iter):
    """Returns ``(alpha, bias, n_iter, converged)`` for a precomputed kernel."""
    n = y.size
    Q = np.outer(y, y) * K
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)
    diag = np.diag(K)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        neg_yg = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        vals_up = np.where(up, neg_yg, -np.inf)
        vals_low = np.where(low, neg_yg, np.inf)
        i = int(np.argmax(vals_up))
        j = int(np.argmin(vals_low))
        if vals_up[i] - vals_low[j] < tol:
            converged = True
            break
        curv = diag[i] + diag[j] - 2.0 * K[i, j]
        if curv <= 0:
            curv = 1e-12
        step = (vals_up[i] - vals_low[j]) / curv
        # feasible step along the direction (a_i += y_i d, a_j -= y_j d)
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, lim_i, lim_j)
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = old_i + y[i] * step
        alpha[j] = old_j - y[j] * step
        if step == lim_i:
            alpha[i] = C if y[i] > 0 else 0.0
        if step == lim_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        G += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    else:
        it = max_iter

    neg_yg = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(neg_yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        bias = float(0.5 * (neg_yg[up].max() + neg_yg[low].min()))
    return alpha, bias, it, converged


def scale_gamma(Xs) -> float:
    """1 / (n_features * pooled variance), the usual 'scale' heuristic."""
    v = float(Xs.var())
    return 1.0 / (Xs.shape[1] * v) if v > 0 else 1.0


def train(X, y, cfg: SvmConfig = SvmConfig(), scheme: str = "dwt",
          feature_config: Optional[dict] = None) -> SvmModel:
    X, yf = _check_xy(X, y)
    standardizer = Standardizer.fit(X) if cfg.standardize else None
    Xs = standardizer.transform(X) if standardizer else X
    gamma = cfg.gamma if cfg.gamma is not None else scale_gamma(Xs)
    K = rbf_kernel(Xs, Xs, gamma)
    alpha, bias, n_iter, converged = smo_solve(K, yf, cfg.C, cfg.kkt_tol, cfg.max_iter)
    if not converged:
        warnings.warn(f"SMO hit the iteration cap ({cfg.max_iter}) before reaching "
                      f"kkt_tol={cfg.kkt_tol}", RuntimeWarning, stacklevel=2)
    ay = alpha * yf
    objective = float(alpha.sum() - 0.5 * ay @ K @ ay)
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        support_vectors=Xs[sv].copy(),
        dual_coef=ay[sv].copy(),
        bias=bias,
        gamma=float(gamma),
        C=float(cfg.C),
        standardizer=standardizer,
        support_indices=sv.astype(np.int64),
        scheme=scheme,
        feature_config=dict(feature_config or {}),
        n_iter=n_iter,
        converged=converged,
        dual_objective=objective,
    )


def decision_function(model: SvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"model expects {model.dim} features, got {X.shape[1]}")
    if model.standardizer is not None:
        X = model.standardizer.transform(X)
    return rbf_kernel(X, model.support_vectors, model.gamma) @ model.dual_coef + model.bias


def labels_from_scores(scores):
    # ties go to the attack class
    return np.where(np.asarray(scores) >= 0, LASER, ACOUSTIC)


def predict(model: SvmModel, x):
    """Classify one feature vector; returns ``(label, score)``."""
    values = getattr(x, "values", x)
    score = float(decision_function(model, np.asarray(values).reshape(1, -1))[0])
    return int(labels_from_scores(score)), score


# --- model files -----------------------------------------------------------
#
# layout (all little-endian):
#   magic    b"LGSVM\0"
#   u16      format version
#   u32      header length H, then H bytes of UTF-8 JSON
#   f64[n_sv*dim] support vectors (row-major), f64[n_sv] dual coefficients,
#   i64[n_sv] training indices of the support vectors, f64 bias,
#   f64[dim] mean, f64[dim] std         (only when the header says standardize)
#   u32      CRC-32 of every preceding byte

MAGIC = b"LGSVM\0"
FORMAT_VERSION = 1


def save_model(model: SvmModel, path):
    n_sv = model.support_vectors.shape[0]
    if n_sv == 0:
        raise ValueError("refusing to save a model with no support vectors")
    header = {
        "scheme": model.scheme,
        "dim": int(model.dim),
        "n_sv": int(n_sv),
        "gamma": model.gamma,
        "C": model.C,
        "standardize": model.standardizer is not None,
        "label_map": LABEL_MAP,
        "feature_config": model.feature_config,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(hb)), hb,
             model.support_vectors.astype("<f8").tobytes(),
             model.dual_coef.astype("<f8").tobytes(),
             model.support_indices.astype("<i8").tobytes(),
             struct.pack("<d", model.bias)]
    if model.standardizer is not None:
        parts += [model.standardizer.mean.astype("<f8").tobytes(),
                  model.standardizer.std.astype("<f8").tobytes()]
    body = b"".join(parts)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    tmp.replace(path)


def load_model(path) -> SvmModel:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 10 or not data.startswith(MAGIC):
        raise CorruptModel(f"{path}: not a laserguard model file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    version, hlen = struct.unpack("<HI", data[len(MAGIC):len(MAGIC) + 6])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: model format v{version}, expected v{FORMAT_VERSION}")
    if zlib.crc32(body) != crc:
        raise CorruptModel(f"{path}: checksum mismatch (truncated or damaged)")
    pos = len(MAGIC) + 6
    try:
        header = json.loads(body[pos:pos + hlen].decode("utf-8"))
        n_sv, dim = int(header["n_sv"]), int(header["dim"])
    except (ValueError, KeyError) as exc:
        raise CorruptModel(f"{path}: unreadable header ({exc})") from exc
    pos += hlen

    def take(dtype, count):
        nonlocal pos
        nbytes = np.dtype(dtype).itemsize * count
        if pos + nbytes > len(body):
            raise CorruptModel(f"{path}: payload shorter than header declares")
        out = np.frombuffer(body, dtype=dtype, count=count, offset=pos).astype(dtype[1:])
        pos += nbytes
        return out

    sv = take("<f8", n_sv * dim).reshape(n_sv, dim)
    coef = take("<f8", n_sv)
    idx = take("<i8", n_sv)
    (bias,) = take("<f8", 1)
    standardizer = None
    if header["standardize"]:
        standardizer = Standardizer(take("<f8", dim), take("<f8", dim))
    if pos != len(body):
        raise CorruptModel(f"{path}: {len(body) - pos} trailing bytes")
    return SvmModel(sv, coef, float(bias), float(header["gamma"]), float(header["C"]),
                    standardizer, idx, header["scheme"], header.get("feature_config", {}))
