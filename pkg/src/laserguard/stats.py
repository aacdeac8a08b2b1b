"""Higher-order moments of subband coefficients, plus exploratory fits.

The fits reproduce the Cauchy / log-normal histogram study of the DWT
subbands. They are for analysis and plotting only; the classifier consumes
:func:`moments` directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats as sps

from .errors import DegenerateData, EmptyArray, NonFiniteInput, TooFewSamples


@dataclass(frozen=True)
class MomentSet:
    variance: float
    skew: float
    kurtosis: float  # excess (Fisher)

    def as_tuple(self):
        return (self.variance, self.skew, self.kurtosis)


def moments(xs) -> MomentSet:
    """Population central moments: m2, m3/m2^1.5, m4/m2^2 - 3.

    A zero-variance array gets skew = kurtosis = 0.
    """
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise EmptyArray("cannot take moments of an empty array")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("coefficient array contains NaN or inf")
    d = x - x.mean()
    scale = float(np.max(np.abs(d)))
    # relative test: a constant array can leave ~1 ulp of residual after centering
    if scale <= 16 * np.finfo(float).eps * np.max(np.abs(x)):
        return MomentSet(0.0, 0.0, 0.0)
    # work on d / max|d| so tiny or huge coefficients neither underflow nor overflow
    u = d / scale
    u2 = u * u
    r2 = u2.mean()
    r3 = (u2 * u).mean()
    r4 = (u2 * u2).mean()
    return MomentSet(float(r2 * scale * scale), float(r3 / r2 ** 1.5), float(r4 / (r2 * r2) - 3.0))


class FitKind(str, Enum):
    CAUCHY = "cauchy"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class DistributionFit:
    kind: FitKind
    params: dict
    goodness: float  # Kolmogorov-Smirnov distance

    def cdf(self, x):
        if self.kind is FitKind.CAUCHY:
            return sps.cauchy.cdf(x, loc=self.params["loc"], scale=self.params["scale"])
        return sps.lognorm.cdf(x, s=self.params["sigma"], scale=np.exp(self.params["mu"]))


_LOG_EPS = np.finfo(float).eps


def fit_distribution(xs, kind) -> DistributionFit:
    """Quantile fit for Cauchy, log-moment fit for log-normal.

    Wavelet coefficients are signed, so the log-normal fit is applied to
    ``|x| + eps``.
    """
    kind = FitKind(kind)
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    if x.size < 8:
        raise TooFewSamples(f"need at least 8 samples to fit, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("coefficient array contains NaN or inf")

    if kind is FitKind.CAUCHY:
        q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
        if q3 - q1 <= 0:
            raise DegenerateData("interquartile range is zero")
        params = {"loc": float(med), "scale": float((q3 - q1) / 2)}
        sample = x
    else:
        sample = np.abs(x) + _LOG_EPS
        logs = np.log(sample)
        sigma = float(logs.std())
        if np.ptp(logs) == 0:
            raise DegenerateData("log-magnitudes have zero spread")
        params = {"mu": float(logs.mean()), "sigma": sigma}

    fit = DistributionFit(kind, params, 0.0)
    d = sps.kstest(sample, fit.cdf).statistic
    return DistributionFit(kind, params, float(d))
