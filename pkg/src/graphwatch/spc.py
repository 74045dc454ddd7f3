"""Control chart for quantile function values.

Phase I estimates the in-control mean and covariance of the daily
(0.8, 0.95) response-time quantile vector; Phase II compares each day's
vector to them with a Hotelling-type quadratic form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, special

QUANTILE_LEVELS = (0.8, 0.95)


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


class RegularizationWarning(RuntimeWarning):
    pass


def empirical_quantile(samples: Sequence[float], p: float) -> float:
    """Quantile by linear interpolation between order statistics at h = (n-1)p + 1."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("cannot take a quantile of an empty sample")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    h = (x.size - 1) * p  # zero-based position
    lo = math.floor(h)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def quantile_vector(samples, levels=QUANTILE_LEVELS) -> np.ndarray:
    return np.array([empirical_quantile(samples, p) for p in levels])


def chi_square_quantile(prob: float, df: int) -> float:
    """Inverse CDF of the chi-square distribution."""
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie in (0, 1)")
    if df < 1:
        raise ValueError("df must be a positive integer")
    if df == 2:
        return -2.0 * math.log1p(-prob)
    # P(df/2, x/2) is the chi-square CDF; bracket then solve.
    hi = max(1.0, float(df))
    while special.gammainc(df / 2.0, hi / 2.0) < prob:
        hi *= 2.0
    return optimize.brentq(lambda x: special.gammainc(df / 2.0, x / 2.0) - prob, 0.0, hi,
                           xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def control_limit(arl: float, df: int = 2) -> float:
    if arl <= 1:
        raise ValueError("ARL must exceed 1")
    return chi_square_quantile(1.0 - 1.0 / arl, df)


@dataclass(frozen=True, eq=False)
class QuantileChartState:
    q0: np.ndarray
    sigma0: np.ndarray
    sigma0_inverse: np.ndarray
    control_limit: float
    arl: float
    n_calibration: int = 0
    regularized: bool = False

    def to_dict(self):
        return {
            "version": 1,
            "levels": list(QUANTILE_LEVELS),
            "q0": self.q0.tolist(),
            "sigma0": self.sigma0.tolist(),
            "sigma0_inverse": self.sigma0_inverse.tolist(),
            "control_limit": self.control_limit,
            "arl": self.arl,
            "n_calibration": self.n_calibration,
            "regularized": self.regularized,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != 1:
            raise ValueError(f"unsupported chart state version {d.get('version')!r}")
        return cls(
            np.array(d["q0"], dtype=float),
            np.array(d["sigma0"], dtype=float),
            np.array(d["sigma0_inverse"], dtype=float),
            float(d["control_limit"]),
            float(d["arl"]),
            int(d.get("n_calibration", 0)),
            bool(d.get("regularized", False)),
        )


def calibrate(daily_quantiles, arl: float = 1000.0) -> QuantileChartState:
    """Phase I: mean vector, sample covariance (n-1) and chi-square limit at alpha = 1/ARL.

    A (near-)singular covariance gets a ridge of 1e-8 * trace / c added to the
    diagonal with a :class:`RegularizationWarning` (1e-8 * max(mean(q0^2), 1)
    when the covariance is exactly zero).
    """
    q = np.asarray(daily_quantiles, dtype=float)
    if q.ndim != 2 or q.shape[0] < 2:
        raise ValueError("need at least two calibration days")
    if not np.isfinite(q).all():
        raise ValueError("calibration quantiles must be finite")
    c = q.shape[1]
    q0 = q.mean(axis=0)
    sigma = np.cov(q, rowvar=False, ddof=1).reshape(c, c)
    regularized = False
    tr = float(np.trace(sigma))
    if tr == 0.0 or np.linalg.eigvalsh(sigma).min() < 1e-12 * tr:
        # a zero covariance has no scale of its own; borrow one from the mean level
        scale = tr / c if tr > 0.0 else max(float(np.mean(q0**2)), 1.0)
        ridge = 1e-8 * scale
        warnings.warn(f"singular calibration covariance; adding ridge {ridge:.3g}", RegularizationWarning,
                      stacklevel=2)
        sigma = sigma + ridge * np.eye(c)
        regularized = True
        if np.linalg.eigvalsh(sigma).min() <= 0.0:
            raise SingularCovarianceError("covariance still singular after regularization")
    inv = np.linalg.inv(sigma)
    inv = (inv + inv.T) / 2
    return QuantileChartState(q0, sigma, inv, control_limit(arl, c), float(arl), q.shape[0], regularized)


def statistic(state: QuantileChartState, qt) -> float:
    """a_t = (Q_t - Q_0)' Sigma_0^{-1} (Q_t - Q_0)."""
    d = np.asarray(qt, dtype=float) - state.q0
    return max(float(d @ state.sigma0_inverse @ d), 0.0)


def statistics(state: QuantileChartState, qts) -> np.ndarray:
    d = np.asarray(qts, dtype=float) - state.q0
    return np.maximum(np.einsum("ij,jk,ik->i", d, state.sigma0_inverse, d), 0.0)


def monitor(state: QuantileChartState, qt):
    """Return ``(signal, a_t)``; a statistic equal to the limit signals."""
    a = statistic(state, qt)
    return a >= state.control_limit, a
