"""Statistical machinery for the limit-theorem checks.

Pure functions of their sample inputs: empirical CDF distances, Monte Carlo
Laplace functionals with standard errors, martingale z-score tests and the
randomly-shifted Gumbel mixture CDF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SkelexError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2 replicas")
        if self.stderr < 0:
            raise ValueError("stderr >= 0")

    def within(self, target: float, sigmas: float = 3.0, bias: float = 0.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr + bias


def mc_mean(values: np.ndarray) -> McEstimate:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return McEstimate(value=float(np.mean(values)),
                      stderr=float(np.std(values, ddof=1) / math.sqrt(n)), n=n)


def ks_distance(samples_a, samples_b_or_cdf, grid_points: int = 4001) -> float:
    """Two-sample or one-sample sup-CDF distance.

    Against a callable CDF the comparison runs on a dense grid-interpolated
    version of the CDF (mixture CDFs over large banks would otherwise cost a
    pairwise product); the grid is fine enough that interpolation error is
    negligible next to sampling noise.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    n = a.shape[0]
    if n == 0:
        raise SkelexError("empty sample")
    if callable(samples_b_or_cdf):
        cdf = samples_b_or_cdf
        lo, hi = a[0] - 1.0, a[-1] + 1.0
        xs = np.linspace(lo, hi, grid_points)
        Fs = np.asarray(cdf(xs), dtype=float)
        F = np.interp(a, xs, Fs)
        i = np.arange(1, n + 1)
        return float(max(np.max(np.abs(i / n - F)), np.max(np.abs((i - 1) / n - F))))
    b = np.sort(np.asarray(samples_b_or_cdf, dtype=float))
    m = b.shape[0]
    if m == 0:
        raise SkelexError("empty sample")
    allv = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, allv, side="right") / n
    cdf_b = np.searchsorted(b, allv, side="right") / m
    return float(np.max(np.abs(cdf_a - cdf_b)))


def gumbel_mixture_cdf(dmart_samples: np.ndarray, c: float,
                       x: float | np.ndarray) -> float | np.ndarray:
    """Mean of exp(-c dM e^(-sqrt2 x)) over a derivative-martingale bank.

    This is the limiting CDF of the recentred maximum: a Gumbel law whose
    location is randomly shifted by the martingale limit.
    """
    dm = np.asarray(dmart_samples, dtype=float)
    if np.any(dm < 0):
        raise SkelexError("negative derivative-martingale sample")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([float(np.mean(np.exp(-c * dm * math.exp(-SQRT2 * xv))))
                    for xv in xs])
    return out if np.ndim(x) else float(out[0])


def gumbel_mixture_cdf_fn(dmart_samples: np.ndarray, c: float,
                          grid_points: int = 2048) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized mixture CDF over a fixed bank (chunked for large banks)."""
    dm = np.asarray(dmart_samples, dtype=float)
    if np.any(dm < 0):
        raise SkelexError("negative derivative-martingale sample")

    def cdf(x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        step = max(1, 10_000_000 // max(dm.shape[0], 1))
        for i in range(0, x.shape[0], step):
            xv = x[i:i + step]
            out[i:i + step] = np.mean(
                np.exp(-c * dm[None, :] * np.exp(-SQRT2 * xv)[:, None]), axis=1)
        return out

    return cdf


def laplace_mc(samples: Sequence, phi) -> McEstimate:
    """Mean and stderr of e^(-<phi, sample>) over point-measure samples."""
    if len(samples) == 0:
        raise SkelexError("empty sample list")
    vals = np.array([math.exp(-s.integrate(phi)) for s in samples])
    return mc_mean(vals)


def laplace_mc_flat(rid: np.ndarray, positions: np.ndarray, weights: np.ndarray,
                    n_replicas: int, phi) -> McEstimate:
    """Laplace functional from flattened (replica, position, mass) arrays."""
    contrib = np.bincount(rid, weights=weights * phi(positions),
                          minlength=n_replicas)
    return mc_mean(np.exp(-contrib))


@dataclass
class MartingaleReport:
    times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    z_scores: np.ndarray
    flagged: np.ndarray

    def all_clear(self) -> bool:
        return not bool(np.any(self.flagged))

    def to_json(self) -> dict:
        return {"times": self.times.tolist(), "means": self.means.tolist(),
                "stderrs": self.stderrs.tolist(), "z": self.z_scores.tolist(),
                "flagged": self.flagged.tolist()}


def martingale_test(trajectories: np.ndarray, times: np.ndarray,
                    initial_value: float, z_flag: float = 4.0) -> MartingaleReport:
    """z-score of the sample mean against the time-0 value, per time."""
    traj = np.asarray(trajectories, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.shape[0] < 2:
        raise ValueError("need at least two times")
    n = traj.shape[1]
    means = traj.mean(axis=1)
    stderrs = traj.std(axis=1, ddof=1) / math.sqrt(n)
    z = (means - initial_value) / np.where(stderrs > 0, stderrs, np.inf)
    return MartingaleReport(times=times, means=means, stderrs=stderrs,
                            z_scores=z, flagged=np.abs(z) > z_flag)


@dataclass
class CheckResult:
    check_id: str
    statistic: float
    threshold: float
    passed: bool
    evidence: dict

    def to_json(self) -> dict:
        return {"check_id": self.check_id, "statistic": self.statistic,
                "threshold": self.threshold, "pass": self.passed,
                "evidence": self.evidence}


def exponential_cdf(rate: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.where(np.asarray(x) > 0, -np.expm1(-rate * np.asarray(x)), 0.0)


def regression_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """OLS slope of y on x with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    sxx = float(np.sum(xc * xc))
    slope = float(np.sum(xc * y) / sxx)
    resid = y - y.mean() - slope * xc
    se = math.sqrt(float(np.sum(resid * resid)) / (n - 2) / sxx)
    return slope, se


def poisson_slope(x: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    """Through-origin slope of Poisson counts on their intensities.

    Under counts ~ Poisson(slope * x) the estimator sum(x c)/sum(x^2) has
    variance sum(x^3)/sum(x^2)^2; an OLS standard error would understate the
    heteroscedastic noise carried by high-intensity replicas.
    """
    x = np.asarray(x, dtype=float)
    counts = np.asarray(counts, dtype=float)
    sxx = float(np.sum(x * x))
    slope = float(np.sum(x * counts) / sxx)
    se = math.sqrt(float(np.sum(x ** 3))) / sxx
    return slope, se


def paired_difference(a: np.ndarray, b: np.ndarray) -> McEstimate:
    return mc_mean(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
