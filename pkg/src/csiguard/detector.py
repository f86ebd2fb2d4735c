"""Residual-based spoofing detection.

Under the null hypothesis (legitimate transmitter, matched model) the
whitened residual energy, doubled, follows a chi-squared law with two
degrees of freedom per pilot, so the decision threshold for a target
false-alarm rate comes from the chi-squared quantile.  A
magnitude-difference detector over consecutive observations provides the
classical phase-blind baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, NumericalError
from .numerics import chi2_quantile, hermitian_solve
from .observation import CsiObservation

__all__ = [
    "DetectionRecord",
    "test_statistic",
    "threshold",
    "decide",
    "magnitude_diff_statistic",
    "calibrate_empirical_threshold",
]

H0 = "H0"
H1 = "H1"


@dataclass(frozen=True)
class DetectionRecord:
    """One per-step detection outcome with its ground truth label."""

    time_index: int
    statistic: float
    threshold: float
    decision: str
    truth: str
    nominal_false_alarm: float

    def __post_init__(self) -> None:
        if self.statistic < 0.0:
            raise ValueError("statistic must be nonnegative")
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")
        if self.truth not in ("alice", "eve"):
            raise ValueError(f"truth must be 'alice' or 'eve', got {self.truth!r}")
        if not (0.0 < self.nominal_false_alarm < 1.0):
            raise ValueError("nominal_false_alarm must lie in (0, 1)")
        if self.decision != decide(self.statistic, self.threshold):
            raise ValueError("decision is inconsistent with statistic and threshold")


def test_statistic(residual: np.ndarray, cov: np.ndarray) -> float:
    """Twice the covariance-whitened residual energy: 2 eps^H Sigma^{-1} eps."""
    residual = np.asarray(residual)
    if cov.shape != (len(residual), len(residual)):
        raise ValueError(f"covariance shape {cov.shape} does not match residual")
    value = 2.0 * complex(residual.conj() @ hermitian_solve(cov, residual))
    if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise NumericalError(f"residual energy has imaginary part {value.imag:.3e}")
    return value.real


def threshold(nominal_false_alarm: float, num_pilots: int) -> float:
    """Decision threshold: chi-squared quantile at 1 - P_FA with 2 Q degrees of freedom."""
    return chi2_quantile(1.0 - nominal_false_alarm, 2 * num_pilots)


def decide(statistic: float, d: float) -> str:
    """H1 iff the statistic strictly exceeds the threshold (boundary accepts)."""
    return H1 if statistic > d else H0


def magnitude_diff_statistic(current: CsiObservation, previous: CsiObservation) -> float:
    """Normalized squared magnitude change between consecutive observations.

    || |current| - |previous| ||^2 / || |previous| ||^2, insensitive to any
    phase distortion of either observation.
    """
    cur = np.abs(current.values)
    prev = np.abs(previous.values)
    if cur.shape != prev.shape:
        raise ValueError("observations must have equal length")
    denom = float(prev @ prev)
    if denom == 0.0:
        raise ValueError("previous observation has zero magnitude")
    diff = cur - prev
    return float(diff @ diff) / denom


def calibrate_empirical_threshold(h0_samples, nominal_false_alarm: float) -> float:
    """Empirical (1 - P_FA) quantile of null-hypothesis samples, nearest-rank rule."""
    samples = np.sort(np.asarray(h0_samples, dtype=float))
    if samples.size < 100:
        raise CalibrationError(
            f"need at least 100 calibration samples, got {samples.size}"
        )
    if not (0.0 < nominal_false_alarm < 1.0):
        raise ValueError("nominal_false_alarm must lie in (0, 1)")
    rank = max(1, math.ceil((1.0 - nominal_false_alarm) * samples.size))
    return float(samples[rank - 1])
