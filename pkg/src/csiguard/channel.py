"""Time-domain multipath channel simulator.

The channel is Rayleigh fading with an exponential power-delay profile.
Temporal correlation follows the classical Jakes Doppler spectrum,
approximated by a first-order autoregressive recursion whose parameters
come from the Yule-Walker fit: the tap correlation between consecutive
symbols is J0(2*pi*fd*Ts), and the innovation variance per tap is
(1 - alpha^2) times the tap power, which keeps every tap stationary at
its profile power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import bessel_j0

__all__ = ["ChannelProfile", "TimeChannel", "make_profile", "init_channel", "step_channel"]


@dataclass(frozen=True, eq=False)
class ChannelProfile:
    """Static statistics of one simulated link.

    pdp holds the per-tap variances (unit total power); alpha is the AR(1)
    transition coefficient; process_noise_diag is the diagonal of the
    innovation covariance, (1 - alpha^2) * pdp.
    """

    num_paths: int
    pdp: np.ndarray
    normalized_doppler: float
    alpha: float
    process_noise_diag: np.ndarray

    def __post_init__(self) -> None:
        pdp = np.asarray(self.pdp, dtype=float)
        if self.num_paths < 1 or pdp.shape != (self.num_paths,):
            raise ValueError(f"pdp must have shape ({self.num_paths},), got {pdp.shape}")
        if np.any(pdp <= 0.0):
            raise ValueError("pdp entries must be strictly positive")
        if abs(pdp.sum() - 1.0) > 1e-12:
            raise ValueError(f"pdp must sum to 1, got {pdp.sum()!r}")
        if abs(self.alpha - bessel_j0(2.0 * np.pi * self.normalized_doppler)) > 1e-9:
            raise ValueError("alpha is inconsistent with the normalized Doppler")
        expected = (1.0 - self.alpha**2) * pdp
        if np.max(np.abs(np.asarray(self.process_noise_diag) - expected)) > 1e-12:
            raise ValueError("process_noise_diag must equal (1 - alpha^2) * pdp")


@dataclass(frozen=True, eq=False)
class TimeChannel:
    """Complex impulse response of one link at one time step."""

    taps: np.ndarray
    time_index: int


def make_profile(num_paths: int, normalized_doppler: float, pdp_decay: float) -> ChannelProfile:
    """Build a channel profile with an exponential power-delay profile.

    Tap l carries power proportional to exp(-pdp_decay * l), normalized to
    unit total power.  The normalized Doppler fd*Ts must stay below 0.5,
    where the AR(1) surrogate of the Jakes spectrum stops being meaningful.
    """
    if num_paths < 1:
        raise ValueError(f"num_paths must be >= 1, got {num_paths}")
    if pdp_decay < 0.0:
        raise ValueError(f"pdp_decay must be >= 0, got {pdp_decay}")
    if not (0.0 <= normalized_doppler < 0.5):
        raise ValueError(
            f"normalized Doppler must lie in [0, 0.5), got {normalized_doppler!r}"
        )
    pdp = np.exp(-pdp_decay * np.arange(num_paths, dtype=float))
    pdp /= pdp.sum()
    alpha = bessel_j0(2.0 * np.pi * normalized_doppler)
    return ChannelProfile(
        num_paths=num_paths,
        pdp=pdp,
        normalized_doppler=normalized_doppler,
        alpha=alpha,
        process_noise_diag=(1.0 - alpha**2) * pdp,
    )


def _complex_gaussian(rng: np.random.Generator, variances: np.ndarray) -> np.ndarray:
    """Circularly-symmetric complex Gaussian vector with given per-entry variances."""
    scale = np.sqrt(variances / 2.0)
    return scale * rng.standard_normal(len(variances)) + 1j * scale * rng.standard_normal(
        len(variances)
    )


def init_channel(profile: ChannelProfile, rng: np.random.Generator) -> TimeChannel:
    """Draw a stationary start: tap l ~ CN(0, pdp[l])."""
    return TimeChannel(taps=_complex_gaussian(rng, profile.pdp), time_index=0)


def step_channel(
    h: TimeChannel, profile: ChannelProfile, rng: np.random.Generator
) -> TimeChannel:
    """Advance one AR(1) step: alpha * h + innovation."""
    if len(h.taps) != profile.num_paths:
        raise ValueError(
            f"channel has {len(h.taps)} taps, profile expects {profile.num_paths}"
        )
    noise = _complex_gaussian(rng, profile.process_noise_diag)
    return TimeChannel(taps=profile.alpha * h.taps + noise, time_index=h.time_index + 1)
