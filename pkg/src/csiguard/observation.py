"""DFT-domain CSI observations with phase distortion and noise.

A receiver estimating the channel from pilot subcarriers sees
``E(offset, slope) @ C @ h + w``: the partial DFT of the impulse response,
rotated by a per-packet phase error (a common offset from the carrier
frequency offset plus a ramp across subcarriers from the packet-detection
delay), plus complex Gaussian noise.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PilotGrid",
    "PhaseDistortion",
    "CsiObservation",
    "partial_dft",
    "phase_error_matrix",
    "observe",
    "draw_phase_distortion",
    "snr_to_noise_var",
    "wrap_angle",
]


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


@dataclass(frozen=True)
class PilotGrid:
    """Pilot subcarrier layout of the OFDM symbol."""

    dft_size: int
    pilot_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = self.pilot_indices
        if len(idx) == 0:
            raise ValueError("at least one pilot index is required")
        if any(not (0 <= i < self.dft_size) for i in idx):
            raise ValueError(f"pilot indices must lie in [0, {self.dft_size})")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("pilot indices must be strictly increasing")

    @property
    def num_pilots(self) -> int:
        return len(self.pilot_indices)


@dataclass(frozen=True)
class PhaseDistortion:
    """Phase offset (radians) and phase slope (radians per subcarrier index)."""

    offset: float
    slope: float

    def __post_init__(self) -> None:
        if not (-np.pi <= self.offset < np.pi):
            object.__setattr__(self, "offset", wrap_angle(self.offset))


@dataclass(frozen=True, eq=False)
class CsiObservation:
    """Distorted DFT-domain channel estimate on the pilot grid."""

    values: np.ndarray
    time_index: int


IDENTITY_DISTORTION = PhaseDistortion(0.0, 0.0)


@functools.lru_cache(maxsize=16)
def partial_dft(grid: PilotGrid, num_paths: int) -> np.ndarray:
    """Partial DFT matrix: entry (m, l) = exp(-2j*pi*q_m*l / M).

    Maps a length-`num_paths` impulse response to the pilot subcarriers.
    The result is cached per (grid, num_paths) and marked read-only.
    """
    if num_paths > grid.dft_size:
        raise ValueError("channel length exceeds the DFT size")
    q = np.asarray(grid.pilot_indices, dtype=float)
    mat = np.exp(-2j * np.pi * np.outer(q, np.arange(num_paths)) / grid.dft_size)
    mat.setflags(write=False)
    return mat


def phase_diagonal(d: PhaseDistortion, grid: PilotGrid) -> np.ndarray:
    """Diagonal of the phase-error matrix: exp(j*offset) * exp(j*slope*q_m)."""
    q = np.asarray(grid.pilot_indices, dtype=float)
    return np.exp(1j * (d.offset + d.slope * q))


def phase_error_matrix(d: PhaseDistortion, grid: PilotGrid) -> np.ndarray:
    """Dense diagonal phase-error matrix (unitary by construction)."""
    return np.diag(phase_diagonal(d, grid))


def observe(
    h,
    d: PhaseDistortion,
    grid: PilotGrid,
    noise_var: float,
    rng: np.random.Generator,
) -> CsiObservation:
    """Observed CSI: phase-rotated partial DFT of the channel plus noise.

    `noise_var` is the per-pilot variance of the circularly-symmetric
    complex noise and must be strictly positive.
    """
    if noise_var <= 0.0:
        raise ValueError(f"noise variance must be > 0, got {noise_var!r}")
    taps = h.taps
    c = partial_dft(grid, len(taps))
    clean = phase_diagonal(d, grid) * (c @ taps)
    scale = np.sqrt(noise_var / 2.0)
    q = grid.num_pilots
    noise = scale * (rng.standard_normal(q) + 1j * rng.standard_normal(q))
    return CsiObservation(values=clean + noise, time_index=h.time_index)


def draw_phase_distortion(rng: np.random.Generator, max_slope: float) -> PhaseDistortion:
    """Random distortion: offset uniform on [-pi, pi), slope uniform on [-max_slope, max_slope]."""
    if max_slope <= 0.0:
        raise ValueError(f"max_slope must be > 0, got {max_slope!r}")
    offset = rng.uniform(-np.pi, np.pi)
    slope = rng.uniform(-max_slope, max_slope)
    return PhaseDistortion(offset=offset, slope=slope)


def snr_to_noise_var(snr_db: float) -> float:
    """Per-pilot noise variance for a given SNR in dB.

    SNR is defined per pilot subcarrier against unit average channel power,
    so with a unit-power delay profile the signal power per pilot is 1 and
    the noise variance is simply 10^(-snr_db/10).
    """
    return float(10.0 ** (-snr_db / 10.0))
