"""Spoofing detection over simulated OFDM channel state information.

A time-varying multipath channel is observed through noisy, phase-distorted
pilot estimates; an adaptive Kalman filter jointly tracks the channel and
the per-packet phase distortion, and a chi-squared test on the whitened
innovation decides whether each observation came from the tracked
transmitter.
"""

from .channel import ChannelProfile, TimeChannel, init_channel, make_profile, step_channel
from .config import ChannelConfig, GridConfig, ScenarioConfig
from .detector import (
    DetectionRecord,
    calibrate_empirical_threshold,
    decide,
    magnitude_diff_statistic,
    test_statistic,
    threshold,
)
from .errors import CalibrationError, ConfigError, NumericalError, SingularMatrixError
from .estimator import (
    KalmanState,
    PhaseSearchConfig,
    estimate_phase,
    filter_step,
    gain,
    init_state,
    negative_log_likelihood,
    predict,
    update,
)
from .harness import (
    RocResult,
    SweepPoint,
    SweepResult,
    derive_trial_seed,
    roc_curve,
    roc_points,
    run_batch,
    run_trial,
    sweep,
    trial_records,
    write_csv,
)
from .numerics import bessel_j0, chi2_cdf, chi2_quantile, hermitian_solve
from .observation import (
    CsiObservation,
    PhaseDistortion,
    PilotGrid,
    draw_phase_distortion,
    observe,
    partial_dft,
    phase_error_matrix,
    snr_to_noise_var,
)

__version__ = "0.1.0"
