"""Physics-guided recovery of ambient sound from multi-point two-axis
surface-vibration measurements, with a modal simulator for end-to-end
verification."""

from .baselines import (
    FilterBank,
    apply_calibrated,
    average_all,
    delay_and_sum,
    estimate_inverse_filters,
    single_point,
)
from .dsp import PeakList, SoundSignal, Spectrum
from .extraction import ExtractedModes, ExtractionConfig, extract_modes
from .metrics import MetricReport, aligned_correlation, si_mr_stft
from .modal import (
    Mode,
    ModeSet,
    SceneParams,
    VibrationGrid,
    analytic_plate_modes,
    impulse_response,
    synthesize,
    transfer_function,
)
from .recovery import RecoveryConfig, RecoveryResult, recover_sound, spectral_flatten_check

__version__ = "0.1.0"

__all__ = [
    "FilterBank",
    "apply_calibrated",
    "average_all",
    "delay_and_sum",
    "estimate_inverse_filters",
    "single_point",
    "PeakList",
    "SoundSignal",
    "Spectrum",
    "ExtractedModes",
    "ExtractionConfig",
    "extract_modes",
    "MetricReport",
    "aligned_correlation",
    "si_mr_stft",
    "Mode",
    "ModeSet",
    "SceneParams",
    "VibrationGrid",
    "analytic_plate_modes",
    "impulse_response",
    "synthesize",
    "transfer_function",
    "RecoveryConfig",
    "RecoveryResult",
    "recover_sound",
    "spectral_flatten_check",
]
