"""Robust mode identification from a vibration grid.

Three stages, each enforcing a different kind of consistency:

1. spectral  -- peaks of the smoothed per-bin standard deviation of channel
                spectra reveal candidate mode frequencies;
2. spatial   -- shape gradients recovered at each candidate are pruned when
                near-duplicates of an already-kept shape;
3. physical  -- shapes whose spatial total variation is an upward outlier
                against the monotone TV-vs-frequency trend are rejected
                (eigenmode complexity grows with frequency, so a busy shape
                at a low frequency is a numerical artifact).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.signal import butter, sosfiltfilt

from . import dsp
from .dsp import PeakList
from .errors import DegenerateReference, InvalidBand, ShapeMismatch
from .modal import DEFAULT_DAMPING_RATIO, Mode, ModeSet, VibrationGrid

__all__ = [
    "ExtractionConfig",
    "ExtractedModes",
    "std_spectrum",
    "robust_find_peaks",
    "recover_mode_shapes",
    "prune_correlated",
    "shape_total_variation",
    "tv_monotonicity_filter",
    "extract_modes",
]


@dataclass(frozen=True)
class ExtractionConfig:
    """Thresholds for the three-stage extraction.

    ``peak_prominence`` is a multiple of the median smoothed sigma inside the
    band, so detection adapts to overall loudness. ``reference_point`` /
    ``reference_axis`` of None select the channel with maximum in-band energy.
    ``pool_axes=False`` computes sigma per axis over points only and averages
    the two curves instead of pooling all 2N channels.
    """

    savgol_window_hz: float = 5.0
    peak_prominence: float = 3.0
    min_peak_separation_hz: float = 10.0
    shape_corr_threshold: float = 0.95
    tv_outlier_zscore: float = 2.5
    band_low_hz: float = 50.0
    band_high_hz: float = 10000.0
    bandpass_order: int = 7
    pool_axes: bool = True
    reference_point: int | None = None
    reference_axis: int | None = None
    damping_ratio: float = DEFAULT_DAMPING_RATIO

    def __post_init__(self):
        positive = {
            "savgol_window_hz": self.savgol_window_hz,
            "peak_prominence": self.peak_prominence,
            "min_peak_separation_hz": self.min_peak_separation_hz,
            "tv_outlier_zscore": self.tv_outlier_zscore,
            "band_low_hz": self.band_low_hz,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 < self.shape_corr_threshold < 1:
            raise ValueError(
                f"shape_corr_threshold must be in (0, 1), got {self.shape_corr_threshold}"
            )


@dataclass(frozen=True)
class ExtractedModes:
    """Extraction result: the surviving modes plus per-candidate diagnostics."""

    mode_set: ModeSet
    prominences: np.ndarray
    total_variations: np.ndarray | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def frequencies(self) -> np.ndarray:
        return self.mode_set.frequencies


def _effective_band(sample_rate: float, low: float, high: float) -> tuple:
    """Clamp the analysis band below Nyquist so arbitrary rates stay usable."""
    high = min(high, 0.4999 * sample_rate)
    if not 0 < low < high:
        raise InvalidBand(
            f"band ({low:g}, {high:g}) Hz is empty below Nyquist {sample_rate / 2:g} Hz"
        )
    return low, high


def _channel_spectra(grid: VibrationGrid, band_low: float, band_high: float,
                     order: int) -> np.ndarray:
    """Band-pass every channel, then one-sided FFT: complex (N, 2, F)."""
    low, high = _effective_band(grid.sample_rate, band_low, band_high)
    sos = butter(order, [low, high], btype="bandpass", fs=grid.sample_rate, output="sos")
    padlen = min(3 * (2 * sos.shape[0] + 1), grid.n_samples - 1)
    filtered = sosfiltfilt(sos, grid.data, axis=-1, padlen=padlen)
    return np.fft.rfft(filtered, axis=-1)


def _sigma_from_spectra(spectra: np.ndarray, pool_axes: bool) -> np.ndarray:
    mags = np.abs(spectra)  # (N, 2, F)
    if pool_axes:
        flat = mags.reshape(-1, mags.shape[-1])
        return np.std(flat, axis=0)
    return np.std(mags, axis=0).mean(axis=0)


def preprocess_grid(grid: VibrationGrid, band_low: float = 50.0,
                    band_high: float = 10000.0, order: int = 7) -> VibrationGrid:
    """Zero-phase band-pass of every channel; the standard measurement prep.

    The extraction stages filter internally either way; applying this once up
    front lets recovery and the baselines work on the same filtered signals.
    """
    low, high = _effective_band(grid.sample_rate, band_low, band_high)
    sos = butter(order, [low, high], btype="bandpass", fs=grid.sample_rate, output="sos")
    padlen = min(3 * (2 * sos.shape[0] + 1), grid.n_samples - 1)
    filtered = sosfiltfilt(sos, grid.data, axis=-1, padlen=padlen)
    return VibrationGrid(
        data=filtered,
        sample_rate=grid.sample_rate,
        point_coords=grid.point_coords,
        grid_shape=grid.grid_shape,
    )


def std_spectrum(grid: VibrationGrid, band_low: float = 50.0, band_high: float = 10000.0,
                 order: int = 7, pool_axes: bool = True) -> np.ndarray:
    """Per-bin population std of channel spectrum magnitudes after band-passing.

    By default the population is all 2N channels (both axes of every point).
    """
    return _sigma_from_spectra(
        _channel_spectra(grid, band_low, band_high, order), pool_axes
    )


def robust_find_peaks(grid: VibrationGrid, config: ExtractionConfig = ExtractionConfig()) -> PeakList:
    """Candidate mode frequencies: prominent peaks of the smoothed sigma curve."""
    spectra = _channel_spectra(
        grid, config.band_low_hz, config.band_high_hz, config.bandpass_order
    )
    return _peaks_from_spectra(grid, spectra, config)


def _peaks_from_spectra(grid: VibrationGrid, spectra: np.ndarray,
                        config: ExtractionConfig) -> PeakList:
    fres = grid.sample_rate / grid.n_samples
    sigma = _sigma_from_spectra(spectra, config.pool_axes)
    smoothed = dsp.savgol_smooth(sigma, config.savgol_window_hz, fres)
    low, high = _effective_band(grid.sample_rate, config.band_low_hz, config.band_high_hz)
    freqs = np.arange(sigma.size) * fres
    in_band = (freqs >= low) & (freqs <= high)
    if not in_band.any():
        return PeakList(np.array([], dtype=int), np.array([]), np.array([]))
    floor = 1e-12 * max(1.0, float(np.max(np.abs(smoothed))))
    threshold = max(config.peak_prominence * float(np.median(smoothed[in_band])), floor)
    distance = max(1, int(round(config.min_peak_separation_hz / fres)))
    peaks = dsp.find_peaks(smoothed, threshold, distance, fres)
    keep = (peaks.frequencies >= low) & (peaks.frequencies <= high)
    return PeakList(peaks.indices[keep], peaks.frequencies[keep], peaks.prominences[keep])


def _shapes_from_spectra(spectra: np.ndarray, bins, ref_point: int,
                         ref_axis: int) -> np.ndarray:
    shapes = np.empty((len(bins), spectra.shape[0], 2))
    for k, b in enumerate(bins):
        v = spectra[:, :, b]
        ref = spectra[ref_point, ref_axis, b]
        if abs(ref) == 0.0:
            raise DegenerateReference(
                f"reference channel ({ref_point}, {ref_axis}) silent at bin {b}"
            )
        denom = np.mean(np.abs(v)) * abs(ref)
        shapes[k] = np.real(v * np.conj(ref)) / denom
    return shapes


def recover_mode_shapes(grid: VibrationGrid, freqs_hz, reference_point: int,
                        reference_axis: int = 0, band_low: float = 50.0,
                        band_high: float = 10000.0, order: int = 7) -> np.ndarray:
    """Shape gradients at the given frequencies, phase-aligned to a reference channel.

    For each frequency the two-axis spectra of all points are rotated by the
    conjugate phase of the reference channel and normalized by the mean
    magnitude over all points and axes; the real part is the shape gradient
    estimate (K, N, 2). The reference channel must be nonzero at every
    requested frequency.
    """
    spectra = _channel_spectra(grid, band_low, band_high, order)
    fres = grid.sample_rate / grid.n_samples
    n_bins = spectra.shape[-1]
    bins = []
    for f in np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64)):
        b = int(round(f / fres))
        if not 0 <= b < n_bins:
            raise ValueError(f"{f:g} Hz maps outside the spectrum ({n_bins} bins)")
        bins.append(b)
    return _shapes_from_spectra(spectra, bins, reference_point, reference_axis)


def _flat_corr(a: np.ndarray, b: np.ndarray) -> float:
    """|Pearson correlation| of two flattened shapes; 0 when either is constant."""
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(abs(np.dot(a, b)) / denom)


def prune_correlated(shapes: np.ndarray, freqs, threshold: float,
                     prominences=None) -> tuple:
    """Drop near-duplicate shapes, scanning ascending in frequency.

    When a candidate correlates >= threshold with an already-kept shape the
    one with the larger sigma-peak prominence wins; without prominences the
    earlier (lower-frequency) mode wins. Returns (shapes, freqs, kept_indices).
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    kept: list[int] = []
    for i in range(shapes.shape[0]):
        conflicts = [j for j in kept if _flat_corr(shapes[i], shapes[j]) >= threshold]
        if not conflicts:
            kept.append(i)
            continue
        if prominences is not None and all(
            prominences[i] > prominences[j] for j in conflicts
        ):
            kept = [j for j in kept if j not in conflicts]
            kept.append(i)
    kept.sort()
    idx = np.array(kept, dtype=int)
    return shapes[idx], freqs[idx], idx


def shape_total_variation(shape: np.ndarray, grid_dims: tuple) -> float:
    """Summed forward-difference magnitude of the 2-vector shape field.

    Points must be row-major on a rows x cols grid; out-of-bounds neighbors
    are omitted.
    """
    rows, cols = grid_dims
    shape = np.asarray(shape, dtype=np.float64)
    if shape.shape != (rows * cols, 2):
        raise ShapeMismatch(f"shape {shape.shape} does not fit a {rows}x{cols} grid")
    grid_field = shape.reshape(rows, cols, 2)
    dx = np.linalg.norm(np.diff(grid_field, axis=1), axis=-1)
    dy = np.linalg.norm(np.diff(grid_field, axis=0), axis=-1)
    return float(dx.sum() + dy.sum())


def tv_monotonicity_filter(shapes: np.ndarray, freqs, tvs, zscore: float = 2.5) -> tuple:
    """Reject shapes whose TV sits far above the monotone TV-vs-frequency trend.

    The trend is an isotonic (nondecreasing) regression; residual spread is
    estimated robustly as 1.4826 * MAD. Only upward outliers are discarded;
    with fewer than 3 candidates everything passes. Returns
    (shapes, freqs, kept_indices).
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    tvs = np.asarray(tvs, dtype=np.float64)
    k = tvs.size
    if k < 3:
        return shapes, freqs, np.arange(k)
    trend = isotonic_regression(tvs, increasing=True).x
    resid = tvs - trend
    mad = np.median(np.abs(resid - np.median(resid)))
    sigma_rob = 1.4826 * mad
    atol = 1e-12 * max(1.0, float(np.max(np.abs(tvs))))
    keep = resid <= zscore * sigma_rob + atol
    idx = np.flatnonzero(keep)
    return shapes[idx], freqs[idx], idx


def extract_modes(grid: VibrationGrid, config: ExtractionConfig = ExtractionConfig()) -> ExtractedModes:
    """Full three-stage extraction; empty result is valid when nothing survives.

    Output modes carry the fixed damping ratio from the config and unit
    coupling (couplings are recovered later, jointly with the sound).
    The TV stage needs a structured grid and is skipped when the grid has no
    (rows, cols) layout.
    """
    spectra = _channel_spectra(
        grid, config.band_low_hz, config.band_high_hz, config.bandpass_order
    )
    peaks = _peaks_from_spectra(grid, spectra, config)

    ref_point, ref_axis = config.reference_point, config.reference_axis
    if ref_point is None or ref_axis is None:
        energy = np.sum(np.abs(spectra) ** 2, axis=-1)
        flat = int(np.argmax(energy))
        auto_point, auto_axis = divmod(flat, 2)
        ref_point = auto_point if ref_point is None else ref_point
        ref_axis = auto_axis if ref_axis is None else ref_axis

    records = [
        {"freq_hz": float(f), "bin": int(b), "prominence": float(p),
         "tv": None, "dropped_at": None}
        for f, b, p in zip(peaks.frequencies, peaks.indices, peaks.prominences)
    ]
    diagnostics = {
        "reference_channel": [int(ref_point), int(ref_axis)],
        "candidates": records,
        "tv_stage_ran": False,
    }

    if len(peaks) == 0:
        empty = ModeSet(modes=(), point_coords=grid.point_coords, grid_shape=grid.grid_shape)
        return ExtractedModes(empty, np.array([]), None, diagnostics)

    shapes = _shapes_from_spectra(spectra, peaks.indices, ref_point, ref_axis)
    shapes, freqs, kept = prune_correlated(
        shapes, peaks.frequencies, config.shape_corr_threshold, peaks.prominences
    )
    kept_set = set(kept.tolist())
    for i, rec in enumerate(records):
        if i not in kept_set:
            rec["dropped_at"] = "correlation"
    prominences = peaks.prominences[kept]

    tvs = None
    if grid.grid_shape is not None and shapes.shape[0] > 0:
        diagnostics["tv_stage_ran"] = True
        tvs = np.array([shape_total_variation(s, grid.grid_shape) for s in shapes])
        for local, orig in enumerate(kept):
            records[orig]["tv"] = float(tvs[local])
        shapes, freqs, tv_kept = tv_monotonicity_filter(
            shapes, freqs, tvs, config.tv_outlier_zscore
        )
        dropped = set(kept.tolist()) - set(kept[tv_kept].tolist())
        for orig in dropped:
            records[orig]["dropped_at"] = "tv_monotonicity"
        prominences = prominences[tv_kept]
        tvs = tvs[tv_kept]

    modes = tuple(
        Mode(
            natural_freq=float(f),
            damping_ratio=config.damping_ratio,
            coupling=1.0,
            shape_grad=s,
        )
        for f, s in zip(freqs, shapes)
    )
    mode_set = ModeSet(modes=modes, point_coords=grid.point_coords, grid_shape=grid.grid_shape)
    return ExtractedModes(mode_set, prominences, tvs, diagnostics)
