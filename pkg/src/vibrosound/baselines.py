"""Reference recovery methods: single channel, naive averaging, delay-and-sum,
and calibration-based per-channel inverse filtering.

The calibrated path estimates one FIR inverse filter per channel from a known
reference recording (autocorrelation-windowed normal equations with a tiny
relative ridge), then averages the inverted channels of any new recording.
Filters are centered, so non-causal "advance" components are representable
up to half the tap count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import correlate, fftconvolve

from . import dsp
from .dsp import SoundSignal
from .errors import ShapeMismatch, ZeroSignal
from .modal import VibrationGrid

__all__ = [
    "FilterBank",
    "single_point",
    "average_all",
    "delay_and_sum",
    "estimate_inverse_filters",
    "apply_calibrated",
]


@dataclass(frozen=True)
class FilterBank:
    """Per-channel FIR inverse filters, time origin at ``taps // 2``."""

    filters: np.ndarray  # (n_points, 2, taps)
    sample_rate: int
    flagged: np.ndarray = field(default=None)  # (n_points, 2) bool, silent channels

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.float64)
        object.__setattr__(self, "filters", filters)
        if filters.ndim != 3 or filters.shape[1] != 2 or filters.shape[2] < 1:
            raise ShapeMismatch(f"filters must be (n_points, 2, taps), got {filters.shape}")
        if not np.isfinite(filters).all():
            raise ValueError("filter coefficients contain NaN or Inf")
        flagged = self.flagged
        if flagged is None:
            flagged = np.zeros(filters.shape[:2], dtype=bool)
        flagged = np.asarray(flagged, dtype=bool)
        if flagged.shape != filters.shape[:2]:
            raise ShapeMismatch(f"flagged {flagged.shape} does not match {filters.shape[:2]}")
        object.__setattr__(self, "flagged", flagged)

    @property
    def taps(self) -> int:
        return self.filters.shape[2]

    @property
    def n_points(self) -> int:
        return self.filters.shape[0]

    @property
    def center(self) -> int:
        return self.taps // 2


def _peak_normalize(x: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(x)))
    if peak == 0.0:
        raise ZeroSignal("signal is identically zero")
    return x / peak


def single_point(grid: VibrationGrid, point: int, axis: int) -> SoundSignal:
    """One raw channel, peak-normalized. The classic single-point recovery."""
    if not 0 <= point < grid.n_points:
        raise IndexError(f"point {point} out of range [0, {grid.n_points})")
    if axis not in (0, 1):
        raise IndexError(f"axis must be 0 or 1, got {axis}")
    return SoundSignal(_peak_normalize(grid.data[point, axis].copy()), grid.sample_rate)


def average_all(grid: VibrationGrid, normalize: bool = True) -> SoundSignal:
    """Plain mean of all 2N channels; phase cancellations and all."""
    mean = grid.channels().mean(axis=0)
    if normalize:
        mean = _peak_normalize(mean)
    return SoundSignal(mean, grid.sample_rate)


def _shift(x: np.ndarray, advance: int) -> np.ndarray:
    """Advance x by ``advance`` samples, zero-filling the vacated edge."""
    out = np.zeros_like(x)
    if advance > 0:
        out[: x.size - advance] = x[advance:]
    elif advance < 0:
        out[-advance:] = x[: x.size + advance]
    else:
        out[:] = x
    return out


def delay_and_sum(grid: VibrationGrid, reference: int = 0, max_lag: int = 256,
                  normalize: bool = True) -> SoundSignal:
    """Align every channel to a reference channel by one integer delay, then average.

    ``reference`` is a flat channel index (2 * point + axis). All-zero
    channels get delay 0 so the result degrades to plain averaging for them.
    """
    channels = grid.channels()
    if not 0 <= reference < channels.shape[0]:
        raise IndexError(f"reference channel {reference} out of range")
    ref = channels[reference]
    if not np.any(ref):
        raise ZeroSignal("reference channel is identically zero")
    acc = np.zeros(grid.n_samples)
    for ch in channels:
        delay = dsp.best_integer_delay(ref, ch, max_lag) if np.any(ch) else 0
        acc += _shift(ch, delay)
    acc /= channels.shape[0]
    if normalize:
        acc = _peak_normalize(acc)
    return SoundSignal(acc, grid.sample_rate)


def estimate_inverse_filters(ref_grid: VibrationGrid, ref_source: SoundSignal,
                             taps: int = 4096, ridge_rel: float = 1e-8) -> FilterBank:
    """Least-squares FIR inverse per channel against a known reference signal.

    Solves the autocorrelation-windowed normal equations
    (R + ridge * r0 * I) h = b with R the channel autocorrelation Toeplitz
    matrix and b the channel/reference cross-correlation, target aligned to
    the centered filter origin. A silent channel yields a zero filter and is
    flagged rather than failing the whole bank.
    """
    t = ref_grid.n_samples
    if len(ref_source) != t:
        raise ShapeMismatch(f"reference has {len(ref_source)} samples, grid has {t}")
    if not 1 <= taps <= t // 4:
        raise ValueError(f"taps must be in [1, {t // 4}], got {taps}")
    s = ref_source.samples
    center = taps // 2
    filters = np.zeros((ref_grid.n_points, 2, taps))
    flagged = np.zeros((ref_grid.n_points, 2), dtype=bool)
    for n in range(ref_grid.n_points):
        for a in range(2):
            v = ref_grid.data[n, a]
            full_auto = correlate(v, v, mode="full", method="fft")
            r = full_auto[t - 1 : t - 1 + taps]
            if r[0] <= 0.0:
                flagged[n, a] = True
                warnings.warn(
                    f"channel ({n}, {a}) is silent; inverse filter set to zero",
                    stacklevel=2,
                )
                continue
            # b[tau] = sum_t s[t] v[t + center - tau]
            full_cross = correlate(s, v, mode="full", method="fft")
            b = full_cross[t - 1 - center : t - 1 - center + taps]
            r = r.copy()
            r[0] += ridge_rel * r[0]
            filters[n, a] = solve_toeplitz(r, b)
    return FilterBank(filters=filters, sample_rate=ref_grid.sample_rate, flagged=flagged)


def _convolve_centered(x: np.ndarray, h: np.ndarray, center: int) -> np.ndarray:
    return fftconvolve(x, h, mode="full")[center : center + x.size]


def apply_calibrated(grid: VibrationGrid, bank: FilterBank,
                     normalize: bool = True) -> SoundSignal:
    """Invert every channel with its calibrated filter and average the results."""
    if bank.n_points != grid.n_points:
        raise ShapeMismatch(f"bank has {bank.n_points} points, grid has {grid.n_points}")
    if bank.sample_rate != grid.sample_rate:
        raise ShapeMismatch(
            f"bank rate {bank.sample_rate} Hz differs from grid rate {grid.sample_rate} Hz"
        )
    acc = np.zeros(grid.n_samples)
    for n in range(grid.n_points):
        for a in range(2):
            acc += _convolve_centered(grid.data[n, a], bank.filters[n, a], bank.center)
    acc /= 2 * grid.n_points
    if normalize:
        acc = _peak_normalize(acc)
    return SoundSignal(acc, grid.sample_rate)
