"""Deterministic signal-processing primitives shared by the whole pipeline.

Everything here is a pure function: FFT helpers, zero-phase Butterworth
band-pass, Savitzky-Golay smoothing, prominence-based peak picking,
integer-delay estimation, and a Hann STFT. All public interfaces use Hz;
angular frequency stays internal to transfer-function code elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import (
    InvalidBand,
    InvalidSignal,
    InvalidWindow,
    ShapeMismatch,
    ZeroSignal,
)

__all__ = [
    "SoundSignal",
    "Spectrum",
    "PeakList",
    "fft_forward",
    "ifft_real",
    "spectral_energy",
    "bandpass",
    "savgol_smooth",
    "find_peaks",
    "best_integer_delay",
    "stft",
]


@dataclass(frozen=True)
class SoundSignal:
    """Uniformly sampled mono waveform, dimensionless amplitude."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise InvalidSignal(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1:
            raise InvalidSignal(f"expected a mono 1-D waveform, got ndim={samples.ndim}")
        if samples.size and not np.isfinite(samples).all():
            raise InvalidSignal("waveform contains NaN or Inf")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Spectrum:
    """One-sided complex spectrum (DC through Nyquist) of a real signal."""

    bins: np.ndarray
    freq_resolution: float
    source_length: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        object.__setattr__(self, "bins", bins)
        expected = self.source_length // 2 + 1
        if bins.size != expected:
            raise ShapeMismatch(
                f"one-sided spectrum of length-{self.source_length} signal needs "
                f"{expected} bins, got {bins.size}"
            )

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.freq_resolution


@dataclass(frozen=True)
class PeakList:
    """Detected spectral peaks: bin indices, Hz positions, prominences."""

    indices: np.ndarray
    frequencies: np.ndarray
    prominences: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "frequencies", np.asarray(self.frequencies, dtype=np.float64))
        object.__setattr__(self, "prominences", np.asarray(self.prominences, dtype=np.float64))
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ShapeMismatch("peak indices must be strictly increasing")

    def __len__(self):
        return self.indices.size


def _as_finite_1d(x, name="signal") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidSignal(f"{name} must be 1-D, got ndim={x.ndim}")
    if x.size == 0:
        raise InvalidSignal(f"{name} is empty")
    if not np.isfinite(x).all():
        raise InvalidSignal(f"{name} contains NaN or Inf")
    return x


def fft_forward(samples, sample_rate: float = 1.0) -> Spectrum:
    """One-sided DFT of a real sequence (unnormalized, numpy convention)."""
    x = _as_finite_1d(samples)
    if x.size < 2:
        raise InvalidSignal("need at least 2 samples")
    bins = np.fft.rfft(x)
    return Spectrum(bins=bins, freq_resolution=sample_rate / x.size, source_length=x.size)


def ifft_real(spectrum: Spectrum) -> np.ndarray:
    """Invert a one-sided spectrum back to its real sequence.

    DC (and Nyquist for even lengths) must be real to within 1e-9 of the
    spectrum's scale, otherwise the input cannot have come from a real signal.
    """
    bins = spectrum.bins
    n = spectrum.source_length
    tol = 1e-9 * max(1.0, float(np.max(np.abs(bins))) if bins.size else 1.0)
    if abs(bins[0].imag) > tol:
        raise InvalidSignal(f"DC bin has imaginary part {bins[0].imag:g}")
    if n % 2 == 0 and abs(bins[-1].imag) > tol:
        raise InvalidSignal(f"Nyquist bin has imaginary part {bins[-1].imag:g}")
    return np.fft.irfft(bins, n=n)


def spectral_energy(spectrum: Spectrum) -> float:
    """Time-domain energy sum(x**2) computed from the one-sided spectrum."""
    mag2 = np.abs(spectrum.bins) ** 2
    n = spectrum.source_length
    weights = np.full(mag2.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * mag2) / n)


def bandpass(samples, sample_rate: float, low: float, high: float, order: int = 7) -> np.ndarray:
    """Zero-phase Butterworth band-pass (forward-backward, so no phase shift).

    Effective attenuation is double the single-pass rolloff of the given order.
    """
    x = _as_finite_1d(samples)
    nyq = sample_rate / 2.0
    if not (0.0 < low < high < nyq):
        raise InvalidBand(f"need 0 < low < high < {nyq:g} Hz, got ({low:g}, {high:g})")
    if order < 1:
        raise InvalidBand(f"order must be >= 1, got {order}")
    sos = sps.butter(order, [low, high], btype="bandpass", fs=sample_rate, output="sos")
    padlen = min(3 * (2 * sos.shape[0] + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def savgol_smooth(values, window_hz: float, freq_resolution: float, poly_order: int = 2) -> np.ndarray:
    """Savitzky-Golay smoothing with the window given in Hz.

    Window length is ``round(window_hz / freq_resolution)`` forced odd and at
    least ``poly_order + 1``. Boundaries use local polynomial fits, so any
    polynomial of degree <= poly_order passes through unchanged.
    """
    x = _as_finite_1d(values, "values")
    if freq_resolution <= 0 or window_hz <= 0:
        raise InvalidWindow("window_hz and freq_resolution must be positive")
    win = int(round(window_hz / freq_resolution))
    win = max(win, poly_order + 1)
    if win % 2 == 0:
        win += 1
    if win > x.size:
        raise InvalidWindow(f"window of {win} bins exceeds sequence length {x.size}")
    return sps.savgol_filter(x, window_length=win, polyorder=poly_order, mode="interp")


def find_peaks(values, min_prominence: float, min_distance_bins: int = 1,
               freq_resolution: float = 1.0) -> PeakList:
    """Local maxima with topographic prominence >= min_prominence.

    Peaks closer than ``min_distance_bins`` are resolved in favor of the
    higher one (scipy semantics). Adding a constant to ``values`` does not
    change the result.
    """
    x = _as_finite_1d(values, "values")
    idx, props = sps.find_peaks(
        x, prominence=min_prominence, distance=max(1, int(min_distance_bins))
    )
    return PeakList(
        indices=idx,
        frequencies=idx * freq_resolution,
        prominences=props["prominences"],
    )


def best_integer_delay(a, b, max_lag: int) -> int:
    """Delay d in [-max_lag, max_lag] maximizing correlation of a with b advanced by d.

    If ``b`` is ``a`` delayed by d samples, returns d. Correlation is the
    zero-padded cross-correlation normalized by the full-signal norms, so the
    argmax matches the unnormalized one.
    """
    a = _as_finite_1d(a, "a")
    b = _as_finite_1d(b, "b")
    if a.size != b.size:
        raise ShapeMismatch(f"length mismatch: {a.size} vs {b.size}")
    if not 0 <= max_lag < a.size / 2:
        raise ValueError(f"max_lag must be in [0, {a.size // 2}), got {max_lag}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroSignal("cannot estimate delay of an all-zero signal")
    # full correlation index m corresponds to delay d = (len - 1) - m
    corr = sps.correlate(a, b, mode="full", method="auto")
    center = a.size - 1
    window = corr[center - max_lag : center + max_lag + 1]
    # window index i -> delay d = max_lag - i; argmax takes first on ties
    return int(max_lag - np.argmax(window))


def stft(samples, window_len: int, hop: int) -> np.ndarray:
    """Hann-windowed short-time Fourier transform, frames x bins.

    Frame count is floor((len - window_len) / hop) + 1; no padding.
    """
    x = _as_finite_1d(samples)
    if window_len < 2 or window_len & (window_len - 1) != 0:
        raise InvalidSignal(f"window_len must be a power of two, got {window_len}")
    if not 1 <= hop <= window_len:
        raise InvalidSignal(f"hop must be in [1, {window_len}], got {hop}")
    if x.size < window_len:
        raise InvalidSignal(f"signal of {x.size} samples shorter than window {window_len}")
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]
    window = sps.get_window("hann", window_len, fftbins=True)
    return np.fft.rfft(frames * window, axis=1)
