"""Deterministic excitation and test signals for simulation and calibration."""

from __future__ import annotations

import numpy as np
from scipy.signal import chirp as _chirp

from .dsp import SoundSignal

__all__ = ["clap", "log_chirp", "multiband", "tone"]


def _normalized(x: np.ndarray, sample_rate: int, peak: float = 0.9) -> SoundSignal:
    m = float(np.max(np.abs(x)))
    if m > 0:
        x = x * (peak / m)
    return SoundSignal(x, sample_rate)


def tone(freq: float, duration: float, sample_rate: int, peak: float = 0.9) -> SoundSignal:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return _normalized(np.sin(2 * np.pi * freq * t), sample_rate, peak)


def clap(duration: float = 1.0, sample_rate: int = 22000, seed: int = 0,
         decay_ms: float = 4.0) -> SoundSignal:
    """Broadband impact: a few-ms exponentially decaying noise burst.

    Useful as excitation for mode extraction since it carries energy at every
    frequency.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    burst = rng.standard_normal(n) * np.exp(-t / (decay_ms * 1e-3))
    return _normalized(burst, sample_rate)


def log_chirp(duration: float = 2.0, sample_rate: int = 22000, f_start: float = 50.0,
              f_end: float = 10000.0) -> SoundSignal:
    """Logarithmic sweep from f_start to f_end, the usual calibration signal."""
    f_end = min(f_end, 0.45 * sample_rate)
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    sweep = _chirp(t, f0=f_start, f1=f_end, t1=duration, method="logarithmic")
    return _normalized(sweep, sample_rate)


def multiband(duration: float = 3.0, sample_rate: int = 22000, seed: int = 0,
              f_low: float = 120.0, f_high: float = 2800.0, n_notes: int = 10) -> SoundSignal:
    """Music-like test signal: note events across several bands.

    Notes are harmonics-bearing tones at log-spaced frequencies, switched on
    and off by smooth random envelopes, so the spectrum is multiband, the
    waveform is non-stationary like real program material, and the quiet
    stretches are genuinely silent.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    freqs = np.geomspace(f_low, f_high, n_notes)
    out = np.zeros(n)
    for f in freqs:
        # smooth on/off envelope: random walk low-passed by a moving average
        env = np.cumsum(rng.standard_normal(n))
        width = max(1, int(0.05 * sample_rate))
        kernel = np.ones(width) / width
        env = np.convolve(env, kernel, mode="same")
        env = np.clip(env - np.median(env), 0.0, None)
        peak = env.max()
        if peak > 0:
            env /= peak
        phase = rng.uniform(0, 2 * np.pi)
        note = np.sin(2 * np.pi * f * t + phase)
        if 2 * f < 0.45 * sample_rate:
            note += 0.4 * np.sin(2 * np.pi * 2 * f * t + 1.7 * phase)
        out += env * note
    return _normalized(out, sample_rate)
