"""Quantitative comparison of a recovered signal against the reference source.

The headline number is a scale-invariant multi-resolution STFT distance:
the candidate is first rescaled by the least-squares optimal scalar, then for
each window size a spectral-convergence term and a log-magnitude term are
computed and averaged across resolutions. Smaller is better; zero means the
magnitude spectrograms agree at every resolution. It is reference-based and
deliberately not symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import correlate

from . import dsp
from .dsp import SoundSignal
from .errors import DegenerateReference, ShapeMismatch, ZeroSignal

__all__ = [
    "MetricReport",
    "LagCorrelation",
    "si_mr_stft",
    "aligned_correlation",
    "DEFAULT_RESOLUTIONS",
]

DEFAULT_RESOLUTIONS = (512, 1024, 2048)
_LOG_EPS = 1e-7


class LagCorrelation(NamedTuple):
    correlation: float  # signed Pearson value at the best |correlation| lag
    lag: int


@dataclass(frozen=True)
class MetricReport:
    si_mr_stft: float
    max_xcorr: float
    best_lag: int
    per_resolution: tuple  # of (window, spectral_convergence, log_magnitude)

    def to_dict(self) -> dict:
        return {
            "si_mr_stft": self.si_mr_stft,
            "max_xcorr": self.max_xcorr,
            "best_lag": self.best_lag,
            "per_resolution": [
                {"window": int(w), "spectral_convergence": sc, "log_magnitude": lm}
                for w, sc, lm in self.per_resolution
            ],
        }


def _common_signals(candidate: SoundSignal, reference: SoundSignal):
    if candidate.sample_rate != reference.sample_rate:
        raise ShapeMismatch(
            f"sample rates differ: {candidate.sample_rate} vs {reference.sample_rate}"
        )
    n = min(len(candidate), len(reference))
    return candidate.samples[:n].copy(), reference.samples[:n].copy()


def si_mr_stft(candidate: SoundSignal, reference: SoundSignal,
               resolutions=DEFAULT_RESOLUTIONS, max_lag: int | None = None) -> MetricReport:
    """Scale-invariant multi-resolution STFT distance plus best-lag correlation.

    The candidate is rescaled by <c, r> / <c, c> before any spectral
    comparison, so the distance ignores playback volume entirely.
    """
    cand, ref = _common_signals(candidate, reference)
    if not np.any(ref):
        raise DegenerateReference("reference signal is silent")
    cc = float(np.dot(cand, cand))
    scale = float(np.dot(cand, ref)) / cc if cc > 0 else 1.0
    cand = cand * scale

    per_res = []
    for window in resolutions:
        hop = max(1, window // 4)
        mag_ref = np.abs(dsp.stft(ref, window, hop))
        mag_cand = np.abs(dsp.stft(cand, window, hop))
        denom = float(np.linalg.norm(mag_ref))
        sc = float(np.linalg.norm(mag_ref - mag_cand)) / denom if denom > 0 else 0.0
        lm = float(np.mean(np.abs(np.log(mag_ref + _LOG_EPS) - np.log(mag_cand + _LOG_EPS))))
        per_res.append((window, sc, lm))
    distance = float(np.mean([sc + lm for _, sc, lm in per_res]))

    if max_lag is None:
        max_lag = min(ref.size // 2 - 1, candidate.sample_rate // 10)
    if np.any(cand):
        corr = aligned_correlation(candidate, reference, max_lag)
    else:
        corr = LagCorrelation(0.0, 0)
    return MetricReport(
        si_mr_stft=distance,
        max_xcorr=corr.correlation,
        best_lag=corr.lag,
        per_resolution=tuple(per_res),
    )


def aligned_correlation(candidate: SoundSignal, reference: SoundSignal,
                        max_lag: int) -> LagCorrelation:
    """Largest |Pearson correlation| over integer lags, sign preserved.

    Lag d compares reference[t] with candidate[t + d] on their overlap, each
    segment centered and normalized per lag, so a delayed copy scores exactly
    +-1 at its true lag.
    """
    cand, ref = _common_signals(candidate, reference)
    t = ref.size
    if not np.any(ref) or not np.any(cand):
        raise ZeroSignal("cannot correlate a silent signal")
    if not 0 <= max_lag < t:
        raise ValueError(f"max_lag must be in [0, {t}), got {max_lag}")

    lags = np.arange(-max_lag, max_lag + 1)
    # cross term: sum_t ref[t] * cand[t + d] = correlate(ref, cand)[t - 1 - d]
    full = correlate(ref, cand, mode="full", method="fft")
    sxy = full[t - 1 - lags]

    cum_r = np.concatenate([[0.0], np.cumsum(ref)])
    cum_r2 = np.concatenate([[0.0], np.cumsum(ref**2)])
    cum_c = np.concatenate([[0.0], np.cumsum(cand)])
    cum_c2 = np.concatenate([[0.0], np.cumsum(cand**2)])

    overlap = t - np.abs(lags)
    # reference segment: [0, t-d) for d >= 0, [-d, t) for d < 0; candidate mirrored
    r_lo = np.where(lags >= 0, 0, -lags)
    c_lo = np.where(lags >= 0, lags, 0)
    sx = cum_r[r_lo + overlap] - cum_r[r_lo]
    sxx = cum_r2[r_lo + overlap] - cum_r2[r_lo]
    sy = cum_c[c_lo + overlap] - cum_c[c_lo]
    syy = cum_c2[c_lo + overlap] - cum_c2[c_lo]

    var_x = sxx - sx**2 / overlap
    var_y = syy - sy**2 / overlap
    cov = sxy - sx * sy / overlap
    denom = np.sqrt(np.clip(var_x, 0.0, None) * np.clip(var_y, 0.0, None))
    with np.errstate(invalid="ignore", divide="ignore"):
        pearson = np.where(denom > 0, cov / denom, 0.0)
    best = int(np.argmax(np.abs(pearson)))
    return LagCorrelation(float(pearson[best]), int(lags[best]))
