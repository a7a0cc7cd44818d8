"""Shared scene builders for the test suite."""

import numpy as np

from vibrosound.dsp import SoundSignal
from vibrosound.modal import ModeSet, SceneParams, analytic_plate_modes, synthesize


def drum_modes(rows=10, cols=10, mode_count=5, f_base=250.0, nx=4, ny=4,
               damping=0.01) -> ModeSet:
    """Drum-like plate: 5 modes between 500 and 2500 Hz on a 10x10 grid."""
    return analytic_plate_modes(nx, ny, (rows, cols), mode_count, f_base, damping)


def synth_snr(source: SoundSignal, modeset: ModeSet, snr_db, seed=0):
    """Synthesize a grid whose overall RMS is 1 with per-channel SNR in dB.

    A noiseless probe fixes the gamma that normalizes the clean grid RMS to
    1.0, then noise_std = 10**(-snr/20). snr_db=None means noiseless.
    """
    probe = synthesize(source, modeset, SceneParams(gamma=1.0, noise_std=0.0))
    rms = float(np.sqrt(np.mean(probe.data**2)))
    gamma = 1.0 / rms
    noise_std = 0.0 if snr_db is None else 10.0 ** (-snr_db / 20.0)
    scene = SceneParams(gamma=gamma, noise_std=noise_std)
    return synthesize(source, modeset, scene, seed=seed)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(np.dot(a, b) / denom) if denom > 0 else 0.0
