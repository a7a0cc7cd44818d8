"""Forward model: modal transfer functions, impulse responses, and synthesis
of grid vibrations from a sound source, plus analytic plate modes for
ground-truth simulation.

A vibrating surface is represented by K damped second-order modes. Each mode
maps the driving pressure to a modal coordinate through

    G(w) = coupling / (wk^2 - w^2 + 2j * zeta * wk * w),      w = 2*pi*f,

and the measured two-axis point signals are weighted sums of the modal
responses, the weights being the spatial gradients of the mode shapes at the
measurement points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import SoundSignal, Spectrum
from .errors import AliasError, ShapeMismatch

__all__ = [
    "DEFAULT_DAMPING_RATIO",
    "Mode",
    "ModeSet",
    "VibrationGrid",
    "SceneParams",
    "transfer_function",
    "impulse_response",
    "synthesize",
    "analytic_plate_modes",
]

# Fixed damping used throughout recovery; see RecoveryConfig.
DEFAULT_DAMPING_RATIO = 0.01


@dataclass(frozen=True)
class Mode:
    """One vibration mode: resonance, damping, pressure coupling, shape gradients."""

    natural_freq: float
    damping_ratio: float
    coupling: float
    shape_grad: np.ndarray  # (n_points, 2), x- and y-axis components

    def __post_init__(self):
        grad = np.asarray(self.shape_grad, dtype=np.float64)
        object.__setattr__(self, "shape_grad", grad)
        if self.natural_freq <= 0:
            raise ValueError(f"natural_freq must be positive, got {self.natural_freq}")
        if not 0 < self.damping_ratio < 1:
            raise ValueError(f"damping_ratio must be in (0, 1), got {self.damping_ratio}")
        if grad.ndim != 2 or grad.shape[1] != 2:
            raise ShapeMismatch(f"shape_grad must be (n_points, 2), got {grad.shape}")
        if not np.isfinite(grad).all():
            raise ValueError("shape_grad contains NaN or Inf")


@dataclass(frozen=True)
class ModeSet:
    """Modes sorted by ascending natural frequency on a common point set."""

    modes: tuple
    point_coords: np.ndarray  # (n_points, 2)
    grid_shape: tuple | None = None  # (rows, cols) when points form a grid

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        coords = np.asarray(self.point_coords, dtype=np.float64)
        object.__setattr__(self, "point_coords", coords)
        freqs = [m.natural_freq for m in self.modes]
        if any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
            raise ValueError("mode frequencies must be strictly increasing")
        n = coords.shape[0]
        for m in self.modes:
            if m.shape_grad.shape[0] != n:
                raise ShapeMismatch(
                    f"mode at {m.natural_freq:g} Hz has {m.shape_grad.shape[0]} "
                    f"shape rows for {n} points"
                )
        if self.grid_shape is not None:
            rows, cols = self.grid_shape
            if rows * cols != n:
                raise ShapeMismatch(f"grid {rows}x{cols} does not hold {n} points")

    @property
    def n_points(self) -> int:
        return self.point_coords.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.natural_freq for m in self.modes])

    @property
    def couplings(self) -> np.ndarray:
        return np.array([m.coupling for m in self.modes])

    def shape_matrix(self) -> np.ndarray:
        """All shape gradients stacked as (n_modes, n_points, 2)."""
        return np.stack([m.shape_grad for m in self.modes])


@dataclass(frozen=True)
class VibrationGrid:
    """N surface points x 2 axes x T samples of speckle-shift signals."""

    data: np.ndarray  # (n_points, 2, n_samples)
    sample_rate: int
    point_coords: np.ndarray  # (n_points, 2)
    grid_shape: tuple | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        coords = np.asarray(self.point_coords, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "point_coords", coords)
        if data.ndim != 3 or data.shape[1] != 2:
            raise ShapeMismatch(f"data must be (n_points, 2, n_samples), got {data.shape}")
        if data.shape[0] < 1 or data.shape[2] < 2:
            raise ShapeMismatch(f"need N >= 1 and T >= 2, got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("grid data contains NaN or Inf")
        if coords.shape != (data.shape[0], 2):
            raise ShapeMismatch(
                f"point_coords {coords.shape} does not match {data.shape[0]} points"
            )
        if self.grid_shape is not None:
            rows, cols = self.grid_shape
            if rows * cols != data.shape[0]:
                raise ShapeMismatch(
                    f"grid {rows}x{cols} does not hold {data.shape[0]} points"
                )
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def n_points(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    def channels(self) -> np.ndarray:
        """All 2N channels as a (2N, T) array; channel index is 2*point + axis."""
        return self.data.reshape(2 * self.n_points, self.n_samples)


@dataclass(frozen=True)
class SceneParams:
    """Simulation scaling: pressure scale, per-point optical scale, noise level."""

    gamma: float = 1.0
    beta: float | np.ndarray = 1.0
    noise_std: float = 0.0

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "beta", beta)
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if np.any(beta <= 0):
            raise ValueError("beta must be positive elementwise")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    def beta_vector(self, n_points: int) -> np.ndarray:
        if self.beta.size == 1:
            return np.full(n_points, float(self.beta[0]))
        if self.beta.size != n_points:
            raise ShapeMismatch(f"beta has {self.beta.size} entries for {n_points} points")
        return self.beta


def transfer_function(mode: Mode, freqs) -> np.ndarray:
    """Second-order oscillator frequency response at the given frequencies (Hz)."""
    w = 2.0 * np.pi * np.asarray(freqs, dtype=np.float64)
    wk = 2.0 * np.pi * mode.natural_freq
    return mode.coupling / (wk**2 - w**2 + 2j * mode.damping_ratio * wk * w)


def impulse_response(mode: Mode, length: int, sample_rate: float) -> np.ndarray:
    """Modal impulse response via inverse FFT of the sampled transfer function.

    The response is periodized to ``length`` samples; at realistic damping it
    decays far below peak well within a clip, so wrap-around is negligible.
    Imaginary parts at DC and Nyquist are discarded (a real sequence cannot
    carry them).
    """
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    if mode.natural_freq >= sample_rate / 2.0:
        raise AliasError(
            f"mode at {mode.natural_freq:g} Hz is at or above Nyquist "
            f"({sample_rate / 2:g} Hz)"
        )
    freqs = np.fft.rfftfreq(length, d=1.0 / sample_rate)
    bins = transfer_function(mode, freqs)
    bins[0] = bins[0].real
    if length % 2 == 0:
        bins[-1] = bins[-1].real
    spec = Spectrum(bins=bins, freq_resolution=sample_rate / length, source_length=length)
    return dsp.ifft_real(spec)


def synthesize(source: SoundSignal, modeset: ModeSet, scene: SceneParams,
               seed: int = 0) -> VibrationGrid:
    """Simulate the vibration grid a sound source induces through the modes.

    Each channel is gamma * beta_n * sum_k grad_k[n, a] * (s circular-conv g_k)
    plus i.i.d. Gaussian noise, reproducible for a given seed.
    """
    s = source.samples
    if s.size < 2:
        raise ShapeMismatch("source must have at least 2 samples")
    n = modeset.n_points
    t = s.size
    beta = scene.beta_vector(n)

    s_hat = np.fft.rfft(s)
    responses = np.empty((modeset.n_modes, t))
    for k, mode in enumerate(modeset.modes):
        g = impulse_response(mode, t, source.sample_rate)
        responses[k] = np.fft.irfft(s_hat * np.fft.rfft(g), n=t)

    # beta then gamma applied to the shape weights before the mode sum, so
    # scaling a point's channels is bit-identical to scaling its shape rows
    weighted = modeset.shape_matrix() * beta[None, :, None]
    weighted = weighted * scene.gamma
    data = np.einsum("kna,kt->nat", weighted, responses)
    if scene.noise_std > 0:
        rng = np.random.default_rng(seed)
        data = data + rng.normal(0.0, scene.noise_std, size=data.shape)
    return VibrationGrid(
        data=data,
        sample_rate=source.sample_rate,
        point_coords=modeset.point_coords,
        grid_shape=modeset.grid_shape,
    )


def analytic_plate_modes(nx: int, ny: int, grid_dims: tuple, mode_count: int,
                         f_base: float, damping: float = DEFAULT_DAMPING_RATIO,
                         aspect: float = 1.0) -> ModeSet:
    """Simply-supported plate modes sampled on an interior point grid.

    Candidate modes (m, n) for m <= nx, n <= ny have eigenfunctions
    sin(m*pi*x) * sin(n*pi*y) on normalized coordinates and frequencies
    f_base * (m^2 + (n / aspect)^2); aspect is the plate's side ratio
    (1 = square), and a non-unit aspect breaks the square plate's (m, n) /
    (n, m) degeneracies. Frequencies are sorted ascending and truncated to
    ``mode_count``; exactly degenerate pairs are perturbed by 0.01% to keep
    the ordering strict. Points sit strictly inside the plate at
    ((c+1)/(cols+1), (r+1)/(rows+1)), row-major, so boundary nodes never
    produce all-silent channels. Couplings are all 1: the generator provides
    detectable ground truth, not physical pressure participation factors.
    """
    rows, cols = grid_dims
    if mode_count < 1 or mode_count > nx * ny:
        raise ValueError(f"mode_count must be in [1, {nx * ny}], got {mode_count}")
    if aspect <= 0:
        raise ValueError(f"aspect must be positive, got {aspect}")
    xs = (np.arange(cols) + 1.0) / (cols + 1.0)
    ys = (np.arange(rows) + 1.0) / (rows + 1.0)
    gx, gy = np.meshgrid(xs, ys)  # row-major: point p = r*cols + c
    px, py = gx.ravel(), gy.ravel()
    coords = np.column_stack([px, py])

    candidates = sorted(
        (
            (f_base * (m**2 + (n / aspect) ** 2), m, n)
            for m in range(1, nx + 1)
            for n in range(1, ny + 1)
        )
    )
    freqs = []
    for f, m, n in candidates:
        while freqs and f <= freqs[-1][0]:
            f = freqs[-1][0] * (1.0 + 1e-4)
        freqs.append((f, m, n))

    modes = []
    for f, m, n in freqs[:mode_count]:
        dx = m * np.pi * np.cos(m * np.pi * px) * np.sin(n * np.pi * py)
        dy = (n / aspect) * np.pi * np.sin(m * np.pi * px) * np.cos(n * np.pi * py)
        modes.append(
            Mode(
                natural_freq=f,
                damping_ratio=damping,
                coupling=1.0,
                shape_grad=np.column_stack([dx, dy]),
            )
        )
    return ModeSet(modes=tuple(modes), point_coords=coords, grid_shape=(rows, cols))
