"""File formats and experiment configuration.

Binary containers (all little-endian, float32 payloads, atomic writes):

VGRD vibration grid
    magic "VGRD" | version u16 | n_points u16 | grid_rows u16 | grid_cols u16
    | sample_rate u32 | n_samples u64 | coords N x 2 f32
    | data f32, point-major then axis then time.
    grid_rows = grid_cols = 0 declares an unstructured point cloud.
    File size must be exactly 24 + 8N + 8NT bytes.

VFBK inverse-filter bank
    magic "VFBK" | version u16 | n_points u16 | sample_rate u32 | taps u64
    | flagged u8 N x 2 | filters f32 N x 2 x taps.

Mode sets and metric reports travel as JSON; audio as mono WAV (float32 on
write; float32 or 16-bit PCM on read).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, fields

import numpy as np
from scipy.io import wavfile

from .baselines import FilterBank
from .dsp import SoundSignal
from .errors import ConfigError, CorruptFile, UnsupportedFormat
from .extraction import ExtractedModes, ExtractionConfig
from .metrics import DEFAULT_RESOLUTIONS, MetricReport
from .modal import Mode, ModeSet, VibrationGrid
from .recovery import RecoveryConfig

__all__ = [
    "read_wav",
    "write_wav",
    "read_vgrid",
    "write_vgrid",
    "read_filterbank",
    "write_filterbank",
    "read_modes_json",
    "write_modes_json",
    "write_metrics_json",
    "ExperimentConfig",
]

_VGRID_MAGIC = b"VGRD"
_VGRID_HEADER = struct.Struct("<4sHHHHIQ")  # 24 bytes
_FBANK_MAGIC = b"VFBK"
_FBANK_HEADER = struct.Struct("<4sHHIQ")  # 20 bytes


def _atomic_write(path, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_wav(path) -> SoundSignal:
    """Mono WAV to SoundSignal; 16-bit PCM is scaled so -32768 maps to -1.0."""
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise UnsupportedFormat(f"cannot read {path}: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedFormat(f"{path} has {data.shape[1]} channels, need mono")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path} has unsupported sample format {data.dtype}")
    return SoundSignal(samples, int(rate))


def write_wav(path, signal: SoundSignal):
    """Write 32-bit float mono WAV atomically; float32 round trips losslessly."""
    import io as _io

    buf = _io.BytesIO()
    wavfile.write(buf, int(signal.sample_rate), signal.samples.astype(np.float32))
    _atomic_write(path, buf.getvalue())


def write_vgrid(path, grid: VibrationGrid):
    rows, cols = grid.grid_shape if grid.grid_shape is not None else (0, 0)
    header = _VGRID_HEADER.pack(
        _VGRID_MAGIC, 1, grid.n_points, rows, cols,
        int(grid.sample_rate), grid.n_samples,
    )
    coords = np.ascontiguousarray(grid.point_coords, dtype="<f4").tobytes()
    data = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    _atomic_write(path, header + coords + data)


def read_vgrid(path) -> VibrationGrid:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _VGRID_HEADER.size:
        raise CorruptFile(f"{path}: shorter than the 24-byte header")
    magic, version, n, rows, cols, rate, t = _VGRID_HEADER.unpack_from(blob)
    if magic != _VGRID_MAGIC:
        raise CorruptFile(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise CorruptFile(f"{path}: unsupported version {version}")
    if n < 1 or t < 2 or rate == 0:
        raise CorruptFile(f"{path}: implausible header (N={n}, T={t}, fs={rate})")
    if not (rows == cols == 0) and rows * cols != n:
        raise CorruptFile(f"{path}: grid {rows}x{cols} does not hold {n} points")
    expected = _VGRID_HEADER.size + 8 * n + 8 * n * t
    if len(blob) != expected:
        raise CorruptFile(f"{path}: size {len(blob)} != expected {expected}")
    offset = _VGRID_HEADER.size
    coords = np.frombuffer(blob, dtype="<f4", count=2 * n, offset=offset)
    offset += coords.nbytes
    data = np.frombuffer(blob, dtype="<f4", count=2 * n * t, offset=offset)
    if not (np.isfinite(coords).all() and np.isfinite(data).all()):
        raise CorruptFile(f"{path}: payload contains NaN or Inf")
    return VibrationGrid(
        data=data.astype(np.float64).reshape(n, 2, t),
        sample_rate=int(rate),
        point_coords=coords.astype(np.float64).reshape(n, 2),
        grid_shape=None if rows == cols == 0 else (rows, cols),
    )


def write_filterbank(path, bank: FilterBank):
    header = _FBANK_HEADER.pack(
        _FBANK_MAGIC, 1, bank.n_points, int(bank.sample_rate), bank.taps
    )
    flags = np.ascontiguousarray(bank.flagged, dtype=np.uint8).tobytes()
    data = np.ascontiguousarray(bank.filters, dtype="<f4").tobytes()
    _atomic_write(path, header + flags + data)


def read_filterbank(path) -> FilterBank:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _FBANK_HEADER.size:
        raise CorruptFile(f"{path}: shorter than the 20-byte header")
    magic, version, n, rate, taps = _FBANK_HEADER.unpack_from(blob)
    if magic != _FBANK_MAGIC:
        raise CorruptFile(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise CorruptFile(f"{path}: unsupported version {version}")
    expected = _FBANK_HEADER.size + 2 * n + 8 * n * taps
    if len(blob) != expected:
        raise CorruptFile(f"{path}: size {len(blob)} != expected {expected}")
    offset = _FBANK_HEADER.size
    flags = np.frombuffer(blob, dtype=np.uint8, count=2 * n, offset=offset)
    offset += flags.nbytes
    data = np.frombuffer(blob, dtype="<f4", count=2 * n * taps, offset=offset)
    if not np.isfinite(data).all():
        raise CorruptFile(f"{path}: payload contains NaN or Inf")
    return FilterBank(
        filters=data.astype(np.float64).reshape(n, 2, taps),
        sample_rate=int(rate),
        flagged=flags.reshape(n, 2).astype(bool),
    )


def _modes_payload(mode_set: ModeSet) -> dict:
    return {
        "point_coords": mode_set.point_coords.tolist(),
        "grid_shape": list(mode_set.grid_shape) if mode_set.grid_shape else None,
        "modes": [
            {
                "natural_freq": m.natural_freq,
                "damping_ratio": m.damping_ratio,
                "coupling": m.coupling,
                "shape_grad": m.shape_grad.tolist(),
            }
            for m in mode_set.modes
        ],
    }


def write_modes_json(path, modes):
    """Serialize a ModeSet (or ExtractedModes, with diagnostics) to JSON."""
    if isinstance(modes, ExtractedModes):
        payload = _modes_payload(modes.mode_set)
        payload["diagnostics"] = modes.diagnostics
        payload["prominences"] = modes.prominences.tolist()
        if modes.total_variations is not None:
            payload["total_variations"] = modes.total_variations.tolist()
    else:
        payload = _modes_payload(modes)
    _atomic_write(path, _json_bytes(payload))


def read_modes_json(path) -> ModeSet:
    with open(path) as handle:
        payload = json.load(handle)
    modes = tuple(
        Mode(
            natural_freq=m["natural_freq"],
            damping_ratio=m["damping_ratio"],
            coupling=m["coupling"],
            shape_grad=np.asarray(m["shape_grad"], dtype=np.float64),
        )
        for m in payload["modes"]
    )
    grid_shape = payload.get("grid_shape")
    return ModeSet(
        modes=modes,
        point_coords=np.asarray(payload["point_coords"], dtype=np.float64),
        grid_shape=tuple(grid_shape) if grid_shape else None,
    )


def _json_bytes(payload) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()


def write_metrics_json(path, report: MetricReport, extra: dict | None = None):
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    _atomic_write(path, _json_bytes(payload))


@dataclass
class ExperimentConfig:
    """Strict key = value experiment configuration.

    Defaults reproduce the reference setup: 10x10 grid at 22 kHz, a 50-10000
    Hz 7th-order band-pass, 5 Hz smoothing, lambda 1, 10000 steps at learning
    rate 1e-4, damping 0.01, 4096-tap calibration filters.
    """

    source_wav: str = ""
    grid_file: str = ""
    output_dir: str = "vibrosound_out"
    test_signal: str = "multiband"
    duration_s: float = 3.0
    sample_rate: int = 22000
    grid_rows: int = 10
    grid_cols: int = 10
    mode_count: int = 5
    mode_nx: int = 4
    mode_ny: int = 4
    f_base: float = 250.0
    gamma: float = 1.0
    noise_std: float = 0.0
    damping: float = 0.01
    band_low: float = 50.0
    band_high: float = 10000.0
    bp_order: int = 7
    savgol_window_hz: float = 5.0
    peak_prominence: float = 3.0
    min_peak_separation_hz: float = 10.0
    shape_corr_threshold: float = 0.95
    tv_outlier_zscore: float = 2.5
    reg_lambda: float = 1.0
    steps: int = 10000
    learning_rate: float = 1e-4
    baselines: str = "single,avg,dns"
    dns_max_lag: int = 256
    calibration_taps: int = 4096
    metric_resolutions: str = "512,1024,2048"
    seed: int = 0

    # the on-disk key for reg_lambda; "lambda" is reserved in Python
    _ALIASES = {"lambda": "reg_lambda"}

    @classmethod
    def known_keys(cls):
        names = {f.name for f in fields(cls)}
        names.update(cls._ALIASES)
        return names

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            key = cls._ALIASES.get(key, key)
            if key not in {f.name for f in fields(cls)}:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = value.strip()
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            raw = values[f.name]
            try:
                if isinstance(f.default, int):
                    kwargs[f.name] = int(raw)
                elif isinstance(f.default, float):
                    kwargs[f.name] = float(raw)
                else:
                    kwargs[f.name] = raw
            except ValueError as exc:
                raise ConfigError(f"key {f.name}: cannot parse {raw!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as handle:
            return cls.from_text(handle.read())

    def canonical_text(self) -> str:
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "reg_lambda" else f.name
            lines.append(f"{key} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def resolutions(self) -> tuple:
        if not self.metric_resolutions.strip():
            return DEFAULT_RESOLUTIONS
        return tuple(int(w.strip()) for w in self.metric_resolutions.split(","))

    def baseline_list(self) -> tuple:
        items = tuple(b.strip() for b in self.baselines.split(",") if b.strip())
        for item in items:
            if item not in ("single", "avg", "dns", "calibrated"):
                raise ConfigError(f"unknown baseline {item!r}")
        return items

    def extraction_config(self) -> ExtractionConfig:
        return ExtractionConfig(
            savgol_window_hz=self.savgol_window_hz,
            peak_prominence=self.peak_prominence,
            min_peak_separation_hz=self.min_peak_separation_hz,
            shape_corr_threshold=self.shape_corr_threshold,
            tv_outlier_zscore=self.tv_outlier_zscore,
            band_low_hz=self.band_low,
            band_high_hz=self.band_high,
            bandpass_order=self.bp_order,
            damping_ratio=self.damping,
        )

    def recovery_config(self, steps: int | None = None) -> RecoveryConfig:
        return RecoveryConfig(
            reg_weight=self.reg_lambda,
            steps=self.steps if steps is None else steps,
            learning_rate=self.learning_rate,
            damping_ratio=self.damping,
            seed=self.seed,
        )
