"""Command-line drivers for the full pipeline.

Subcommands:

  synth      WAV (or built-in test signal) + scene config -> VGRD grid
             and a ground-truth mode dump
  modes      VGRD -> extracted modes JSON (+ optional diagnostics JSON)
  recover    VGRD + modes JSON -> recovered WAV
  baseline   VGRD [+ filter bank] -> WAV via single|avg|dns|calibrated
  calibrate  VGRD + reference WAV -> inverse-filter bank
  eval       WAV vs WAV -> metrics JSON
  pipeline   one config -> synth + modes + recover + baselines + report

Errors print machine-readable JSON to stderr and exit nonzero. All
randomness flows from --seed / the config seed, so identical invocations
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import baselines, io, metrics, signals
from .dsp import SoundSignal
from .errors import ConfigError, VibroSoundError
from .extraction import extract_modes
from .modal import SceneParams, VibrationGrid, analytic_plate_modes, synthesize
from .recovery import recover_sound

log = logging.getLogger("vibrosound")


def _best_channel(grid: VibrationGrid) -> tuple:
    energy = np.sum(grid.channels() ** 2, axis=1)
    return divmod(int(np.argmax(energy)), 2)


def _load_config(path) -> io.ExperimentConfig:
    if path:
        return io.ExperimentConfig.from_file(path)
    return io.ExperimentConfig()


def _load_source(cfg: io.ExperimentConfig, wav, test_signal, duration, seed) -> SoundSignal:
    if wav:
        return io.read_wav(wav)
    if cfg.source_wav:
        return io.read_wav(cfg.source_wav)
    name = test_signal or cfg.test_signal
    dur = duration if duration is not None else cfg.duration_s
    fs = cfg.sample_rate
    if name == "clap":
        return signals.clap(dur, fs, seed)
    if name == "chirp":
        return signals.log_chirp(dur, fs, cfg.band_low, cfg.band_high)
    if name == "multiband":
        return signals.multiband(dur, fs, seed)
    raise ConfigError(f"unknown test signal {name!r}")


def _scene(cfg: io.ExperimentConfig):
    modeset = analytic_plate_modes(
        cfg.mode_nx, cfg.mode_ny, (cfg.grid_rows, cfg.grid_cols),
        cfg.mode_count, cfg.f_base, cfg.damping,
    )
    return modeset, SceneParams(gamma=cfg.gamma, noise_std=cfg.noise_std)


def _normalized_wav(path, signal: SoundSignal):
    peak = float(np.max(np.abs(signal.samples)))
    samples = signal.samples / peak * 0.9 if peak > 0 else signal.samples
    io.write_wav(path, SoundSignal(samples, signal.sample_rate))


def _cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    source = _load_source(cfg, args.wav, args.test_signal, args.duration, seed)
    modeset, scene = _scene(cfg)
    grid = synthesize(source, modeset, scene, seed=seed)
    io.write_vgrid(args.out, grid)
    log.info("wrote %s (%d points, %d samples, %d Hz)",
             args.out, grid.n_points, grid.n_samples, grid.sample_rate)
    if args.modes_out:
        io.write_modes_json(args.modes_out, modeset)
    if args.source_out:
        io.write_wav(args.source_out, source)
    return 0


def _cmd_modes(args) -> int:
    cfg = _load_config(args.config)
    grid = io.read_vgrid(args.grid)
    extracted = extract_modes(grid, cfg.extraction_config())
    io.write_modes_json(args.out, extracted)
    log.info("extracted %d modes: %s Hz", extracted.mode_set.n_modes,
             np.round(extracted.frequencies, 1).tolist())
    if args.diagnostics:
        io._atomic_write(args.diagnostics, io._json_bytes(extracted.diagnostics))
    return 0


def _cmd_recover(args) -> int:
    cfg = _load_config(args.config)
    grid = io.read_vgrid(args.grid)
    modeset = io.read_modes_json(args.modes)
    result = recover_sound(grid, modeset, cfg.recovery_config(steps=args.steps))
    _normalized_wav(args.out, result.recovered)
    log.info("recovered %s: final loss %.6g (data %.6g, reg %.6g)",
             args.out, result.final_loss, result.data_term, result.reg_term)
    if args.trace:
        io._atomic_write(args.trace, io._json_bytes(
            {"loss_trace": result.loss_trace.tolist(),
             "couplings": result.couplings.tolist()}
        ))
    return 0


def _cmd_baseline(args) -> int:
    grid = io.read_vgrid(args.grid)
    if args.method == "single":
        point, axis = (args.point, args.axis)
        if point is None or axis is None:
            point, axis = _best_channel(grid)
        out = baselines.single_point(grid, point, axis)
    elif args.method == "avg":
        out = baselines.average_all(grid)
    elif args.method == "dns":
        reference = args.reference
        if reference is None:
            p, a = _best_channel(grid)
            reference = 2 * p + a
        out = baselines.delay_and_sum(grid, reference, args.max_lag)
    else:  # calibrated
        if not args.filters:
            raise ConfigError("--filters is required for the calibrated baseline")
        bank = io.read_filterbank(args.filters)
        out = baselines.apply_calibrated(grid, bank)
    io.write_wav(args.out, out)
    log.info("baseline %s -> %s", args.method, args.out)
    return 0


def _cmd_calibrate(args) -> int:
    grid = io.read_vgrid(args.grid)
    reference = io.read_wav(args.reference)
    bank = baselines.estimate_inverse_filters(grid, reference, args.taps)
    io.write_filterbank(args.out, bank)
    log.info("calibrated %d-tap bank for %d channels -> %s",
             bank.taps, 2 * bank.n_points, args.out)
    return 0


def _cmd_eval(args) -> int:
    candidate = io.read_wav(args.candidate)
    reference = io.read_wav(args.reference)
    resolutions = tuple(int(w) for w in args.resolutions.split(","))
    report = metrics.si_mr_stft(candidate, reference, resolutions, max_lag=args.max_lag)
    if args.out:
        io.write_metrics_json(args.out, report)
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    outdir = args.output_dir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    seed = cfg.seed if args.seed is None else args.seed
    log.info("pipeline: config digest %s, seed %d, outputs in %s",
             cfg.digest(), seed, outdir)

    def path(name):
        return os.path.join(outdir, name)

    source = _load_source(cfg, None, None, None, seed)
    io.write_wav(path("source.wav"), source)

    report = {"config_digest": cfg.digest(), "seed": seed, "outputs": {}, "metrics": {}}
    synthetic = not cfg.grid_file
    modeset = None
    if synthetic:
        modeset, scene = _scene(cfg)
        grid = synthesize(source, modeset, scene, seed=seed)
        io.write_vgrid(path("grid.vgrd"), grid)
        io.write_modes_json(path("modes_true.json"), modeset)
        report["mode_frequencies_true"] = modeset.frequencies.tolist()
    else:
        grid = io.read_vgrid(cfg.grid_file)

    extracted = extract_modes(grid, cfg.extraction_config())
    io.write_modes_json(path("modes.json"), extracted)
    report["mode_frequencies_extracted"] = extracted.frequencies.tolist()
    log.info("extracted %d modes", extracted.mode_set.n_modes)
    if extracted.mode_set.n_modes == 0:
        raise VibroSoundError("no modes survived extraction; cannot recover")

    result = recover_sound(grid, extracted.mode_set, cfg.recovery_config())
    _normalized_wav(path("recovered.wav"), result.recovered)
    report["outputs"]["recovered"] = "recovered.wav"
    report["final_loss"] = result.final_loss

    outputs = {"recovered": result.recovered}
    for method in cfg.baseline_list():
        if method == "single":
            p, a = _best_channel(grid)
            out = baselines.single_point(grid, p, a)
        elif method == "avg":
            out = baselines.average_all(grid)
        elif method == "dns":
            p, a = _best_channel(grid)
            out = baselines.delay_and_sum(grid, 2 * p + a, cfg.dns_max_lag)
        elif method == "calibrated":
            if not synthetic:
                log.warning("calibrated baseline needs a synthetic scene; skipping")
                continue
            chirp = signals.log_chirp(
                cfg.duration_s, cfg.sample_rate, cfg.band_low, cfg.band_high
            )
            calib_grid = synthesize(chirp, modeset, scene, seed=seed + 1)
            bank = baselines.estimate_inverse_filters(
                calib_grid, chirp, cfg.calibration_taps
            )
            io.write_filterbank(path("filters.vfbk"), bank)
            out = baselines.apply_calibrated(grid, bank)
        name = f"baseline_{method}.wav"
        io.write_wav(path(name), out)
        report["outputs"][method] = name
        outputs[method] = out

    for name, signal in outputs.items():
        m = metrics.si_mr_stft(signal, source, cfg.resolutions())
        report["metrics"][name] = m.to_dict()
        log.info("%s: si_mr_stft %.4f, max |xcorr| %.4f",
                 name, m.si_mr_stft, abs(m.max_xcorr))

    io._atomic_write(path("report.json"), io._json_bytes(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibrosound",
        description="Recover ambient sound from surface-vibration grids",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="simulate a vibration grid")
    p.add_argument("--config", default=None)
    p.add_argument("--wav", default=None, help="source WAV (else built-in test signal)")
    p.add_argument("--test-signal", default=None, choices=["clap", "chirp", "multiband"])
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", required=True, help="output VGRD path")
    p.add_argument("--modes-out", default=None, help="ground-truth modes JSON")
    p.add_argument("--source-out", default=None, help="copy of the source WAV")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("modes", help="extract modes from a grid")
    p.add_argument("grid")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", default=None)
    p.set_defaults(func=_cmd_modes)

    p = sub.add_parser("recover", help="invert the forward model")
    p.add_argument("grid")
    p.add_argument("--modes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--trace", default=None, help="loss trace JSON")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("baseline", help="reference recovery methods")
    p.add_argument("grid")
    p.add_argument("--method", required=True, choices=["single", "avg", "dns", "calibrated"])
    p.add_argument("--out", required=True)
    p.add_argument("--point", type=int, default=None)
    p.add_argument("--axis", type=int, default=None)
    p.add_argument("--reference", type=int, default=None, help="flat channel index")
    p.add_argument("--max-lag", type=int, default=256)
    p.add_argument("--filters", default=None, help="filter bank for calibrated")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("calibrate", help="estimate per-channel inverse filters")
    p.add_argument("grid")
    p.add_argument("--reference", required=True, help="reference WAV")
    p.add_argument("--out", required=True)
    p.add_argument("--taps", type=int, default=4096)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("eval", help="compare two WAV files")
    p.add_argument("candidate")
    p.add_argument("reference")
    p.add_argument("--out", default=None)
    p.add_argument("--resolutions", default="512,1024,2048")
    p.add_argument("--max-lag", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="end-to-end run from one config")
    p.add_argument("--config", default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except VibroSoundError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (OSError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
