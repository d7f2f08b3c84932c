"""Command-line interface: config validation, orchestration, export.

One executable with a subcommand per figure-level experiment.  Each
command validates a strict JSON configuration (explicit units in key
names, unknown keys rejected), runs its pipeline, writes delimited data
plus rendered figures into the output directory and logs to stderr only.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .analysis import (
    SweepSettings,
    default_spectroscopy_grid,
    find_peaks,
    fit_decaying_sinusoid,
    optimize_tau_p,
    simulate_spectroscopy_map,
    sweep_dispersion,
    t2_vs_ideal_curves,
    weighted_slope_ci,
)
from .errors import ConfigError, NotResolvableError, ParitySimError
from .montecarlo import CLASS_LABELS, ProtocolConfig, run_protocol, write_shot_records
from .transmon import DeviceParams

log = logging.getLogger("paritysim")

COMMANDS = ("spectroscopy", "parity-ramsey", "echo", "sweep", "appendix-a1")

_DEVICE_FIELDS = {
    "eps01_mhz": float,
    "eps12_mhz": float,
    "ng": float,
    "fbar01_mhz": float,
    "fbar12_mhz": float,
    "alpha_mhz": float,
    "t1_us": float,
    "tphi_us": float,
    "parity_rate_per_us": float,
    "ej_over_ec": float,
    "t_readout_us": float,
    "t_reset_us": float,
}

_EXPERIMENT_FIELDS = {
    "delays_us": "grid",
    "shots_per_delay": int,
    "f_virt_mhz": float,
    "tau_p_us": float,
    "tau_p_grid_us": "float_list",
    "delta_f_halfspan_mhz": float,
    "delta_f_points": int,
    "delta01_sweep_mhz": "float_list",
    "a1_delta01_mhz": "float_list",
    "t2_ideal_grid_us": "float_list",
    "sweep_mode": ("ensemble", "montecarlo"),
    "echo_mode": ("ensemble", "montecarlo"),
    "scheme": ("uniform", "mixture"),
    "detection_model": ("ideal", "physical"),
    "readout_error": float,
    "t_max_us": float,
    "n_flip_grid": int,
    "dt_max_us": float,
    "echo_delays_us": "grid",
    "echo_shots_per_delay": int,
}

_REQUIRED_BY_COMMAND = {
    "spectroscopy": ("tau_p_grid_us", "delta_f_halfspan_mhz", "delta_f_points"),
    "parity-ramsey": (
        "delays_us", "shots_per_delay", "f_virt_mhz", "tau_p_us",
        "detection_model", "readout_error", "dt_max_us",
    ),
    "echo": (
        "delta01_sweep_mhz", "echo_delays_us", "echo_shots_per_delay",
        "f_virt_mhz", "tau_p_us", "echo_mode", "t_max_us", "n_flip_grid", "dt_max_us",
    ),
    "sweep": (
        "delta01_sweep_mhz", "sweep_mode", "scheme", "f_virt_mhz", "t_max_us",
        "n_flip_grid", "delays_us", "shots_per_delay", "tau_p_us", "dt_max_us",
    ),
    "appendix-a1": ("a1_delta01_mhz", "t2_ideal_grid_us", "f_virt_mhz", "t_max_us", "n_flip_grid"),
}


def fmt_float(x: float) -> str:
    """Nine significant digits, the export precision everywhere."""
    return f"{float(x):.9g}"


def _json_value(x):
    if isinstance(x, bool) or isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(fmt_float(x)) if math.isfinite(x) else None
    return x


def _check_number(value, path: str, kind) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if kind is int and not float(value).is_integer():
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return int(value) if kind is int else float(value)


def _check_grid(value, path: str) -> tuple:
    """A time grid: either an explicit list or {start, stop, num}."""
    if isinstance(value, list):
        return tuple(_check_number(v, f"{path}[{i}]", float) for i, v in enumerate(value))
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        for k in ("start", "stop", "num"):
            if k not in value:
                raise ConfigError(f"{path}: missing key {k!r}")
        num = _check_number(value["num"], f"{path}.num", int)
        if num < 2:
            raise ConfigError(f"{path}.num: need at least 2 points")
        start = _check_number(value["start"], f"{path}.start", float)
        stop = _check_number(value["stop"], f"{path}.stop", float)
        return tuple(float(t) for t in np.linspace(start, stop, num))
    raise ConfigError(f"{path}: expected a list or a start/stop/num object")


def _check_field(value, path: str, spec):
    if spec == "grid":
        return _check_grid(value, path)
    if spec == "float_list":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list of numbers")
        return tuple(_check_number(v, f"{path}[{i}]", float) for i, v in enumerate(value))
    if isinstance(spec, tuple):
        if value not in spec:
            raise ConfigError(f"{path}: expected one of {spec}, got {value!r}")
        return value
    return _check_number(value, path, spec)


def load_config(path: str | None) -> dict:
    """Read and structurally validate a run configuration."""
    if path is None:
        text = importlib.resources.files("paritysim.data").joinpath("default_config.json").read_text()
        source = "<bundled default>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        source = str(path)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")

    unknown = set(raw) - {"device", "experiment", "seed", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for section in ("device", "experiment", "seed", "output"):
        if section not in raw:
            raise ConfigError(f"missing section {section!r}")

    device_raw = raw["device"]
    if not isinstance(device_raw, dict):
        raise ConfigError("device: expected an object")
    unknown = set(device_raw) - set(_DEVICE_FIELDS)
    if unknown:
        raise ConfigError(f"device: unknown keys {sorted(unknown)}")
    device = {}
    for name, kind in _DEVICE_FIELDS.items():
        if name not in device_raw:
            raise ConfigError(f"device.{name}: missing required field")
        device[name] = _check_number(device_raw[name], f"device.{name}", kind)

    exp_raw = raw["experiment"]
    if not isinstance(exp_raw, dict):
        raise ConfigError("experiment: expected an object")
    unknown = set(exp_raw) - set(_EXPERIMENT_FIELDS)
    if unknown:
        raise ConfigError(f"experiment: unknown keys {sorted(unknown)}")
    experiment = {
        name: _check_field(value, f"experiment.{name}", _EXPERIMENT_FIELDS[name])
        for name, value in exp_raw.items()
    }

    seed = _check_number(raw["seed"], "seed", int)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")

    out_raw = raw["output"]
    if not isinstance(out_raw, dict):
        raise ConfigError("output: expected an object")
    unknown = set(out_raw) - {"dir", "format"}
    if unknown:
        raise ConfigError(f"output: unknown keys {sorted(unknown)}")
    out_dir = out_raw.get("dir")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.dir: expected a non-empty string")
    out_format = out_raw.get("format")
    if out_format not in ("csv", "json"):
        raise ConfigError(f"output.format: expected 'csv' or 'json', got {out_format!r}")

    try:
        dev = DeviceParams(**device)
    except ValueError as exc:
        raise ConfigError(f"device: {exc}") from exc
    return {"device": dev, "experiment": experiment, "seed": seed,
            "out_dir": out_dir, "format": out_format}


def _require(experiment: dict, command: str):
    for name in _REQUIRED_BY_COMMAND[command]:
        if name not in experiment:
            raise ConfigError(f"experiment.{name}: required by {command!r} but missing")


class TableWriter:
    """Writes named columns as CSV or JSON with identical numbers."""

    def __init__(self, out_dir: Path, fmt: str):
        self.out_dir = out_dir
        self.fmt = fmt
        self.paths: list[Path] = []

    def write(self, stem: str, columns: list[tuple[str, list]]) -> Path:
        names = [name for name, _ in columns]
        rows = list(zip(*(vals for _, vals in columns))) if columns else []
        path = self.out_dir / f"{stem}.{self.fmt}"
        if self.fmt == "csv":
            lines = [",".join(names)]
            for row in rows:
                lines.append(",".join(
                    fmt_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in row
                ))
            path.write_text("\n".join(lines) + "\n")
        else:
            payload = [
                {name: _json_value(v) for name, v in zip(names, row)} for row in rows
            ]
            path.write_text(json.dumps(payload, indent=1) + "\n")
        self.paths.append(path)
        return path

    def write_summary(self, payload: dict) -> Path:
        path = self.out_dir / "run_summary.json"
        path.write_text(json.dumps(_sanitize(payload), indent=1, sort_keys=True) + "\n")
        self.paths.append(path)
        return path


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return _json_value(obj)


def _fit_row(label: str, fit) -> dict:
    return {
        "label": label,
        "t2_us": fit.t2_us,
        "t2_stderr_us": fit.t2_stderr_us,
        "frequency_mhz": fit.frequency_mhz,
        "frequency_stderr_mhz": fit.frequency_stderr_mhz,
        "amplitude": fit.amplitude,
        "phase_rad": fit.phase_rad,
        "offset": fit.offset,
        "residual_rms": fit.residual_rms,
        "residual_rms_weighted": fit.residual_rms_weighted,
        "converged": int(fit.converged),
    }


def cmd_spectroscopy(cfg: dict, writer: TableWriter) -> dict:
    exp = cfg["experiment"]
    _require(exp, "spectroscopy")
    dev = cfg["device"]
    tau_grid = list(exp["tau_p_grid_us"])
    half = exp["delta_f_halfspan_mhz"]
    points = exp["delta_f_points"]
    if half <= 0 or points < 3:
        raise ConfigError("experiment.delta_f_halfspan_mhz/delta_f_points: need a usable grid")
    freq = np.linspace(-half, half, points)
    log.info("spectroscopy: %d pulse durations x %d frequency points", len(tau_grid), points)
    spectra = simulate_spectroscopy_map(dev, tau_grid, freq)
    peaks_by_tau = [find_peaks(freq, row) for row in spectra]

    cols = [
        ("tau_p_us", [tau for tau in tau_grid for _ in freq]),
        ("delta_f_mhz", [float(f) for _ in tau_grid for f in freq]),
        ("p2", [float(v) for row in spectra for v in row]),
    ]
    writer.write("spectroscopy_grid", cols)
    writer.write(
        "spectroscopy_peaks",
        [
            ("tau_p_us", [tau for tau, pk in zip(tau_grid, peaks_by_tau) for _ in pk]),
            ("freq_mhz", [f for pk in peaks_by_tau for f, _ in pk]),
            ("height", [h for pk in peaks_by_tau for _, h in pk]),
        ],
    )
    try:
        optimal = optimize_tau_p(dev, tau_grid, freq)
    except NotResolvableError:
        optimal = None
    summary = {
        "command": "spectroscopy",
        "seed": cfg["seed"],
        "optimal_tau_p_us": optimal,
        "peak_counts": {f"{tau:g}": len(pk) for tau, pk in zip(tau_grid, peaks_by_tau)},
    }
    writer.write_summary(summary)
    fig = plotting.save_spectroscopy_figure(
        tau_grid, freq, spectra, peaks_by_tau, writer.out_dir / "spectroscopy.png"
    )
    writer.paths.append(fig)
    return summary


def _protocol_from_config(cfg: dict, experiment: str, delays_key: str, shots_key: str) -> ProtocolConfig:
    exp = cfg["experiment"]
    return ProtocolConfig(
        delays_us=exp[delays_key],
        shots_per_delay=exp[shots_key],
        f_virt_mhz=exp["f_virt_mhz"],
        tau_p_us=exp["tau_p_us"],
        master_seed=cfg["seed"],
        detection_model=exp.get("detection_model", "ideal"),
        experiment=experiment,
        readout_error=exp.get("readout_error", 0.0),
        dt_max_us=exp.get("dt_max_us", 0.005),
    )


def cmd_parity_ramsey(cfg: dict, writer: TableWriter, workers: int = 1) -> dict:
    exp = cfg["experiment"]
    _require(exp, "parity-ramsey")
    dev = cfg["device"]
    protocol = _protocol_from_config(cfg, "ramsey", "delays_us", "shots_per_delay")
    log.info(
        "parity-ramsey: %d delays x %d shots (seed %d, workers %d)",
        len(protocol.delays_us), protocol.shots_per_delay, protocol.master_seed, workers,
    )
    dataset = run_protocol(protocol, dev, workers=workers)

    shots_path = writer.out_dir / "shot_records.csv"
    write_shot_records(dataset.records, shots_path)
    writer.paths.append(shots_path)

    stats = dataset.aggregate()
    cols = [("delay_us", [s.delay_us for s in stats])]
    for key in ("pooled", *CLASS_LABELS):
        cols.append((f"n_{key}", [s.n(key) for s in stats]))
        cols.append((f"mean_{key}", [s.mean(key) for s in stats]))
        cols.append((f"stderr_{key}", [s.stderr(key) for s in stats]))
    writer.write("ramsey_aggregates", cols)

    pooled_curve = dataset.decay_curve("pooled")
    sorted_curve = dataset.decay_curve("unflipped_plus")
    pooled_fit = fit_decaying_sinusoid(*pooled_curve)
    sorted_fit = fit_decaying_sinusoid(*sorted_curve)
    fit_rows = [_fit_row("pooled", pooled_fit), _fit_row("unflipped_plus", sorted_fit)]
    writer.write(
        "ramsey_fits",
        [(name, [row[name] for row in fit_rows]) for name in fit_rows[0]],
    )
    summary = {
        "command": "parity-ramsey",
        "seed": cfg["seed"],
        "shots": len(dataset),
        "flipped_fraction": dataset.class_fraction("flipped"),
        "t2_pooled_us": pooled_fit.t2_us,
        "t2_pooled_stderr_us": pooled_fit.t2_stderr_us,
        "t2_sorted_us": sorted_fit.t2_us,
        "t2_sorted_stderr_us": sorted_fit.t2_stderr_us,
    }
    writer.write_summary(summary)
    fig = plotting.save_ramsey_figure(
        pooled_curve, pooled_fit, sorted_curve, sorted_fit, writer.out_dir / "parity_ramsey.png"
    )
    writer.paths.append(fig)
    return summary


def _sweep_columns(sweep) -> list:
    cols = [("delta01_mhz", list(sweep.delta01_mhz))]
    for name in ("t2_pooled_us", "t2_pooled_stderr_us", "t2_sorted_us",
                 "t2_sorted_stderr_us", "t2_echo_us", "t2_echo_stderr_us"):
        col = getattr(sweep, name)
        if col is not None:
            cols.append((name, list(col)))
    return cols


def cmd_sweep(cfg: dict, writer: TableWriter, workers: int = 1) -> dict:
    exp = cfg["experiment"]
    _require(exp, "sweep")
    dev = cfg["device"]
    mode = exp["sweep_mode"]
    protocol = _protocol_from_config(cfg, "ramsey", "delays_us", "shots_per_delay") if mode == "montecarlo" else None
    settings = SweepSettings(
        dev=dev,
        f_virt_mhz=exp["f_virt_mhz"],
        t_max_us=exp["t_max_us"],
        n_flip_grid=exp["n_flip_grid"],
        scheme=exp["scheme"],
        protocol=protocol,
        workers=workers,
    )
    deltas = list(exp["delta01_sweep_mhz"])
    log.info("sweep: ramsey %s mode over %d dispersion values", mode, len(deltas))
    sweep = sweep_dispersion(deltas, mode, "ramsey", settings)
    writer.write("sweep_ramsey", _sweep_columns(sweep))
    summary = {
        "command": "sweep",
        "seed": cfg["seed"],
        "mode": mode,
        "scheme": settings.scheme,
        "t2_pooled_us": list(sweep.t2_pooled_us),
        "t2_sorted_us": list(sweep.t2_sorted_us),
    }
    writer.write_summary(summary)
    fig = plotting.save_sweep_figure(sweep, writer.out_dir / "sweep_t2.png", title="Ramsey vs dispersion")
    writer.paths.append(fig)
    return summary


def cmd_echo(cfg: dict, writer: TableWriter, workers: int = 1) -> dict:
    exp = cfg["experiment"]
    _require(exp, "echo")
    dev = cfg["device"]
    mode = exp["echo_mode"]
    protocol = None
    if mode == "montecarlo":
        protocol = _protocol_from_config(cfg, "echo", "echo_delays_us", "echo_shots_per_delay")
    settings = SweepSettings(
        dev=dev,
        f_virt_mhz=exp["f_virt_mhz"],
        t_max_us=exp["t_max_us"],
        n_flip_grid=exp["n_flip_grid"],
        scheme=exp.get("scheme") if mode == "ensemble" else None,
        protocol=protocol,
        workers=workers,
    )
    deltas = list(exp["delta01_sweep_mhz"])
    log.info("echo: %s mode over %d dispersion values", mode, len(deltas))
    sweep = sweep_dispersion(deltas, mode, "echo", settings)
    writer.write("sweep_echo", _sweep_columns(sweep))
    slope = weighted_slope_ci(sweep.delta01_mhz, sweep.t2_echo_us, sweep.t2_echo_stderr_us)
    summary = {
        "command": "echo",
        "seed": cfg["seed"],
        "mode": mode,
        "t2_echo_us": list(sweep.t2_echo_us),
        "slope_us_per_mhz": slope.slope,
        "slope_ci_low": slope.ci_low,
        "slope_ci_high": slope.ci_high,
        "slope_ci_contains_zero": bool(slope.contains_zero()),
    }
    writer.write_summary(summary)
    fig = plotting.save_sweep_figure(sweep, writer.out_dir / "echo_t2.png", title="Spin echo vs dispersion")
    writer.paths.append(fig)
    return summary


def cmd_appendix_a1(cfg: dict, writer: TableWriter) -> dict:
    exp = cfg["experiment"]
    _require(exp, "appendix-a1")
    dev = cfg["device"]
    deltas = list(exp["a1_delta01_mhz"])
    grid = list(exp["t2_ideal_grid_us"])
    log.info("appendix-a1: %d dispersion values x %d ideal-T2 targets", len(deltas), len(grid))
    family = t2_vs_ideal_curves(
        deltas, grid, t1_us=dev.t1_us,
        f_virt_mhz=exp["f_virt_mhz"], t_max_us=exp["t_max_us"],
        n_flip_grid=exp["n_flip_grid"],
        scheme=exp.get("scheme", "uniform"),
        rate_per_us=dev.parity_rate_per_us,
    )
    writer.write(
        "t2_vs_ideal",
        [
            ("delta01_mhz", [p.delta01_mhz for p in family.points]),
            ("t2_ideal_target_us", [p.t2_ideal_target_us for p in family.points]),
            ("tphi_us", [p.tphi_us for p in family.points]),
            ("t2_ideal_us", [p.t2_ideal_us for p in family.points]),
            ("t2_ideal_stderr_us", [p.t2_ideal_stderr_us for p in family.points]),
            ("t2_star_us", [p.t2_star_us for p in family.points]),
            ("t2_star_stderr_us", [p.t2_star_stderr_us for p in family.points]),
        ],
    )
    summary = {
        "command": "appendix-a1",
        "seed": cfg["seed"],
        "delta01_mhz": deltas,
        "max_star_over_ideal": max(p.t2_star_us / p.t2_ideal_us for p in family.points),
    }
    writer.write_summary(summary)
    fig = plotting.save_t2_vs_ideal_figure(family, writer.out_dir / "t2_vs_ideal.png")
    writer.paths.append(fig)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paritysim",
        description="Charge-parity-noise phenomenology for transmon qubits, at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectroscopy": "pulse-duration-resolved 1-2 spectroscopy map and peak analysis",
        "parity-ramsey": "Ramsey decay with embedded parity detection and post-selection",
        "echo": "spin-echo dephasing time against dispersion",
        "sweep": "Ramsey dephasing time against dispersion",
        "appendix-a1": "ensemble dephasing time against its flip-free value",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", default=None, help="JSON config (bundled default if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None, help="table format")
        p.add_argument("--workers", type=int, default=1, help="parallel workers (output-independent)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg["seed"] = args.seed
    if args.format is not None:
        cfg["format"] = args.format
    out_dir = Path(args.out) if args.out is not None else Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")

    writer = TableWriter(out_dir, cfg["format"])
    if args.command == "spectroscopy":
        cmd_spectroscopy(cfg, writer)
    elif args.command == "parity-ramsey":
        cmd_parity_ramsey(cfg, writer, workers=args.workers)
    elif args.command == "echo":
        cmd_echo(cfg, writer, workers=args.workers)
    elif args.command == "sweep":
        cmd_sweep(cfg, writer, workers=args.workers)
    elif args.command == "appendix-a1":
        cmd_appendix_a1(cfg, writer)
    for path in writer.paths:
        log.info("wrote %s", path)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return run(argv)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (ParitySimError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
