"""Command-line front end: ``spdcsource <command> [--config F] [--out D] [--seed N]``.

Commands write plot-ready tables into ``--out``. Everything is computed in a
temporary sibling directory that replaces ``--out`` only once all files are
written, so a failed run leaves no partial output. Exit codes: 0 success,
1 computation error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import compensation, pair_statistics, phasematching, polarization_state
from .errors import ConfigurationError, SpdcSourceError
from .pair_statistics import DetectionModel
from .phasematching import FilterSpec, SourceConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("spdcsource")

COMMANDS = ("spectrum", "pm-curve", "phase-map", "state", "visibility", "all")

# per-command settings and their defaults; None means "derive from the source"
SECTION_DEFAULTS = {
    "spectrum": {
        "temperatures": None,
        "grid": [740.0, 890.0, 0.05],
        "filtered": False,
    },
    "pm_curve": {
        "temperature_range": [20.0, 80.0],
        "step": 1.0,
        "grid": [740.0, 890.0, 0.05],
    },
    "phase_map": {
        "half_width": 2.5,
        "step": 0.005,
        "optimize": True,
        "scan_range": [0.0, 60.0],
        "scan_step": 0.5,
        "support_only": True,
    },
    "state": {
        "target_overlap": 0.91,
        "temperature_offset": 0.0,
        "tomography_counts": 0,
    },
    "visibility": {
        "powers": None,
        "windows": [2.4e-9, 1e-10],
        "brightness": pair_statistics.DETECTED_PAIR_RATE,
        "mc_powers": None,
        "mc_target_coincidences": 20000,
        "mc_max_duration": 2.0,
        "mc_shards": 1,
    },
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    source: SourceConfig
    detection: DetectionModel
    sections: dict
    seed: int = 0


# ---------------------------------------------------------------- config


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(key, value, default):
    """Type-check ``value`` against the kind of ``default``."""
    if default is None:
        if value is None or _is_number(value):
            return value
        if isinstance(value, list) and all(_is_number(x) for x in value):
            return [float(x) for x in value]
        raise ConfigurationError(f"config key {key!r}: expected a number or list of numbers")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"config key {key!r}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurationError(f"config key {key!r}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigurationError(f"config key {key!r}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"config key {key!r}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(_is_number(x) for x in value):
            raise ConfigurationError(f"config key {key!r}: expected a list of numbers, got {value!r}")
        if len(default) and len(value) != len(default):
            raise ConfigurationError(f"config key {key!r}: expected {len(default)} values, got {len(value)}")
        return [float(x) for x in value]
    raise ConfigurationError(f"config key {key!r}: unsupported value {value!r}")


def _build_dataclass(cls, table: dict, prefix: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in table.items():
        full = f"{prefix}.{key}"
        if key not in fields:
            raise ConfigurationError(f"unknown config key {full!r}")
        default = getattr(defaults, key)
        if key == "filter":
            if value is False:
                kwargs[key] = None
                continue
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {full!r}: expected a table or false")
            kwargs[key] = _build_dataclass(FilterSpec, value, full)
        elif key == "crystal_temperatures":
            if not (isinstance(value, list) and len(value) == 2 and all(_is_number(x) for x in value)):
                raise ConfigurationError(f"config key {full!r}: expected two numbers [T1, T2]")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key == "sellmeier_file":
            kwargs[key] = _check_value(full, value, "")
        else:
            kwargs[key] = _check_value(full, value, default)
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"[{prefix}] {exc}") from None


def parse_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document and build the run configuration."""
    allowed = {"seed", "source", "detection", *SECTION_DEFAULTS}
    for key in data:
        if key not in allowed:
            raise ConfigurationError(f"unknown config key {key!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"config key 'seed': expected a non-negative integer, got {seed!r}")
    for key in ("source", "detection", *SECTION_DEFAULTS):
        if key in data and not isinstance(data[key], dict):
            raise ConfigurationError(f"config key {key!r}: expected a table")
    source = _build_dataclass(SourceConfig, data.get("source", {}), "source")
    detection = _build_dataclass(DetectionModel, data.get("detection", {}), "detection")
    sections = {}
    for name, defaults in SECTION_DEFAULTS.items():
        table = data.get(name, {})
        merged = dict(defaults)
        for key, value in table.items():
            if key not in defaults:
                raise ConfigurationError(f"unknown config key {name + '.' + key!r}")
            merged[key] = _check_value(f"{name}.{key}", value, defaults[key])
        sections[name] = merged
    return RunConfig(source, detection, sections, seed)


def load_config(path) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config file {path}: {exc}") from None
    return parse_config(data)


# ---------------------------------------------------------------- writers


def _num(v):
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path: Path, header, rows, fmt: str):
    """Rows of plain values as CSV (``path.csv``) or a JSON list of objects."""
    if fmt == "json":
        write_json(path.with_suffix(".json"), [dict(zip(header, r)) for r in rows])
        return
    with open(path.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _config_snapshot(run: RunConfig) -> dict:
    src = dataclasses.asdict(run.source.resolved())
    return {"source": src, "detection": dataclasses.asdict(run.detection), "seed": run.seed}


# ---------------------------------------------------------------- commands


def cmd_spectrum(run: RunConfig, out: Path, fmt: str) -> dict:
    """Joint spectra per temperature plus centre wavelengths and widths."""
    cfg = run.source.resolved()
    sec = run.sections["spectrum"]
    grid = phasematching.default_grid(*sec["grid"])
    temps = sec["temperatures"]
    if temps is None:
        t_op = cfg.crystal_temperatures[0]
        t_deg = phasematching.degeneracy_temperature(cfg)
        temps = [round(t_deg, 2), round((t_deg + t_op) / 2, 2), round(t_op, 2), round(t_op + 10, 2)]
    temps = [float(t) for t in np.atleast_1d(temps)]
    rows = []
    for t in temps:
        sp = phasematching.spdc_spectrum(cfg, t, grid, "joint-marginal", apply_filter=sec["filtered"])
        sp.to_csv(out / f"spectrum_T{t:.2f}C.csv")
        try:
            ls, li = phasematching.solve_signal_idler(cfg, t)
            ws = phasematching.fwhm(sp, around=ls)
            wi = phasematching.fwhm(sp, around=li)
        except (SpdcSourceError, ValueError):
            ls = li = ws = wi = math.nan
        rows.append([t, ls, li, ws, wi])
    write_table(out / "spectrum_summary", ["temperature_C", "cwl_signal_nm", "cwl_idler_nm",
                                           "fwhm_signal_nm", "fwhm_idler_nm"], rows, fmt)
    return {"temperatures_C": temps}


def cmd_pm_curve(run: RunConfig, out: Path, fmt: str) -> dict:
    cfg = run.source
    sec = run.sections["pm_curve"]
    grid = phasematching.default_grid(*sec["grid"])
    rows = phasematching.phasematching_curve(cfg, tuple(sec["temperature_range"]), sec["step"], grid)
    if fmt == "json":
        write_table(out / "pm_curve", phasematching.CURVE_HEADER,
                    [[r.temperature, r.signal, r.idler, r.fwhm_signal, r.fwhm_idler] for r in rows], fmt)
    else:
        phasematching.curve_to_csv(rows, out / "pm_curve.csv")
    try:
        t_deg = phasematching.degeneracy_temperature(cfg)
    except SpdcSourceError:
        t_deg = math.nan
    return {"degeneracy_temperature_C": t_deg, "rows": len(rows),
            "matched_rows": sum(r.matched for r in rows)}


def _phase_grids(run: RunConfig):
    sec = run.sections["phase_map"]
    return compensation.conjugate_grids(run.source.resolved(), sec["half_width"], sec["step"])


def cmd_phase_map(run: RunConfig, out: Path, fmt: str) -> dict:
    cfg = run.source.resolved()
    sec = run.sections["phase_map"]
    ls, li = _phase_grids(run)
    summary = {}
    for name, length in (("uncompensated", 0.0), ("compensated", cfg.compensator_length)):
        pmap = compensation.residual_phase_map(cfg, ls, li, yvo4_length=length)
        pmap.to_csv(out / f"phase_map_{name}.csv", support_only=sec["support_only"])
        summary[name] = {
            "yvo4_length_mm": length,
            "weighted_std_rad": pmap.weighted_std(),
            "peak_to_peak_rad": pmap.peak_to_peak(),
            "max_adjacent_jump_rad": pmap.max_adjacent_jump(),
        }
    if sec["optimize"]:
        res = compensation.optimize_compensator(cfg, ls, li, tuple(sec["scan_range"]), sec["scan_step"])
        res.to_json(out / "compensator_report.json")
        summary["optimum_mm"] = res.length
    write_json(out / "phase_map_summary.json", summary)
    return summary


def _state(run: RunConfig):
    cfg = run.source.resolved()
    sec = run.sections["state"]
    mismatch = polarization_state.calibrate_mismatch(cfg, sec["target_overlap"], sec["temperature_offset"])
    full_unf = polarization_state.crystal_spectra(cfg, filtered=False, mismatch=mismatch)
    full_f = polarization_state.crystal_spectra(cfg, filtered=True, mismatch=mismatch)
    ls, li = _phase_grids(run)
    pmap = compensation.residual_phase_map(cfg, ls, li)
    spectra = polarization_state.crystal_spectra(cfg, ls, filtered=True, mismatch=mismatch)
    state = polarization_state.build_state(pmap, spectra)
    info = {
        "background": mismatch.background,
        "temperature_offset_C": mismatch.temperature_offset,
        "overlap_unfiltered": polarization_state.spectral_overlap(full_unf.spectrum_H, full_unf.spectrum_V),
        "overlap_filtered": polarization_state.spectral_overlap(full_f.spectrum_H, full_f.spectrum_V),
        "fidelity": polarization_state.fidelity(state),
        "visibility_HV": polarization_state.correlation_visibility(state, "H/V"),
        "visibility_DA": polarization_state.correlation_visibility(state, "D/A"),
    }
    return state, info


def cmd_state(run: RunConfig, out: Path, fmt: str) -> dict:
    state, info = _state(run)
    (out / "density_matrix.txt").write_text(state.to_text(), encoding="utf-8")
    n = run.sections["state"]["tomography_counts"]
    if n > 0:
        tomo = polarization_state.simulate_tomography(state, n, seed=[run.seed, 1])
        tomo.counts_to_csv(out / "tomography_counts.csv")
        (out / "density_matrix_tomography.txt").write_text(tomo.state.to_text(), encoding="utf-8")
        info["tomography_fidelity"] = polarization_state.fidelity(tomo.state)
    write_json(out / "state_summary.json", info)
    return info


def cmd_visibility(run: RunConfig, out: Path, fmt: str) -> dict:
    sec = run.sections["visibility"]
    model = run.detection
    powers = sec["powers"] if sec["powers"] is not None else np.geomspace(0.01, 100.0, 81)
    rows = pair_statistics.visibility_scan(powers, model, sec["windows"], sec["brightness"])
    write_table(out / "visibility_analytic", pair_statistics.SCAN_HEADER,
                [[r.window, r.power, r.generated_pairs, r.visibility, int(r.multipair)] for r in rows], fmt)
    mc_powers = sec["mc_powers"] if sec["mc_powers"] is not None else np.geomspace(0.025, 20.0, 10)
    mc_rows = []
    werner = polarization_state.TwoQubitState.werner(model.emitted_visibility)
    for k, p in enumerate(np.atleast_1d(mc_powers)):
        pred = pair_statistics.rates_from_pump_power(float(p), sec["brightness"], model)
        rate = sum(sum(pair_statistics.expected_setting_rates(model, pred.generated_pairs, werner, s))
                   for s in (("D", "D"), ("D", "A")))
        duration = min(sec["mc_max_duration"], sec["mc_target_coincidences"] / rate) if rate > 0 \
            else sec["mc_max_duration"]
        res = pair_statistics.montecarlo_timetags(duration, model, pred.generated_pairs, seed=[run.seed, k],
                                                  state=werner, shards=sec["mc_shards"])
        c = list(res.counts.values())
        mc_rows.append([float(p), pred.generated_pairs, duration, res.visibility, res.visibility_error,
                        pred.visibility, c[0].coincidences, c[1].coincidences, int(res.low_statistics)])
    write_table(out / "visibility_montecarlo",
                ["power_mW", "generated_pairs_per_s", "duration_s", "visibility_mc", "visibility_mc_error",
                 "visibility_analytic", "coincidences_DD", "coincidences_DA", "low_statistics"], mc_rows, fmt)
    crossing = pair_statistics.power_at_visibility(0.80, model, sec["brightness"])
    budget, load = pair_statistics.detector_budget(20e6, model)
    info = {"power_at_visibility_0.80_mW": crossing, "detectors_for_20Mcps": budget,
            "load_per_detector_cps": load}
    write_json(out / "visibility_summary.json", info)
    return info


_RUNNERS = {
    "spectrum": cmd_spectrum,
    "pm-curve": cmd_pm_curve,
    "phase-map": cmd_phase_map,
    "state": cmd_state,
    "visibility": cmd_visibility,
}


def cmd_all(run: RunConfig, out: Path, fmt: str) -> dict:
    summary = {"config": _config_snapshot(run)}
    for name in COMMANDS[:-1]:
        fn = _RUNNERS[name]
        sub = out / name.replace("-", "_")
        sub.mkdir()
        summary[name] = fn(run, sub, fmt)
    write_json(out / "summary.json", summary)
    return summary


_RUNNERS["all"] = cmd_all


# ---------------------------------------------------------------- entry point


def _publish(tmp: Path, out: Path):
    """Move the finished temporary directory onto ``out``."""
    if out.exists():
        old = out.with_name(f".{out.name}.old")
        if old.exists():
            shutil.rmtree(old)
        os.replace(out, old)
        os.replace(tmp, out)
        shutil.rmtree(old)
    else:
        os.replace(tmp, out)


def run_command(command: str, run: RunConfig, out) -> dict:
    out = Path(out).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
    try:
        result = _RUNNERS[command](run, tmp, run.sections.get("_format", "csv"))
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _publish(tmp, out)
    return result


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spdcsource", description="Crossed-crystal SPDC source model.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out", default="spdcsource-out", help="output directory (replaced on success)")
    p.add_argument("--seed", type=int, help="overrides the seed in the config")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of summary tables")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be a non-negative integer")
            run = dataclasses.replace(run, seed=args.seed)
    except ConfigurationError as exc:
        print(f"spdcsource: configuration error: {exc}", file=sys.stderr)
        return 2
    sections = dict(run.sections, _format=args.format)
    run = dataclasses.replace(run, sections=sections)
    try:
        run_command(args.command, run, args.out)
    except ConfigurationError as exc:
        print(f"spdcsource: configuration error: {exc}", file=sys.stderr)
        return 2
    except (SpdcSourceError, ValueError, ArithmeticError) as exc:
        print(f"spdcsource: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
