#!/usr/bin/env python3
"""
Tool: Run Pipeline
Description: Command-line entry point for every tomography and spectral
command. Each command is a pure function of its input files, the run config
and --seed, so reruns produce byte-identical outputs.

Commands:
  simulate-qst   simulate coincidence counts        -> records CSV
  simulate-set   simulate stimulated idler powers   -> records CSV
  reconstruct    MLE / linear reconstruction        -> density JSON (+ bootstrap CSV)
  metrics        fidelity, concurrence, purity, θ   -> metrics CSV
  jsi            joint spectral intensity           -> long-form CSV
  spectra        SPDC marginal and DFG spectrum     -> spectra CSV
  phase-model    QST vs SET phase, averaged states  -> quantity,value CSV (+ seed-scan CSV)

Settings precedence: flags > config.json (or $TOMO_CONFIG) > built-in defaults.
On failure, partial outputs are removed and a one-line JSON error record is
printed to stdout (exit status 1).

Usage:
    python tools/run_pipeline.py simulate-set --state bell:0.0247 --instrument power_meter --seed 1 --out .tmp/set_pm.csv
    python tools/run_pipeline.py reconstruct --in .tmp/set_pm.csv --bootstrap 100 --out .tmp/set_pm_rho.json
    python tools/run_pipeline.py metrics --rho .tmp/set_pm_rho.json --target bell:0 --out .tmp/set_pm_metrics.csv
    python tools/run_pipeline.py spectra --grid 513x513 --resolution-nm 0.5 --out .tmp/spectra.csv
    python tools/run_pipeline.py phase-model --theta0 0.0247 --slope -1e6 --seed-wavelength 810e-9
    python tools/run_pipeline.py phase-model --seed-scan-nm 808,809,810,811,812 --out .tmp/phase_model.csv
"""

import os
import sys
import json
import argparse
from dataclasses import dataclass

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.emit_metrics import emit_metrics, print_report, resolve_target
from tools.errors import InvalidArgumentError, TomographyError, UndefinedPhaseError
from tools.measurement_model import (
    VALUE_POWER, QstNoiseModel, SetNoiseModel, build_plan, noise_model_from_dict, simulate_qst,
    simulate_set,
)
from tools.mle_reconstruct import (
    METRIC_NAMES, METHODS, OBJECTIVES, bootstrap, fit_options_from_dict, mle_fit, relative_residual,
)
from tools.qstate import bell_state, fidelity_to_pure, relative_phase, state_from_preset
from tools.record_io import (
    parse_records, read_bootstrap, read_density, write_bootstrap, write_jsi, write_quantities,
    write_records, write_reconstruction, write_seed_scan, write_spectra,
)
from tools.run_utils import (
    TMP_DIR, load_config, log, log_done, merge_settings, parse_grid, read_json, resolve_path, warn,
)
from tools.spectral import (
    PhaseDispersionModel, calibrated, dfg_spectrum, fwhm, instrument_broadening, jsi,
    load_crystal_config, make_grid, phase_comparison, seed_scan, spdc_marginal,
    spectrally_averaged_state,
)

COMMANDS = ("simulate-qst", "simulate-set", "reconstruct", "metrics", "jsi", "spectra", "phase-model")

# relative residual above which a power fit is reported as poor
POOR_FIT_RESIDUAL = 0.2

DEFAULT_OUTPUTS = {
    "simulate-qst": "qst_records.csv",
    "simulate-set": "set_records.csv",
    "reconstruct": "rho.json",
    "metrics": "metrics.csv",
    "jsi": "jsi.csv",
    "spectra": "spectra.csv",
    "phase-model": "phase_model.csv",
}


@dataclass
class RunConfig:
    command: str
    output: str = None
    input: str = None
    rho: str = None
    state: str = "bell:0"
    noise: str = None
    instrument: str = None
    rng_seed: int = 0
    method: str = None
    objective: str = None
    refine: bool = None
    workers: int = None
    bootstrap: int = 0
    bootstrap_out: str = None
    bootstrap_in: str = None
    target: str = "bell:0"
    crystal: str = None
    grid: str = None
    seed_wavelength: float = None
    resolution: float = None
    theta0: float = None
    slope: float = None
    seed_scan: tuple = None
    seed_scan_out: str = None
    config_path: str = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidArgumentError(f"unknown command {self.command!r}")
        if self.rng_seed is None:
            self.rng_seed = 0
        if self.bootstrap and self.bootstrap < 2:
            raise InvalidArgumentError("--bootstrap needs at least 2 resamples")

    def resolve_outputs(self, settings):
        """Fill default output paths: $TOMO_OUTPUT_DIR, then config output.dir, then .tmp/."""
        if self.output is None:
            directory = os.getenv("TOMO_OUTPUT_DIR") or resolve_path(settings.get("output", {}).get("dir")) or TMP_DIR
            self.output = os.path.join(directory, DEFAULT_OUTPUTS[self.command])
        if self.command == "reconstruct" and self.bootstrap and not self.bootstrap_out:
            stem, _ = os.path.splitext(self.output)
            self.bootstrap_out = f"{stem}.bootstrap.csv"
        if self.command == "phase-model" and self.seed_scan and not self.seed_scan_out:
            stem, _ = os.path.splitext(self.output)
            self.seed_scan_out = f"{stem}.seed_scan.csv"

    def outputs(self):
        return [p for p in (self.output, self.bootstrap_out, self.seed_scan_out) if p]

    def validate_paths(self):
        """Inputs must exist and outputs must not collide with them."""
        required = {"reconstruct": ["input"], "metrics": ["rho"]}.get(self.command, [])
        for name in required:
            if not getattr(self, name):
                raise InvalidArgumentError(f"{self.command} needs --{'in' if name == 'input' else name}")
        for name in ("input", "rho", "noise", "crystal", "bootstrap_in"):
            path = getattr(self, name)
            if path and not os.path.isfile(path):
                raise InvalidArgumentError(f"{name} file not found: {path}")
        inputs = {os.path.abspath(p) for p in (self.input, self.rho, self.noise, self.bootstrap_in) if p}
        for path in self.outputs():
            if os.path.abspath(path) in inputs:
                raise InvalidArgumentError(f"output {path} would overwrite an input file")


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def _load_state(spec):
    if spec and str(spec).lower().endswith(".json"):
        return read_density(spec)
    return state_from_preset(spec)


def _noise_settings(cfg, settings, section, preset=None):
    values = merge_settings({}, settings.get(section), preset)
    if cfg.noise:
        values.update(read_json(cfg.noise))
    values["rng_seed"] = cfg.rng_seed
    return values


def _simulate_qst(cfg, settings):
    noise = noise_model_from_dict(QstNoiseModel, _noise_settings(cfg, settings, "qst_noise"))
    records = simulate_qst(_load_state(cfg.state), build_plan(), noise)
    write_records(records, cfg.output)
    log_done(f"{len(records)} QST records ({noise.detected_pairs:.4g} pairs at unit probability) → {cfg.output}")


def _simulate_set(cfg, settings):
    preset = {}
    if cfg.instrument:
        presets = settings.get("set_instruments", {})
        if cfg.instrument not in presets:
            raise InvalidArgumentError(
                f"unknown instrument {cfg.instrument!r} (config has: {', '.join(sorted(presets)) or 'none'})")
        preset = presets[cfg.instrument]
    noise = noise_model_from_dict(SetNoiseModel, _noise_settings(cfg, settings, "set_noise", preset))
    records = simulate_set(_load_state(cfg.state), build_plan(), noise)
    write_records(records, cfg.output)
    log_done(f"{len(records)} SET records → {cfg.output}")


def _fit_options(cfg, settings):
    values = merge_settings({}, settings.get("reconstruction"), {
        "method": cfg.method,
        "objective": cfg.objective,
        "refine": cfg.refine,
        "workers": cfg.workers,
    })
    values["rng_seed"] = cfg.rng_seed
    return fit_options_from_dict(values)


def _reconstruct(cfg, settings):
    records = parse_records(cfg.input)
    if not records:
        raise InvalidArgumentError(f"{cfg.input} has no measurement rows")
    options = _fit_options(cfg, settings)
    is_power = records[0].value_kind == VALUE_POWER
    simulated_conjugation = settings.get("set_noise", {}).get("seed_conjugation")
    if is_power and simulated_conjugation is not None and bool(simulated_conjugation) != options.seed_conjugation:
        warn("set_noise.seed_conjugation and reconstruction.seed_conjugation differ; "
             "simulated SET records will not fit")
    log(f"Reconstructing {len(records)} {records[0].value_kind} records ({options.method}, {options.objective})")
    result = mle_fit(records, options=options)
    if not result.converged:
        warn(f"optimizer stopped before convergence after {result.iterations} iterations")
    if is_power:
        residual = relative_residual(records, result, options)
        if residual > POOR_FIT_RESIDUAL:
            warn(f"fit residuals are {residual:.0%} of the measured powers; check that "
                 "reconstruction.seed_conjugation matches how the records were taken")
    write_reconstruction(cfg.output, result)
    log_done(f"ρ → {cfg.output} (objective {result.objective_value:.6g}, {result.iterations} iterations)")

    if cfg.bootstrap:
        target, _ = resolve_target(cfg.target)
        metrics = list(METRIC_NAMES)
        try:
            relative_phase(result.rho)
        except UndefinedPhaseError:
            metrics.remove("relative_phase")
        stats = bootstrap(records, cfg.bootstrap, metrics, options, target, base_fit=result)
        write_bootstrap(cfg.bootstrap_out, stats)
        log_done(f"{cfg.bootstrap} bootstrap resamples → {cfg.bootstrap_out}")


def _metrics(cfg, settings):
    rho = read_density(cfg.rho)
    stds = read_bootstrap(cfg.bootstrap_in) if cfg.bootstrap_in else None
    report = emit_metrics(rho, cfg.target, stds, cfg.output)
    print_report(report)
    log_done(f"metrics → {cfg.output}")


def _crystal(cfg, settings):
    section = dict(settings.get("crystal", {}))
    file_path = section.pop("file", None)
    path = cfg.crystal or resolve_path(file_path)
    config = calibrated(load_crystal_config(path, section))
    log(f"Calibrated cut angle {np.rad2deg(config.cut_angle):.4f}° (pump {config.pump_center * 1e9:.3f} nm)")
    return config


def _grid(cfg, settings, config):
    spec = cfg.grid or settings.get("spectral", {}).get("grid", "257x257")
    n_signal, n_idler = parse_grid(spec)
    return make_grid(config, n_signal, n_idler)


def _seed_wavelength(cfg, settings, config):
    if cfg.seed_wavelength:
        return cfg.seed_wavelength
    seed_nm = settings.get("spectral", {}).get("seed_wavelength_nm")
    return float(seed_nm) * 1e-9 if seed_nm else config.design_signal


def _jsi(cfg, settings):
    config = _crystal(cfg, settings)
    grid = _grid(cfg, settings, config)
    write_jsi(cfg.output, jsi(config, grid))
    log_done(f"JSI {grid.shape[0]}×{grid.shape[1]} → {cfg.output}")


def _spectra(cfg, settings):
    config = _crystal(cfg, settings)
    grid = _grid(cfg, settings, config)
    spdc = spdc_marginal(jsi(config, grid))
    dfg = dfg_spectrum(config, _seed_wavelength(cfg, settings, config), grid.idler_axis)
    columns = {"spdc": spdc.intensities, "dfg": dfg.intensities}

    resolution = cfg.resolution
    if resolution is None and settings.get("spectral", {}).get("instrument_resolution_nm"):
        resolution = float(settings["spectral"]["instrument_resolution_nm"]) * 1e-9
    if resolution:
        columns["dfg_broadened"] = instrument_broadening(dfg, resolution).intensities
    write_spectra(cfg.output, grid.idler_axis, columns)
    log_done(f"spectra ({', '.join(columns)}) → {cfg.output}")


def _phase_model(cfg, settings):
    section = settings.get("phase_model", {})
    theta0 = cfg.theta0 if cfg.theta0 is not None else section.get("theta0", 0.0)
    slope = cfg.slope if cfg.slope is not None else section.get("slope", 0.0)
    config = _crystal(cfg, settings)
    grid = _grid(cfg, settings, config)
    seed = _seed_wavelength(cfg, settings, config)

    model = PhaseDispersionModel.for_crystal(config, float(theta0), float(slope))
    spdc = spdc_marginal(jsi(config, grid))
    dfg = dfg_spectrum(config, seed, grid.idler_axis)
    theta_qst, theta_set = phase_comparison(model, spdc, seed)

    ref_qst = bell_state(theta_qst)
    ref_set = bell_state(theta_set)
    quantities = {
        "theta_qst": theta_qst,
        "theta_set": theta_set,
        "theta_difference": theta_set - theta_qst,
        "phase_matched_idler_nm": model.phase_matched_idler(seed) * 1e9,
        "spdc_fwhm_nm": fwhm(spdc) * 1e9,
        "dfg_fwhm_nm": fwhm(dfg) * 1e9,
        "fidelity_spdc_average": fidelity_to_pure(spectrally_averaged_state(model, spdc), ref_qst),
        "fidelity_dfg_average": fidelity_to_pure(spectrally_averaged_state(model, dfg), ref_set),
    }
    write_quantities(cfg.output, quantities)
    log_done(f"θ_QST = {theta_qst:.5f}, θ_SET = {theta_set:.5f} → {cfg.output}")

    if cfg.seed_scan:
        points = seed_scan(config, model, np.asarray(cfg.seed_scan), grid.idler_axis)
        write_seed_scan(cfg.seed_scan_out, points)
        log_done(f"seed scan ({len(points)} seed wavelengths) → {cfg.seed_scan_out}")


HANDLERS = {
    "simulate-qst": _simulate_qst,
    "simulate-set": _simulate_set,
    "reconstruct": _reconstruct,
    "metrics": _metrics,
    "jsi": _jsi,
    "spectra": _spectra,
    "phase-model": _phase_model,
}


def error_record(command, exc):
    return json.dumps({
        "status": "error",
        "command": command,
        "kind": getattr(exc, "kind", "io-error" if isinstance(exc, OSError) else "invalid-argument"),
        "message": str(exc),
    })


def _stamp(path):
    try:
        st = os.stat(path)
        return st.st_mtime_ns, st.st_ino
    except FileNotFoundError:
        return None


def run_pipeline(cfg):
    """Run one command. Returns the exit status (0 ok, 1 failure)."""
    before = {}
    try:
        settings = load_config(cfg.config_path)
        cfg.resolve_outputs(settings)
        before = {p: _stamp(p) for p in cfg.outputs()}
        cfg.validate_paths()
        HANDLERS[cfg.command](cfg, settings)
        return 0
    except (TomographyError, ValueError, OSError, KeyError) as e:
        # anything this run wrote is partial
        for path, stamp in before.items():
            if os.path.exists(path) and _stamp(path) != stamp:
                os.remove(path)
        print(error_record(cfg.command, e), flush=True)
        log(f"[red]Error:[/red] {cfg.command}: {e}")
        return 1


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _nm_list(text):
    try:
        values = tuple(float(v) * 1e-9 for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated wavelengths in nm, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("no seed wavelengths given")
    return values


def build_parser():
    parser = argparse.ArgumentParser(description="Polarization tomography and spectral modelling pipeline")
    parser.add_argument("--config", dest="config_path", default=None, help="config JSON (default: config.json or $TOMO_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", dest="output", default=None, help="output path (default: .tmp/<command>...)")
        p.add_argument("--seed", dest="rng_seed", type=int, default=0, help="rng seed (default 0)")

    for name, help_text in (("simulate-qst", "simulate coincidence counts"),
                            ("simulate-set", "simulate stimulated idler powers")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--state", default="bell:0", help="bell:<theta>, mixed, werner:<p> or a density JSON")
        p.add_argument("--noise", default=None, help="noise-model JSON (overrides config)")
        if name == "simulate-set":
            p.add_argument("--instrument", default=None, help="instrument preset from config (power_meter, spectrum_analyzer)")

    p = sub.add_parser("reconstruct", help="reconstruct ρ from a records CSV")
    common(p)
    p.add_argument("--in", dest="input", required=True, help="records CSV")
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--objective", choices=OBJECTIVES, default=None)
    p.add_argument("--refine", action="store_true", default=None, help="L-BFGS-B polish")
    p.add_argument("--workers", type=int, default=None, help="bootstrap worker threads")
    p.add_argument("--bootstrap", type=int, default=0, help="number of bootstrap resamples")
    p.add_argument("--bootstrap-out", default=None, help="bootstrap CSV (default: <out stem>.bootstrap.csv)")
    p.add_argument("--target", default="bell:0", help="fidelity target for the bootstrap")

    p = sub.add_parser("metrics", help="metrics of a density JSON")
    common(p)
    p.add_argument("--rho", required=True, help="density JSON")
    p.add_argument("--target", default="bell:0", help="bell:<theta> or a density JSON")
    p.add_argument("--bootstrap", dest="bootstrap_in", default=None, help="bootstrap CSV with std_devs")

    for name in ("jsi", "spectra", "phase-model"):
        p = sub.add_parser(name, help=f"{name} from the crystal model")
        common(p)
        p.add_argument("--crystal", default=None, help="crystal JSON")
        p.add_argument("--grid", default=None, help="<n>x<n> grid (default from config)")
        if name != "jsi":
            p.add_argument("--seed-wavelength", type=float, default=None, help="seed wavelength in meters")
        if name == "spectra":
            p.add_argument("--resolution-nm", dest="resolution", type=float, default=None,
                           help="spectrum-analyzer resolution; adds a broadened DFG column")
        if name == "phase-model":
            p.add_argument("--theta0", type=float, default=None, help="phase at the design idler (rad)")
            p.add_argument("--slope", type=float, default=None, help="phase slope (rad per meter of idler)")
            p.add_argument("--seed-scan-nm", dest="seed_scan", type=_nm_list, default=None,
                           help="comma-separated seed wavelengths in nm; writes <out stem>.seed_scan.csv")
    return parser


def config_from_args(args):
    values = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    if values.get("resolution") is not None:
        values["resolution"] = values["resolution"] * 1e-9
    return RunConfig(**values)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except InvalidArgumentError as e:
        parser.error(str(e))
    return run_pipeline(cfg)


if __name__ == "__main__":
    sys.exit(main())
