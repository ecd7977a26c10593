#!/usr/bin/env python3
"""
Tool: Spectral Model
Description: Collinear type-I (e -> o + o) phase matching in a birefringent
crystal: Sellmeier dispersion, cut-angle calibration, the joint spectral
intensity, SPDC idler marginal, seeded DFG spectrum and the
spectrally-averaged phase model.

Wavelengths are in meters everywhere except the coefficient/crystal files
and CSV exports, which use nanometers (and the Sellmeier forms, which take µm).

Usage:
    python tools/spectral.py                         # calibrate + print widths for the default crystal
    python tools/spectral.py --crystal data/crystal_mgo_linbo3.json --seed-nm 811
"""

import os
import sys
import argparse
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from rich.table import Table
from scipy.integrate import trapezoid
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import bisect

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import (
    CalibrationError, InvalidArgumentError, OutOfRangeError,
    UndefinedAverageError, UnresolvedWidthError,
)
from tools.qstate import DensityMatrix, bell_state, fidelity_to_pure
from tools.run_utils import PROJECT_ROOT, console, read_json, resolve_path

DEFAULT_CRYSTAL_PATH = os.path.join(PROJECT_ROOT, "data", "crystal_mgo_linbo3.json")

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
CALIBRATION_BRACKET = np.deg2rad(10.0)
CALIBRATION_XTOL = 1e-12
SINC_TAYLOR_LIMIT = 1e-8


# ---------------------------------------------------------------------------
# Sellmeier dispersion
# ---------------------------------------------------------------------------

def _sellmeier_3term(lam_um, c):
    """n² = 1 + Σ A_i λ²/(λ² − B_i); c = [A1, B1, A2, B2, A3, B3]."""
    lam2 = lam_um ** 2
    n2 = 1.0
    for a, b in zip(c[0::2], c[1::2]):
        n2 = n2 + a * lam2 / (lam2 - b)
    return n2


def _sellmeier_4coef(lam_um, c):
    """n² = A + B/(λ² − C) − D λ²; c = [A, B, C, D]."""
    lam2 = lam_um ** 2
    return c[0] + c[1] / (lam2 - c[2]) - c[3] * lam2


SELLMEIER_FORMS = {
    "sellmeier-3term": (_sellmeier_3term, 6),
    "sellmeier-4coef": (_sellmeier_4coef, 4),
}


@dataclass(frozen=True)
class SellmeierData:
    form: str
    ordinary: tuple
    extraordinary: tuple
    window_min: float
    window_max: float
    source: str = ""

    def __post_init__(self):
        if self.form not in SELLMEIER_FORMS:
            raise InvalidArgumentError(f"unknown Sellmeier form {self.form!r} (use {', '.join(SELLMEIER_FORMS)})")
        _, n_coeffs = SELLMEIER_FORMS[self.form]
        for name in ("ordinary", "extraordinary"):
            coeffs = tuple(float(c) for c in getattr(self, name))
            if len(coeffs) != n_coeffs:
                raise InvalidArgumentError(f"{self.form} needs {n_coeffs} {name} coefficients, got {len(coeffs)}")
            object.__setattr__(self, name, coeffs)
        if not 0 < self.window_min < self.window_max:
            raise InvalidArgumentError("validity window must satisfy 0 < min < max")

    def index(self, wavelength, ordinary):
        fn, _ = SELLMEIER_FORMS[self.form]
        coeffs = self.ordinary if ordinary else self.extraordinary
        return np.sqrt(fn(np.asarray(wavelength, dtype=float) * 1e6, coeffs))


def load_sellmeier(path):
    """Read a coefficient file (window given in nm)."""
    payload = read_json(path)
    try:
        lo, hi = payload["validity_window_nm"]
        return SellmeierData(
            form=payload["form"],
            ordinary=tuple(payload["ordinary"]),
            extraordinary=tuple(payload["extraordinary"]),
            window_min=float(lo) * 1e-9,
            window_max=float(hi) * 1e-9,
            source=payload.get("source", ""),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"{path}: malformed coefficient file ({e})") from None


# ---------------------------------------------------------------------------
# Crystal configuration
# ---------------------------------------------------------------------------

def implied_pump(signal, idler):
    """λp from energy conservation 1/λp = 1/λs + 1/λi."""
    return 1.0 / (1.0 / signal + 1.0 / idler)


@dataclass(frozen=True)
class CrystalConfig:
    sellmeier: SellmeierData
    length: float = 2e-3
    cut_angle: float = float(np.deg2rad(68.0))
    pump_center: float = None
    design_signal: float = 810e-9
    design_idler: float = 1550e-9
    pump_fwhm: float = 0.1e-9

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidArgumentError(f"crystal length must be positive, got {self.length!r}")
        if not 0.0 < self.cut_angle < np.pi / 2:
            raise InvalidArgumentError(f"cut angle must lie in (0, π/2), got {self.cut_angle!r}")
        for name in ("design_signal", "design_idler", "pump_fwhm"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        implied = implied_pump(self.design_signal, self.design_idler)
        if self.pump_center is None:
            object.__setattr__(self, "pump_center", implied)
        elif not self.pump_center > 0 or abs(self.pump_center - implied) / implied > 1e-4:
            raise InvalidArgumentError(
                f"pump_center {self.pump_center * 1e9:.4f} nm is inconsistent with the design "
                f"wavelengths (energy conservation gives {implied * 1e9:.4f} nm)")


# crystal-file key -> (CrystalConfig field, unit scale)
_CRYSTAL_KEYS = {
    "length_mm": ("length", 1e-3),
    "cut_angle_deg": ("cut_angle", np.pi / 180.0),
    "pump_center_nm": ("pump_center", 1e-9),
    "design_signal_nm": ("design_signal", 1e-9),
    "design_idler_nm": ("design_idler", 1e-9),
    "pump_fwhm_nm": ("pump_fwhm", 1e-9),
}


def load_crystal_config(path=None, overrides=None):
    """
    Crystal JSON -> CrystalConfig. `overrides` uses the same keys as the file
    (e.g. {"pump_fwhm_nm": 0.05}); None values are ignored.
    """
    path = path or DEFAULT_CRYSTAL_PATH
    payload = dict(read_json(path))
    payload.update({k: v for k, v in (overrides or {}).items() if v is not None})

    coeff_path = payload.pop("sellmeier_file", None)
    if coeff_path is None:
        raise InvalidArgumentError(f"{path}: missing 'sellmeier_file'")
    sellmeier = load_sellmeier(resolve_path(coeff_path, os.path.dirname(os.path.abspath(path))))

    kwargs = {}
    for key, value in payload.items():
        if key in ("name", "source", "notes"):
            continue
        if key not in _CRYSTAL_KEYS:
            raise InvalidArgumentError(f"{path}: unknown crystal key {key!r}")
        field, scale = _CRYSTAL_KEYS[key]
        kwargs[field] = None if value is None else float(value) * scale
    return CrystalConfig(sellmeier=sellmeier, **kwargs)


# ---------------------------------------------------------------------------
# Refractive index and phase mismatch
# ---------------------------------------------------------------------------

class Polarization(Enum):
    ORDINARY = "ordinary"
    EXTRAORDINARY_AT_ANGLE = "extraordinary_at_angle"


def _check_window(config, wavelength, what="wavelength"):
    lam = np.asarray(wavelength, dtype=float)
    s = config.sellmeier
    if np.any(~np.isfinite(lam)) or np.any(lam < s.window_min) or np.any(lam > s.window_max):
        bad = lam[(lam < s.window_min) | (lam > s.window_max) | ~np.isfinite(lam)]
        raise OutOfRangeError(
            f"{what} {float(bad.flat[0]) * 1e9:.3f} nm is outside the Sellmeier validity window "
            f"[{s.window_min * 1e9:g}, {s.window_max * 1e9:g}] nm")


def refractive_index(config, wavelength, polarization=Polarization.ORDINARY, angle=None):
    """
    n_o(λ), or n(θ) with 1/n(θ)² = cos²θ/n_o² + sin²θ/n_e² for the
    extraordinary wave at angle θ to the optic axis (default: cut angle).
    """
    _check_window(config, wavelength)
    n_o = config.sellmeier.index(wavelength, ordinary=True)
    if Polarization(polarization) is Polarization.ORDINARY:
        return n_o
    theta = config.cut_angle if angle is None else angle
    n_e = config.sellmeier.index(wavelength, ordinary=False)
    return 1.0 / np.sqrt(np.cos(theta) ** 2 / n_o ** 2 + np.sin(theta) ** 2 / n_e ** 2)


def delta_k(config, lambda_s, lambda_i, angle=None):
    """Δk = k_p − k_s − k_i (1/m) with λp fixed by energy conservation."""
    lambda_s = np.asarray(lambda_s, dtype=float)
    lambda_i = np.asarray(lambda_i, dtype=float)
    lambda_p = implied_pump(lambda_s, lambda_i)
    _check_window(config, lambda_s, "signal wavelength")
    _check_window(config, lambda_i, "idler wavelength")
    _check_window(config, lambda_p, "pump wavelength")
    k_p = 2 * np.pi * refractive_index(config, lambda_p, Polarization.EXTRAORDINARY_AT_ANGLE, angle) / lambda_p
    k_s = 2 * np.pi * refractive_index(config, lambda_s) / lambda_s
    k_i = 2 * np.pi * refractive_index(config, lambda_i) / lambda_i
    return k_p - k_s - k_i


def calibrate_cut_angle(config):
    """Angle (rad) solving Δk(design_signal, design_idler) = 0 within cut_angle ± 10°."""
    lo = max(config.cut_angle - CALIBRATION_BRACKET, 1e-6)
    hi = min(config.cut_angle + CALIBRATION_BRACKET, np.pi / 2 - 1e-6)

    def mismatch(theta):
        return float(delta_k(config, config.design_signal, config.design_idler, theta))

    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise CalibrationError(
            f"no phase-matching angle within {np.rad2deg(lo):.2f}°–{np.rad2deg(hi):.2f}° "
            f"for {config.design_signal * 1e9:g}/{config.design_idler * 1e9:g} nm; "
            "check the coefficient file against the design wavelengths")
    return float(bisect(mismatch, lo, hi, xtol=CALIBRATION_XTOL, maxiter=200))


def calibrated(config):
    """Copy of `config` with the calibrated cut angle."""
    return replace(config, cut_angle=calibrate_cut_angle(config))


# ---------------------------------------------------------------------------
# Grids and spectra
# ---------------------------------------------------------------------------

def _strictly_increasing(axis, name):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size < 2:
        raise InvalidArgumentError(f"{name} needs at least 2 points")
    if np.any(np.diff(axis) <= 0):
        raise InvalidArgumentError(f"{name} must be strictly increasing")
    axis = axis.copy()
    axis.setflags(write=False)
    return axis


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    signal_axis: np.ndarray
    idler_axis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "signal_axis", _strictly_increasing(self.signal_axis, "signal axis"))
        object.__setattr__(self, "idler_axis", _strictly_increasing(self.idler_axis, "idler axis"))

    @property
    def shape(self):
        return len(self.signal_axis), len(self.idler_axis)


def make_grid(config, n_signal=257, n_idler=257, signal_window=None, idler_window=None):
    """
    Uniform grid. Default windows are design_signal ± 10 nm and
    design_idler ± 30 nm; odd point counts put the design point on the grid.
    """
    s_lo, s_hi = signal_window or (config.design_signal - 10e-9, config.design_signal + 10e-9)
    i_lo, i_hi = idler_window or (config.design_idler - 30e-9, config.design_idler + 30e-9)
    return SpectralGrid(np.linspace(s_lo, s_hi, n_signal), np.linspace(i_lo, i_hi, n_idler))


@dataclass(frozen=True, eq=False)
class Spectrum:
    wavelengths: np.ndarray
    intensities: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        lam = _strictly_increasing(self.wavelengths, "spectrum wavelengths")
        values = np.asarray(self.intensities, dtype=float).copy()
        if values.shape != lam.shape:
            raise InvalidArgumentError("wavelengths and intensities differ in length")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidArgumentError("spectrum intensities must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "wavelengths", lam)
        object.__setattr__(self, "intensities", values)

    @property
    def peak_wavelength(self):
        return float(self.wavelengths[int(np.argmax(self.intensities))])


def _peak_normalized(wavelengths, values):
    peak = float(np.max(values)) if values.size else 0.0
    if peak <= 0:
        return Spectrum(wavelengths, values, normalized=False)
    return Spectrum(wavelengths, values / peak)


@dataclass(frozen=True, eq=False)
class JsiGrid:
    """Peak-normalized JSI; intensities[i, j] is at (signal_axis[i], idler_axis[j])."""

    grid: SpectralGrid
    intensities: np.ndarray


def sinc(x):
    """sin(x)/x with the removable singularity patched by its Taylor value."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SINC_TAYLOR_LIMIT
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x ** 2 / 6.0, np.sin(safe) / safe)


def pump_envelope(config, lambda_s, lambda_i):
    """|α|²: Gaussian in 1/λs + 1/λi − 1/λp with the pump FWHM mapped to 1/λ."""
    detuning = 1.0 / np.asarray(lambda_s) + 1.0 / np.asarray(lambda_i) - 1.0 / config.pump_center
    width = config.pump_fwhm / config.pump_center ** 2
    return np.exp(-4.0 * np.log(2.0) * (detuning / width) ** 2)


def phase_matching(config, lambda_s, lambda_i):
    """sinc²(Δk·L/2)."""
    return sinc(delta_k(config, lambda_s, lambda_i) * config.length / 2.0) ** 2


def jsi(config, grid):
    """|α(λs,λi)|²·sinc²(Δk·L/2) over `grid`, peak-normalized."""
    ss, ii = np.meshgrid(grid.signal_axis, grid.idler_axis, indexing="ij")
    values = pump_envelope(config, ss, ii) * phase_matching(config, ss, ii)
    peak = float(np.max(values))
    if peak > 0:
        values = values / peak
    values.setflags(write=False)
    return JsiGrid(grid, values)


def spdc_marginal(jsi_grid):
    """Idler marginal: trapezoidal sum of the JSI over the signal axis."""
    values = trapezoid(jsi_grid.intensities, jsi_grid.grid.signal_axis, axis=0)
    return _peak_normalized(jsi_grid.grid.idler_axis, np.clip(values, 0.0, None))


def dfg_spectrum(config, seed_wavelength, idler_axis):
    """Stimulated idler spectrum for a monochromatic seed (a JSI slice)."""
    _check_window(config, seed_wavelength, "seed wavelength")
    idler_axis = _strictly_increasing(idler_axis, "idler axis")
    values = pump_envelope(config, seed_wavelength, idler_axis) * phase_matching(config, seed_wavelength, idler_axis)
    return _peak_normalized(idler_axis, values)


def instrument_broadening(spectrum, resolution):
    """Convolve with a Gaussian instrument response of FWHM `resolution` (uniform grid)."""
    if not resolution > 0:
        raise InvalidArgumentError(f"resolution must be positive, got {resolution!r}")
    steps = np.diff(spectrum.wavelengths)
    if np.max(np.abs(steps - steps[0])) > 1e-6 * steps[0]:
        raise InvalidArgumentError("instrument broadening needs a uniform wavelength grid")
    sigma_samples = resolution / FWHM_PER_SIGMA / steps[0]
    values = gaussian_filter1d(spectrum.intensities, sigma_samples, mode="constant", truncate=6.0)
    return _peak_normalized(spectrum.wavelengths, np.clip(values, 0.0, None))


def fwhm(spectrum):
    """Width between the outermost half-maximum crossings, linearly interpolated."""
    lam, y = spectrum.wavelengths, spectrum.intensities
    peak = int(np.argmax(y))
    half = 0.5 * y[peak]
    if half <= 0:
        raise UnresolvedWidthError("spectrum is identically zero")

    above = np.nonzero(y >= half)[0]
    left, right = int(above[0]), int(above[-1])
    if left == 0 or right == len(y) - 1:
        raise UnresolvedWidthError("spectrum does not fall below half maximum on both sides of the peak")

    def crossing(i_below, i_above):
        y0, y1 = y[i_below], y[i_above]
        return lam[i_below] + (half - y0) * (lam[i_above] - lam[i_below]) / (y1 - y0)

    return float(crossing(right + 1, right) - crossing(left - 1, left))


# ---------------------------------------------------------------------------
# Phase model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseDispersionModel:
    """
    θ(λi) = theta0 + slope·(λi − design_idler); slope in rad/m.
    Without an explicit pump_wavelength the pump follows from design_signal and design_idler.
    """

    theta0: float
    slope: float
    design_idler: float = 1550e-9
    pump_wavelength: float = None
    design_signal: float = 810e-9

    def __post_init__(self):
        if not (np.isfinite(self.theta0) and np.isfinite(self.slope)):
            raise InvalidArgumentError("phase model parameters must be finite")
        if self.pump_wavelength is None:
            object.__setattr__(self, "pump_wavelength", implied_pump(self.design_signal, self.design_idler))

    @classmethod
    def for_crystal(cls, config, theta0, slope):
        return cls(theta0, slope, design_idler=config.design_idler,
                   pump_wavelength=config.pump_center, design_signal=config.design_signal)

    def theta(self, idler_wavelength):
        return self.theta0 + self.slope * (np.asarray(idler_wavelength, dtype=float) - self.design_idler)

    def phase_matched_idler(self, seed_wavelength):
        return 1.0 / (1.0 / self.pump_wavelength - 1.0 / seed_wavelength)


def phase_comparison(model, spdc_idler_spectrum, seed_wavelength):
    """
    (theta_qst, theta_set): the intensity-weighted circular mean of θ over the
    SPDC idler spectrum, and θ at the idler phase-matched to the seed.
    """
    weights = spdc_idler_spectrum.intensities
    if not np.sum(weights) > 0:
        raise UndefinedAverageError("SPDC spectrum has zero total intensity")
    if model.slope == 0:
        return float(model.theta0), float(model.theta0)

    offsets = model.theta(spdc_idler_spectrum.wavelengths) - model.theta0
    resultant = np.sum(weights * np.exp(1j * offsets))
    if abs(resultant) <= 1e-300:
        raise UndefinedAverageError("phases cancel over the spectrum; circular mean undefined")
    theta_qst = model.theta0 + float(np.angle(resultant))
    theta_set = float(model.theta(model.phase_matched_idler(seed_wavelength)))
    return theta_qst, theta_set


def spectrally_averaged_state(model, spectrum):
    """Σ S(λ)|Ψθ(λ)⟩⟨Ψθ(λ)| / Σ S(λ): the polarization state after tracing out frequency."""
    weights = spectrum.intensities
    total = float(np.sum(weights))
    if not total > 0:
        raise UndefinedAverageError("spectrum has zero total intensity")
    coherence = np.sum(weights * np.exp(1j * model.theta(spectrum.wavelengths))) / total
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[3, 3] = 0.5
    m[3, 0] = 0.5 * coherence
    m[0, 3] = np.conj(m[3, 0])
    return DensityMatrix.from_array(m)


@dataclass(frozen=True)
class SeedScanPoint:
    seed_wavelength: float
    peak_idler: float
    width: float
    theta: float


def seed_scan(config, model, seed_wavelengths, idler_axis):
    """Energy-resolved SET: DFG peak, width and phase for each seed wavelength."""
    points = []
    for seed in seed_wavelengths:
        spectrum = dfg_spectrum(config, seed, idler_axis)
        try:
            width = fwhm(spectrum)
        except UnresolvedWidthError:
            width = float("nan")
        points.append(SeedScanPoint(float(seed), spectrum.peak_wavelength, width,
                                    float(model.theta(model.phase_matched_idler(seed)))))
    return points


def main():
    parser = argparse.ArgumentParser(description="Calibrate the crystal and compare SPDC / DFG widths")
    parser.add_argument("--crystal", default=None, help="crystal JSON (default: data/crystal_mgo_linbo3.json)")
    parser.add_argument("--seed-nm", type=float, default=None, help="seed wavelength (default: design signal)")
    parser.add_argument("--grid", type=int, default=257, help="points per axis")
    args = parser.parse_args()

    config = calibrated(load_crystal_config(args.crystal))
    seed = args.seed_nm * 1e-9 if args.seed_nm else config.design_signal
    grid = make_grid(config, args.grid, args.grid)
    spdc = spdc_marginal(jsi(config, grid))
    dfg = dfg_spectrum(config, seed, grid.idler_axis)

    table = Table(title="Type-I phase matching", border_style="bright_blue")
    table.add_column("Quantity", style="bold white")
    table.add_column("Value", justify="right")
    table.add_row("Calibrated cut angle", f"{np.rad2deg(config.cut_angle):.4f}°")
    table.add_row("Pump centre", f"{config.pump_center * 1e9:.3f} nm")
    table.add_row("n_o(signal)", f"{float(refractive_index(config, config.design_signal)):.6f}")
    table.add_row("n_o(idler)", f"{float(refractive_index(config, config.design_idler)):.6f}")
    table.add_row("SPDC idler FWHM", f"{fwhm(spdc) * 1e9:.3f} nm")
    table.add_row("DFG idler FWHM", f"{fwhm(dfg) * 1e9:.3f} nm")
    table.add_row("DFG peak", f"{dfg.peak_wavelength * 1e9:.3f} nm")
    console.print(table)

    ref = bell_state(0.0)
    model = PhaseDispersionModel.for_crystal(config, 0.0, -1e6)
    table = Table(title="Spectrally averaged fidelity (slope −1 mrad/nm)", border_style="bright_blue")
    table.add_column("Spectrum", style="bold white")
    table.add_column("Fidelity", justify="right")
    table.add_row("SPDC", f"{fidelity_to_pure(spectrally_averaged_state(model, spdc), ref):.6f}")
    table.add_row("DFG", f"{fidelity_to_pure(spectrally_averaged_state(model, dfg), ref):.6f}")
    console.print(table)


if __name__ == "__main__":
    main()
