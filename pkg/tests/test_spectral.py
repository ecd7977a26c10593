"""
Tests for tools/spectral.py: dispersion, cut-angle calibration, JSI and
spectra, widths and the spectrally averaged phase model.
"""
import json
import os
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from tools.errors import (
    CalibrationError, InvalidArgumentError, OutOfRangeError, UndefinedAverageError,
    UnresolvedWidthError,
)
from tools.qstate import bell_state, fidelity_to_pure
from tools.run_utils import PROJECT_ROOT
from tools.spectral import (
    JsiGrid, PhaseDispersionModel, Polarization, Spectrum, SpectralGrid, calibrate_cut_angle,
    calibrated, delta_k, dfg_spectrum, fwhm, implied_pump, instrument_broadening, jsi,
    load_crystal_config, make_grid, phase_comparison, phase_matching, refractive_index, seed_scan, sinc,
    spdc_marginal, spectrally_averaged_state,
)

NM = 1e-9


@pytest.fixture(scope="module")
def crystal():
    return load_crystal_config()


@pytest.fixture(scope="module")
def cal(crystal):
    return calibrated(crystal)


@pytest.fixture(scope="module")
def grid(cal):
    return make_grid(cal, 257, 257)


@pytest.fixture(scope="module")
def jsi_grid(cal, grid):
    return jsi(cal, grid)


def gaussian_spectrum(center, sigma, lo, hi, n=4001):
    lam = np.linspace(lo, hi, n)
    return Spectrum(lam, np.exp(-0.5 * ((lam - center) / sigma) ** 2))


class TestRefractiveIndex:

    def test_ordinary_values(self, crystal):
        assert float(refractive_index(crystal, 810 * NM)) == pytest.approx(2.250437, abs=2e-6)
        assert float(refractive_index(crystal, 1550 * NM)) == pytest.approx(2.208167, abs=2e-6)

    def test_angle_zero_is_ordinary(self, crystal):
        n_o = refractive_index(crystal, 532 * NM)
        n = refractive_index(crystal, 532 * NM, Polarization.EXTRAORDINARY_AT_ANGLE, 0.0)
        assert float(n) == pytest.approx(float(n_o), abs=1e-12)

    def test_angle_ninety_is_extraordinary(self, crystal):
        n_e = crystal.sellmeier.index(532 * NM, ordinary=False)
        n = refractive_index(crystal, 532 * NM, "extraordinary_at_angle", np.pi / 2)
        assert float(n) == pytest.approx(float(n_e), abs=1e-12)

    def test_out_of_window(self, crystal):
        with pytest.raises(OutOfRangeError, match="validity window"):
            refractive_index(crystal, 300 * NM)

    def test_positive_and_smooth(self, crystal):
        lam = np.linspace(420 * NM, 4900 * NM, 5000)
        n = refractive_index(crystal, lam)
        assert np.all(n > 1)
        slope = np.abs(np.diff(n) / np.diff(lam))
        assert np.max(slope) < 2e6


class TestPhaseMismatch:

    def test_implied_pump(self):
        assert implied_pump(810 * NM, 1550 * NM) / NM == pytest.approx(531.99, abs=0.01)

    def test_calibrated_zero(self, cal):
        lam_p = implied_pump(810 * NM, 1550 * NM)
        assert abs(float(delta_k(cal, 810 * NM, 1550 * NM))) <= 1e-6 * 2 * np.pi / lam_p

    def test_continuity(self, cal):
        dk0 = float(delta_k(cal, 810.0 * NM, 1550 * NM))
        dk1 = float(delta_k(cal, 810.1 * NM, 1550 * NM))
        # |∂Δk/∂λs| stays well below 2π·n/λ² ≈ 2.2e13 m⁻²
        assert abs(dk1 - dk0) < 2.2e13 * 0.1 * NM

    def test_out_of_window(self, cal):
        with pytest.raises(OutOfRangeError):
            delta_k(cal, 810 * NM, 6000 * NM)


class TestCalibration:

    def test_root_in_bracket(self, crystal):
        angle = np.rad2deg(calibrate_cut_angle(crystal))
        assert 58.0 <= angle <= 78.0
        assert angle == pytest.approx(68.16, abs=0.01)

    def test_fixed_point(self, cal):
        assert calibrate_cut_angle(cal) == pytest.approx(cal.cut_angle, abs=1e-10)

    def test_no_sign_change(self, crystal):
        with pytest.raises(CalibrationError, match="no phase-matching angle"):
            calibrate_cut_angle(replace(crystal, cut_angle=np.deg2rad(30.0)))

    def test_calibrated_returns_copy(self, crystal, cal):
        assert crystal.cut_angle == pytest.approx(np.deg2rad(68.0))
        assert cal.cut_angle != crystal.cut_angle


class TestCrystalConfig:

    def test_defaults_from_file(self, crystal):
        assert crystal.length == pytest.approx(2e-3)
        assert crystal.pump_center == pytest.approx(implied_pump(810 * NM, 1550 * NM))
        assert len(crystal.sellmeier.ordinary) == 6

    def test_inconsistent_pump(self):
        with pytest.raises(InvalidArgumentError, match="energy conservation"):
            load_crystal_config(overrides={"pump_center_nm": 540.0})

    def test_pump_from_design_wavelengths(self, crystal):
        assert crystal.pump_center == pytest.approx(810e-9 * 1550e-9 / 2360e-9, rel=1e-12)

    def test_532_pump_is_consistent(self):
        assert load_crystal_config(overrides={"pump_center_nm": 532.0}).pump_center == pytest.approx(532 * NM)

    def test_unknown_key(self, tmp_path):
        coeffs = os.path.join(PROJECT_ROOT, "data", "sellmeier_mgo_linbo3_5pct.json")
        path = tmp_path / "crystal.json"
        path.write_text(json.dumps({"sellmeier_file": coeffs, "colour": 1}))
        with pytest.raises(InvalidArgumentError, match="unknown crystal key"):
            load_crystal_config(str(path))

    def test_bad_cut_angle(self, crystal):
        with pytest.raises(InvalidArgumentError, match="cut angle"):
            replace(crystal, cut_angle=2.0)


class TestJsi:

    def test_design_point_is_peak(self, jsi_grid, grid):
        i, j = 128, 128
        assert grid.signal_axis[i] == pytest.approx(810 * NM, rel=1e-12)
        assert grid.idler_axis[j] == pytest.approx(1550 * NM, rel=1e-12)
        assert jsi_grid.intensities[i, j] == pytest.approx(1.0, abs=1e-9)
        assert np.max(jsi_grid.intensities) == pytest.approx(1.0)

    def test_far_from_energy_conservation(self, jsi_grid):
        assert jsi_grid.intensities[0, 0] < 1e-6
        assert jsi_grid.intensities[-1, -1] < 1e-6

    def test_ridge_follows_energy_conservation(self, cal, grid, jsi_grid):
        step = grid.idler_axis[1] - grid.idler_axis[0]
        checked = 0
        for i, lam_s in enumerate(grid.signal_axis):
            lam_i = 1.0 / (1.0 / cal.pump_center - 1.0 / lam_s)
            if not grid.idler_axis[0] < lam_i < grid.idler_axis[-1]:
                continue
            # outside the phase-matching main lobe the sinc² slope drags the peak off the ridge
            if float(phase_matching(cal, lam_s, lam_i)) < 0.5:
                continue
            peak = grid.idler_axis[int(np.argmax(jsi_grid.intensities[i]))]
            assert abs(peak - lam_i) <= 2 * step
            checked += 1
        assert checked > 20

    def test_values_in_unit_interval(self, jsi_grid):
        assert np.all(jsi_grid.intensities >= 0)
        assert np.all(jsi_grid.intensities <= 1)

    def test_grid_refinement(self, cal):
        coarse, fine = make_grid(cal, 257, 257), make_grid(cal, 513, 513)
        total = []
        for g in (coarse, fine):
            values = jsi(cal, g).intensities
            total.append(trapezoid(trapezoid(values, g.idler_axis, axis=1), g.signal_axis))
        assert abs(total[1] - total[0]) / total[1] < 0.01

    def test_out_of_window_grid(self, cal):
        grid = SpectralGrid(np.linspace(300 * NM, 320 * NM, 5), np.linspace(1540 * NM, 1560 * NM, 5))
        with pytest.raises(OutOfRangeError):
            jsi(cal, grid)

    def test_grid_must_increase(self):
        with pytest.raises(InvalidArgumentError, match="strictly increasing"):
            SpectralGrid([2.0, 1.0], [1.0, 2.0])


class TestSpectra:

    def test_spdc_peak_at_design(self, jsi_grid, grid):
        spdc = spdc_marginal(jsi_grid)
        step = grid.idler_axis[1] - grid.idler_axis[0]
        assert abs(spdc.peak_wavelength - 1550 * NM) <= step
        assert np.max(spdc.intensities) == pytest.approx(1.0)

    def test_all_zero_marginal(self, grid):
        spdc = spdc_marginal(JsiGrid(grid, np.zeros(grid.shape)))
        assert not spdc.normalized
        assert np.all(spdc.intensities == 0)

    def test_symmetric_marginal(self):
        axis = np.linspace(-1.0, 1.0, 41)
        g = SpectralGrid(axis + 5.0, axis + 10.0)
        values = np.exp(-np.add.outer(axis ** 2, 3 * axis ** 2))
        spdc = spdc_marginal(JsiGrid(g, values))
        assert np.allclose(spdc.intensities, spdc.intensities[::-1], atol=1e-9)

    def test_dfg_peak_at_design(self, cal, grid):
        dfg = dfg_spectrum(cal, 810 * NM, grid.idler_axis)
        step = grid.idler_axis[1] - grid.idler_axis[0]
        assert abs(dfg.peak_wavelength - 1550 * NM) <= step

    def test_spdc_much_wider_than_dfg(self, cal, grid, jsi_grid):
        ratio = fwhm(spdc_marginal(jsi_grid)) / fwhm(dfg_spectrum(cal, 810 * NM, grid.idler_axis))
        assert ratio >= 5

    def test_seed_detuning_shifts_idler_blue(self, cal, grid):
        at_design = dfg_spectrum(cal, 810 * NM, grid.idler_axis).peak_wavelength
        detuned = dfg_spectrum(cal, 811 * NM, grid.idler_axis).peak_wavelength
        assert detuned < at_design

    def test_out_of_range_seed(self, cal, grid):
        with pytest.raises(OutOfRangeError, match="seed"):
            dfg_spectrum(cal, 100 * NM, grid.idler_axis)

    def test_longer_crystal_never_wider(self, cal, grid):
        broad_pump = replace(cal, pump_fwhm=2 * NM)
        short = fwhm(dfg_spectrum(broad_pump, 810 * NM, grid.idler_axis))
        long = fwhm(dfg_spectrum(replace(broad_pump, length=4e-3), 810 * NM, grid.idler_axis))
        assert long <= short

    def test_instrument_broadening_widens(self, cal, grid):
        dfg = dfg_spectrum(cal, 810 * NM, grid.idler_axis)
        broadened = instrument_broadening(dfg, 0.5 * NM)
        assert fwhm(broadened) > fwhm(dfg)
        assert np.max(broadened.intensities) == pytest.approx(1.0)


class TestSinc:

    def test_unity_at_zero(self):
        assert float(sinc(0.0)) == 1.0

    def test_bounded(self):
        x = np.linspace(-50, 50, 10001)
        assert np.all(sinc(x) ** 2 <= 1.0)
        assert np.all(sinc(x) ** 2 >= 0.0)


class TestFwhm:

    def test_gaussian(self):
        spectrum = gaussian_spectrum(0.0, 1.0, -8.0, 8.0, n=1601)
        assert fwhm(spectrum) == pytest.approx(2.0 * np.sqrt(2.0 * np.log(2.0)), abs=0.005 * 0.01)

    def test_triangle(self):
        x = np.linspace(0.0, 4.0, 401)
        w = 2.0
        y = np.clip(1.0 - np.abs(x - 2.0) / (w / 2), 0.0, None)
        assert fwhm(Spectrum(x, y)) == pytest.approx(w / 2, abs=1e-12)

    def test_monotone(self):
        x = np.linspace(0.0, 1.0, 11)
        with pytest.raises(UnresolvedWidthError):
            fwhm(Spectrum(x, x))


class TestPhaseComparison:

    def test_zero_slope_exact(self):
        model = PhaseDispersionModel(theta0=0.0247, slope=0.0)
        spectrum = gaussian_spectrum(1552 * NM, 4 * NM, 1520 * NM, 1580 * NM)
        assert phase_comparison(model, spectrum, 810 * NM) == (0.0247, 0.0247)

    def test_symmetric_spectrum(self):
        model = PhaseDispersionModel(theta0=0.02, slope=1e6)
        spectrum = gaussian_spectrum(1550 * NM, 5 * NM, 1530 * NM, 1570 * NM)
        theta_qst, theta_set = phase_comparison(model, spectrum, 810 * NM)
        assert theta_qst == pytest.approx(0.02, abs=1e-9)
        assert theta_set == pytest.approx(0.02, abs=1e-9)

    @pytest.mark.parametrize("center_nm, sign", [(1553.0, 1), (1547.0, -1)])
    def test_skew_sets_sign(self, center_nm, sign):
        model = PhaseDispersionModel(theta0=0.0138, slope=1e6)
        spectrum = gaussian_spectrum(center_nm * NM, 5 * NM, 1520 * NM, 1580 * NM)
        theta_qst, theta_set = phase_comparison(model, spectrum, 810 * NM)
        assert np.sign(theta_qst - theta_set) == sign

    def test_zero_spectrum(self):
        model = PhaseDispersionModel(theta0=0.0, slope=1e6)
        spectrum = Spectrum(np.linspace(1540, 1560, 5) * NM, np.zeros(5), normalized=False)
        with pytest.raises(UndefinedAverageError):
            phase_comparison(model, spectrum, 810 * NM)

    def test_non_finite_model(self):
        with pytest.raises(InvalidArgumentError, match="finite"):
            PhaseDispersionModel(theta0=np.nan, slope=0.0)

    def test_default_pump_follows_design_signal(self):
        model = PhaseDispersionModel(theta0=0.0, slope=1e6, design_signal=800 * NM)
        assert model.pump_wavelength == pytest.approx(implied_pump(800 * NM, 1550 * NM), rel=1e-15)
        assert model.phase_matched_idler(800 * NM) == pytest.approx(1550 * NM, rel=1e-12)

    def test_for_crystal_uses_crystal_pump(self, cal):
        model = PhaseDispersionModel.for_crystal(cal, 0.0, 1e6)
        assert model.pump_wavelength == cal.pump_center
        assert model.design_signal == cal.design_signal


class TestAveragedState:

    def test_narrow_spectrum_is_purer(self, cal, grid, jsi_grid):
        model = PhaseDispersionModel.for_crystal(cal, 0.0, 1e8)
        spdc = spdc_marginal(jsi_grid)
        dfg = dfg_spectrum(cal, 810 * NM, grid.idler_axis)
        theta_qst, theta_set = phase_comparison(model, spdc, 810 * NM)
        f_spdc = fidelity_to_pure(spectrally_averaged_state(model, spdc), bell_state(theta_qst))
        f_dfg = fidelity_to_pure(spectrally_averaged_state(model, dfg), bell_state(theta_set))
        assert f_spdc < f_dfg <= 1.0

    def test_constant_phase_gives_bell(self):
        model = PhaseDispersionModel(theta0=0.3, slope=0.0)
        spectrum = gaussian_spectrum(1550 * NM, 4 * NM, 1530 * NM, 1570 * NM)
        rho = spectrally_averaged_state(model, spectrum)
        assert fidelity_to_pure(rho, bell_state(0.3)) == pytest.approx(1.0, abs=1e-12)


def test_seed_scan_moves_blue(cal, grid):
    model = PhaseDispersionModel.for_crystal(cal, 0.0247, -1e6)
    points = seed_scan(cal, model, np.array([809.0, 810.0, 811.0]) * NM, grid.idler_axis)
    peaks = [p.peak_idler for p in points]
    assert peaks[0] > peaks[1] > peaks[2]
    assert points[1].theta == pytest.approx(0.0247, abs=1e-9)
