"""
Tests for tools/record_io.py: measurement CSV parsing, writers and JSON exports.
"""
import json

import numpy as np
import pandas as pd
import pytest

from tools import record_io
from tools.errors import ParseError
from tools.measurement_model import (
    MeasurementRecord, MeasurementSetting, QstNoiseModel, SetNoiseModel, simulate_qst, simulate_set,
)
from tools.mle_reconstruct import BootstrapStats, ReconstructionResult
from tools.qstate import BasisState, bell_state, random_mixed_state
from tools.record_io import (
    RECORD_COLUMNS, parse_records, read_bootstrap, read_density, write_bootstrap, write_density,
    write_jsi, write_quantities, write_reconstruction, write_records, write_spectra,
)
from tools.spectral import JsiGrid, SpectralGrid

HEADER = ",".join(RECORD_COLUMNS)


def write_text(tmp_path, body, name="records.csv"):
    path = tmp_path / name
    path.write_text(HEADER + "\n" + body, encoding="utf-8")
    return str(path)


class TestParseRecords:

    def test_power_row(self, tmp_path):
        records = parse_records(write_text(tmp_path, "H,H,power,6.0e-11,2.0e-2,\n"))
        assert records == [MeasurementRecord(
            MeasurementSetting(BasisState.H, BasisState.H), 6.0e-11, "power", seed_power=0.02)]
        assert records[0].integration_time is None

    def test_count_row(self, tmp_path):
        records = parse_records(write_text(tmp_path, "d,a,counts,4980.0,,1\n"))
        assert records[0].value == 4980
        assert isinstance(records[0].value, int)
        assert records[0].setting == MeasurementSetting(BasisState.D, BasisState.A)

    def test_non_integer_count(self, tmp_path):
        path = write_text(tmp_path, "H,H,counts,10,,1\nH,V,counts,4980.5,,1\n")
        with pytest.raises(ParseError) as err:
            parse_records(path)
        assert err.value.line == 3

    def test_unknown_label(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            parse_records(write_text(tmp_path, "X,H,counts,1,,1\n"))

    def test_negative_value(self, tmp_path):
        with pytest.raises(ParseError, match="nonnegative"):
            parse_records(write_text(tmp_path, "H,H,power,-1e-11,0.02,\n"))

    def test_power_without_seed(self, tmp_path):
        with pytest.raises(ParseError, match="seed_power"):
            parse_records(write_text(tmp_path, "H,H,power,1e-11,,\n"))

    def test_unparseable_number(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            parse_records(write_text(tmp_path, "H,H,power,lots,0.02,\n"))

    def test_header_only(self, tmp_path, monkeypatch):
        warnings = []
        monkeypatch.setattr(record_io, "warn", warnings.append)
        assert parse_records(write_text(tmp_path, "")) == []
        assert len(warnings) == 1
        assert "header only" in warnings[0]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ParseError) as err:
            parse_records(str(path))
        assert err.value.line == 1

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("setting_signal,setting_idler,value\nH,H,1\n")
        with pytest.raises(ParseError, match="value_kind"):
            parse_records(str(path))

    def test_extra_field(self, tmp_path):
        path = write_text(tmp_path, "H,H,counts,10,,1\nH,V,counts,12,,1,9\n")
        with pytest.raises(ParseError, match="Expected 6 fields") as err:
            parse_records(path)
        assert err.value.line == 3

    def test_mixed_schemas(self, tmp_path):
        body = "H,H,counts,10,,1\nH,V,counts,12,,1\nV,H,power,6e-11,0.02,\n"
        with pytest.raises(ParseError, match="mixed schemas") as err:
            parse_records(write_text(tmp_path, body))
        assert err.value.line == 4


class TestWriteRecords:

    def test_set_round_trip(self, tmp_path, bell0, plan):
        records = simulate_set(bell0, plan, SetNoiseModel(rng_seed=3))
        path = str(tmp_path / "set.csv")
        write_records(records, path)
        assert parse_records(path) == records

    def test_qst_round_trip(self, tmp_path, bell0, plan):
        records = simulate_qst(bell0, plan, QstNoiseModel(rng_seed=3))
        path = str(tmp_path / "qst.csv")
        write_records(records, path)
        assert parse_records(path) == records

    def test_format(self, tmp_path, bell0, plan):
        path = tmp_path / "set.csv"
        write_records(simulate_set(bell0, plan, SetNoiseModel()), str(path))
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        lines = raw.decode("utf-8").splitlines()
        assert lines[0] == HEADER
        assert len(lines) == 37
        assert lines[1].startswith("H,H,power,")

    def test_rewrite_is_byte_identical(self, tmp_path, bell0, plan):
        records = simulate_set(bell0, plan, SetNoiseModel())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_records(records, str(a))
        write_records(parse_records(str(a)), str(b))
        assert a.read_bytes() == b.read_bytes()


class TestDensityJson:

    def test_round_trip(self, tmp_path, rng):
        rho = random_mixed_state(rng, 3)
        path = str(tmp_path / "rho.json")
        write_density(path, rho, {"label": "random"})
        back = read_density(path)
        assert np.array_equal(back.entries, rho.entries)
        assert json.loads((tmp_path / "rho.json").read_text())["label"] == "random"

    def test_reconstruction_fields(self, tmp_path):
        result = ReconstructionResult(bell_state(0.1), 12.5, 340, True, "mle")
        path = tmp_path / "fit.json"
        write_reconstruction(str(path), result)
        payload = json.loads(path.read_text())
        assert payload["objective"] == 12.5
        assert payload["iterations"] == 340
        assert payload["converged"] is True
        assert payload["method"] == "mle"
        assert payload["basis"] == ["HH", "HV", "VH", "VV"]

    def test_not_a_density(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"re": [[1]]}')
        with pytest.raises(ParseError, match="not a density-matrix JSON"):
            read_density(str(path))


class TestExports:

    def test_bootstrap_round_trip(self, tmp_path):
        stats = [BootstrapStats("fidelity", 0.995, 0.0012, 100), BootstrapStats("purity", 0.99, 0.002, 98, 2)]
        path = str(tmp_path / "boot.csv")
        write_bootstrap(path, stats)
        assert read_bootstrap(path) == {"fidelity": 0.0012, "purity": 0.002}
        df = pd.read_csv(path)
        assert list(df["skipped"]) == [0, 2]

    def test_spectra_in_nm(self, tmp_path):
        axis = np.array([1549e-9, 1550e-9, 1551e-9])
        path = tmp_path / "spectra.csv"
        write_spectra(str(path), axis, {"spdc": [0.5, 1.0, 0.5], "dfg": [0.0, 1.0, 0.0]})
        df = pd.read_csv(path)
        assert list(df.columns) == ["idler_nm", "spdc", "dfg"]
        assert df["idler_nm"].tolist() == pytest.approx([1549.0, 1550.0, 1551.0])

    def test_jsi_long_format(self, tmp_path):
        grid = SpectralGrid(np.array([800e-9, 810e-9]), np.array([1540e-9, 1550e-9, 1560e-9]))
        values = np.arange(6, dtype=float).reshape(2, 3) / 5.0
        path = tmp_path / "jsi.csv"
        write_jsi(str(path), JsiGrid(grid, values))
        df = pd.read_csv(path)
        assert len(df) == 6
        row = df.iloc[4]
        assert row["signal_nm"] == pytest.approx(810.0)
        assert row["idler_nm"] == pytest.approx(1550.0)
        assert row["intensity"] == pytest.approx(values[1, 1])

    def test_quantities(self, tmp_path):
        path = tmp_path / "q.csv"
        write_quantities(str(path), {"theta_qst": 0.0138, "theta_set": 0.0247})
        df = pd.read_csv(path)
        assert df["quantity"].tolist() == ["theta_qst", "theta_set"]
        assert df["value"].tolist() == [0.0138, 0.0247]
