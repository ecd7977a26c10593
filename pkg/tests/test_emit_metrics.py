"""
Tests for tools/emit_metrics.py.
"""
import numpy as np
import pandas as pd
import pytest

from tools.emit_metrics import UNDEFINED_PHASE_NOTE, emit_metrics, print_report, resolve_target
from tools.mle_reconstruct import BootstrapStats
from tools.qstate import bell_state, classical_mixture, werner_state
from tools.record_io import write_density


class TestEmitMetrics:

    def test_bell_state(self, bell0):
        report = emit_metrics(bell0)
        assert report.fidelity_to_target == pytest.approx(1.0, abs=1e-12)
        assert report.concurrence == pytest.approx(1.0, abs=1e-12)
        assert report.purity == pytest.approx(1.0, abs=1e-12)
        assert report.relative_phase == pytest.approx(0.0, abs=1e-12)
        assert report.phase_note == ""

    def test_maximally_mixed(self, mixed):
        report = emit_metrics(mixed)
        assert report.fidelity_to_target == pytest.approx(0.25, abs=1e-12)
        assert report.concurrence == pytest.approx(0.0, abs=1e-12)
        assert report.purity == pytest.approx(0.25, abs=1e-12)
        assert report.relative_phase is None
        assert report.phase_note == UNDEFINED_PHASE_NOTE

    def test_classical_mixture(self):
        report = emit_metrics(classical_mixture())
        assert report.fidelity_to_target == pytest.approx(0.5)
        assert report.concurrence == pytest.approx(0.0, abs=1e-12)
        assert report.relative_phase is None

    def test_phase_target(self):
        report = emit_metrics(bell_state(0.0247), "bell:0.0247")
        assert report.fidelity_to_target == pytest.approx(1.0, abs=1e-12)
        assert report.relative_phase == pytest.approx(0.0247, abs=1e-12)
        assert report.target_label == "bell:0.0247"

    def test_mixed_target_uses_uhlmann(self, tmp_path):
        target = werner_state(0.9)
        path = str(tmp_path / "qst_rho.json")
        write_density(path, target)
        report = emit_metrics(target, path)
        assert report.fidelity_to_target == pytest.approx(1.0, abs=1e-6)
        assert report.target_label == "qst_rho.json"

    def test_bootstrap_list_and_dict(self, bell0):
        stats = [BootstrapStats("fidelity", 0.99, 0.003, 100)]
        assert emit_metrics(bell0, bootstrap_stats=stats).std_devs == {"fidelity": 0.003}
        assert emit_metrics(bell0, bootstrap_stats={"purity": 0.01}).std_devs == {"purity": 0.01}


class TestMetricsCsv:

    def test_rows(self, bell0, tmp_path):
        path = tmp_path / "metrics.csv"
        emit_metrics(bell0, bootstrap_stats={"fidelity": 0.002}, out=str(path))
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        assert df.columns.tolist() == ["metric", "value", "std_dev", "note"]
        assert df["metric"].tolist() == ["fidelity", "concurrence", "purity", "relative_phase"]
        assert float(df.loc[0, "std_dev"]) == 0.002
        assert df.loc[1, "std_dev"] == ""

    def test_undefined_phase_row(self, mixed, tmp_path):
        path = tmp_path / "metrics.csv"
        emit_metrics(mixed, out=str(path))
        row = pd.read_csv(path, dtype=str, keep_default_na=False).iloc[3]
        assert row["value"] == ""
        assert row["note"] == UNDEFINED_PHASE_NOTE


def test_resolve_target_default():
    target, label = resolve_target(None)
    assert label == "bell:0"
    assert np.allclose(target.entries, bell_state(0.0).entries)


def test_print_report_runs(mixed, capsys):
    print_report(emit_metrics(mixed))
    assert "Purity" in capsys.readouterr().err
