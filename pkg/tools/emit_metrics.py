#!/usr/bin/env python3
"""
Tool: Emit Metrics
Description: Computes fidelity, concurrence, purity and relative phase for a
reconstructed density matrix, attaches bootstrap uncertainties, and writes the
metrics CSV (`metric,value,std_dev,note`).

Fidelity is ⟨ψ|ρ|ψ⟩ for a pure target and the Uhlmann fidelity otherwise
(e.g. an SET reconstruction compared against a QST one).

Usage:
    python tools/emit_metrics.py .tmp/set_pm_rho.json
    python tools/emit_metrics.py .tmp/set_pm_rho.json --target .tmp/qst_rho.json
    python tools/emit_metrics.py .tmp/qst_rho.json --bootstrap .tmp/qst_rho.bootstrap.csv --out .tmp/qst_metrics.csv
"""

import os
import sys
import argparse
from dataclasses import dataclass, field

from rich.table import Table
from rich.text import Text

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import UndefinedPhaseError
from tools.qstate import (
    DensityMatrix, bell_state, concurrence, fidelity_mixed, fidelity_to_pure,
    purity, relative_phase, state_from_preset,
)
from tools.record_io import read_bootstrap, read_density, write_metrics
from tools.run_utils import console, format_percent

UNDEFINED_PHASE_NOTE = "undefined: coherence below floor"


@dataclass
class MetricsReport:
    fidelity_to_target: float
    concurrence: float
    purity: float
    relative_phase: float = None
    phase_note: str = ""
    target_label: str = "bell:0"
    std_devs: dict = field(default_factory=dict)

    def rows(self):
        """(metric, value, note) in CSV order; an undefined phase has value None."""
        return [
            ("fidelity", self.fidelity_to_target, ""),
            ("concurrence", self.concurrence, ""),
            ("purity", self.purity, ""),
            ("relative_phase", self.relative_phase, self.phase_note),
        ]


def resolve_target(spec):
    """`bell:<theta>` / preset string, a density JSON path, or a DensityMatrix."""
    if spec is None:
        return bell_state(0.0), "bell:0"
    if isinstance(spec, DensityMatrix):
        return spec, "custom"
    spec = str(spec)
    if os.path.exists(spec) or spec.lower().endswith(".json"):
        return read_density(spec), os.path.basename(spec)
    return state_from_preset(spec), spec


def emit_metrics(rho, target=None, bootstrap_stats=None, out=None):
    """Metrics of `rho` against `target`; writes the CSV when `out` is given."""
    target, label = resolve_target(target)
    if abs(purity(target) - 1.0) <= 1e-8:
        fidelity = fidelity_to_pure(rho, target)
    else:
        fidelity = fidelity_mixed(rho, target)

    try:
        phase, note = relative_phase(rho), ""
    except UndefinedPhaseError:
        phase, note = None, UNDEFINED_PHASE_NOTE

    if isinstance(bootstrap_stats, dict):
        std_devs = dict(bootstrap_stats)
    else:
        std_devs = {s.metric_name: s.std_dev for s in bootstrap_stats or []}

    report = MetricsReport(fidelity, concurrence(rho), purity(rho), phase, note, label, std_devs)
    if out:
        write_metrics(out, report)
    return report


def print_report(report, title="State metrics"):
    table = Table(title=f"{title} (target {report.target_label})", border_style="bright_blue")
    table.add_column("Metric", style="bold white", min_width=14)
    table.add_column("Value", justify="right")
    table.add_column("± (bootstrap)", justify="right", style="dim")

    def pm(name, scale=1.0, digits=4):
        std = report.std_devs.get(name)
        return "" if std is None else f"{std * scale:.{digits}g}"

    table.add_row("Fidelity", format_percent(report.fidelity_to_target), pm("fidelity", 100.0, 2) + ("%" if "fidelity" in report.std_devs else ""))
    table.add_row("Concurrence", f"{report.concurrence:.5f}", pm("concurrence"))
    table.add_row("Purity", f"{report.purity:.5f}", pm("purity"))
    if report.relative_phase is None:
        table.add_row("Relative phase", Text(report.phase_note, style="yellow"), "")
    else:
        table.add_row("Relative phase", f"{report.relative_phase:.5f} rad", pm("relative_phase"))
    console.print()
    console.print(table)


def main():
    parser = argparse.ArgumentParser(description="Report metrics for a density-matrix JSON")
    parser.add_argument("rho", help="density-matrix JSON")
    parser.add_argument("--target", default="bell:0", help="bell:<theta> or a density JSON")
    parser.add_argument("--bootstrap", default=None, help="bootstrap CSV with std_devs")
    parser.add_argument("--out", default=None, help="metrics CSV to write")
    args = parser.parse_args()

    rho = read_density(args.rho)
    stds = read_bootstrap(args.bootstrap) if args.bootstrap else None
    report = emit_metrics(rho, args.target, stds, args.out)
    print_report(report)


if __name__ == "__main__":
    main()
