#!/usr/bin/env python3
"""
Tool: Record I/O
Description: Reads and writes every file the tomography pipeline exchanges:
measurement-record CSVs, density-matrix / reconstruction JSON, and the
bootstrap, metrics, spectra and JSI CSV exports.

CSV files are UTF-8 with LF line endings; floats carry 17 significant digits
so every file round-trips losslessly.

Usage:
    python tools/record_io.py .tmp/set_records.csv      # validate + summarize a records file
"""

import io
import re
import os
import sys
import argparse

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import InvalidArgumentError, ParseError
from tools.measurement_model import (
    MeasurementRecord, MeasurementSetting, VALUE_COUNTS, VALUE_POWER, VALUE_KINDS,
)
from tools.qstate import BasisState, DensityMatrix
from tools.run_utils import (
    atomic_write_text, format_number, log_done, parse_count, parse_float,
    read_json, warn, write_json,
)

RECORD_COLUMNS = ["setting_signal", "setting_idler", "value_kind", "value", "seed_power", "integration_time"]
BOOTSTRAP_COLUMNS = ["metric", "mean", "std_dev", "n_resamples", "skipped"]
METRICS_COLUMNS = ["metric", "value", "std_dev", "note"]


def _frame_to_csv(df):
    buf = io.StringIO()
    df.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def write_csv(path, df):
    atomic_write_text(path, _frame_to_csv(df))


# ---------------------------------------------------------------------------
# Measurement records
# ---------------------------------------------------------------------------

def records_to_frame(records):
    rows = []
    for r in records:
        rows.append({
            "setting_signal": r.setting.signal.value,
            "setting_idler": r.setting.idler.value,
            "value_kind": r.value_kind,
            "value": format_number(r.value),
            "seed_power": format_number(r.seed_power),
            "integration_time": format_number(r.integration_time),
        })
    return pd.DataFrame(rows, columns=RECORD_COLUMNS, dtype=str)


def write_records(records, path):
    write_csv(path, records_to_frame(records))


def _parse_record_row(row, line):
    """Parse one CSV row (all strings) into a MeasurementRecord."""
    try:
        signal = BasisState.parse(row["setting_signal"])
        idler = BasisState.parse(row["setting_idler"])
    except InvalidArgumentError as e:
        raise ParseError(str(e), line) from None

    kind = row["value_kind"].strip()
    if kind not in VALUE_KINDS:
        raise ParseError(f"value_kind must be one of {', '.join(VALUE_KINDS)}, got {kind!r}", line)

    try:
        value = parse_count(row["value"]) if kind == VALUE_COUNTS else parse_float(row["value"])
        seed_power = parse_float(row["seed_power"])
        integration_time = parse_float(row["integration_time"])
    except ValueError as e:
        raise ParseError(str(e), line) from None

    if value is None:
        raise ParseError("missing value", line)
    for name, number in (("value", value), ("seed_power", seed_power), ("integration_time", integration_time)):
        if number is not None and number < 0:
            raise ParseError(f"{name} must be nonnegative, got {number!r}", line)
    if kind == VALUE_POWER and not seed_power:
        raise ParseError("power rows need a positive seed_power", line)

    try:
        return MeasurementRecord(MeasurementSetting(signal, idler), value, kind,
                                 seed_power=seed_power, integration_time=integration_time)
    except InvalidArgumentError as e:
        raise ParseError(str(e), line) from None


def parse_records(path):
    """
    Read a measurement CSV into records, in file order.

    Raises ParseError naming the first offending line (the header is line 1).
    A header-only file yields an empty list and a warning.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty (missing header)", 1) from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        detail = re.search(r"Expected .*", str(e))
        raise ParseError(detail.group(0) if detail else str(e), int(match.group(1)) if match else None) from None

    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"missing columns: {', '.join(missing)}", 1)

    if len(df) == 0:
        warn(f"{path}: no measurement rows (header only)")
        return []

    records = []
    first_kind = None
    for idx, row in enumerate(df.to_dict("records")):
        line = idx + 2
        record = _parse_record_row(row, line)
        if first_kind is None:
            first_kind = record.value_kind
        elif record.value_kind != first_kind:
            raise ParseError(f"mixed schemas: {record.value_kind!r} row after {first_kind!r} rows", line)
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# Density matrices and reconstruction results
# ---------------------------------------------------------------------------

def write_density(path, rho, extra=None):
    payload = rho.to_dict()
    payload.update(extra or {})
    write_json(path, payload)


def read_density(path):
    try:
        return DensityMatrix.from_dict(read_json(path))
    except (KeyError, TypeError) as e:
        raise ParseError(f"{path}: not a density-matrix JSON ({e})") from None


def write_reconstruction(path, result):
    write_density(path, result.rho, {
        "objective": result.objective_value,
        "iterations": result.iterations,
        "converged": result.converged,
        "method": result.method,
    })


# ---------------------------------------------------------------------------
# Bootstrap / metrics / spectra exports
# ---------------------------------------------------------------------------

def write_bootstrap(path, stats):
    rows = [{
        "metric": s.metric_name,
        "mean": format_number(s.mean),
        "std_dev": format_number(s.std_dev),
        "n_resamples": str(s.n_resamples),
        "skipped": str(s.skipped),
    } for s in stats]
    write_csv(path, pd.DataFrame(rows, columns=BOOTSTRAP_COLUMNS, dtype=str))


def read_bootstrap(path):
    """Bootstrap CSV -> {metric: std_dev}."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in BOOTSTRAP_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"{path}: missing columns: {', '.join(missing)}", 1)
    return {row["metric"]: float(row["std_dev"]) for row in df.to_dict("records")}


def write_metrics(path, report):
    rows = []
    for name, value, note in report.rows():
        std = report.std_devs.get(name)
        rows.append({
            "metric": name,
            "value": format_number(value),
            "std_dev": format_number(std),
            "note": note or "",
        })
    write_csv(path, pd.DataFrame(rows, columns=METRICS_COLUMNS, dtype=str))


def write_spectra(path, idler_axis, columns):
    """Spectra on a shared idler axis. `columns` maps column name -> intensities."""
    data = {"idler_nm": [format_number(x) for x in np.asarray(idler_axis) * 1e9]}
    for name, values in columns.items():
        data[name] = [format_number(v) for v in np.asarray(values, dtype=float)]
    write_csv(path, pd.DataFrame(data, dtype=str))


def write_jsi(path, jsi_grid):
    s_nm = np.asarray(jsi_grid.grid.signal_axis) * 1e9
    i_nm = np.asarray(jsi_grid.grid.idler_axis) * 1e9
    ss, ii = np.meshgrid(s_nm, i_nm, indexing="ij")
    df = pd.DataFrame({
        "signal_nm": [format_number(x) for x in ss.ravel()],
        "idler_nm": [format_number(x) for x in ii.ravel()],
        "intensity": [format_number(x) for x in np.asarray(jsi_grid.intensities).ravel()],
    }, dtype=str)
    write_csv(path, df)


def write_seed_scan(path, points):
    """Energy-resolved SET scan: one row per seed wavelength (nm), phase in rad."""
    df = pd.DataFrame({
        "seed_nm": [format_number(p.seed_wavelength * 1e9) for p in points],
        "peak_idler_nm": [format_number(p.peak_idler * 1e9) for p in points],
        "fwhm_nm": [format_number(p.width * 1e9) for p in points],
        "theta": [format_number(p.theta) for p in points],
    }, dtype=str)
    write_csv(path, df)


def write_quantities(path, quantities):
    """Two-column `quantity,value` CSV from an ordered mapping."""
    df = pd.DataFrame({
        "quantity": list(quantities.keys()),
        "value": [format_number(v) for v in quantities.values()],
    }, dtype=str)
    write_csv(path, df)


def main():
    parser = argparse.ArgumentParser(description="Validate a measurement-record CSV")
    parser.add_argument("path", help="records CSV")
    args = parser.parse_args()

    records = parse_records(args.path)
    if records:
        total = sum(r.value for r in records)
        log_done(f"{len(records)} {records[0].value_kind} records, total {total:.6g}")


if __name__ == "__main__":
    main()
