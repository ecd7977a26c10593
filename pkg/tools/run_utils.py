#!/usr/bin/env python3
"""
Shared utilities for the tomography tools.

Provides the console used for status output, number parsing and formatting,
seeded random streams, config loading and atomic file writes used by every
tool in this directory.
"""

import os
import json
import hashlib
import tempfile

import numpy as np
from dotenv import load_dotenv
from rich.console import Console

load_dotenv()

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_PATH = os.path.join(PROJECT_ROOT, "config.json")
TMP_DIR = os.getenv("TOMO_OUTPUT_DIR") or os.path.join(PROJECT_ROOT, ".tmp")

# Status output goes to stderr; stdout is reserved for machine-readable records.
console = Console(stderr=True, highlight=False)


def log(message):
    console.print(message)


def log_done(message):
    console.print(f"[green]✓[/green] {message}")


def warn(message):
    console.print(f"[yellow]Warning:[/yellow] {message}")


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def parse_float(value):
    """
    Parse a numeric cell into a float.
    Returns None for empty cells; raises ValueError for anything unparseable.
    """
    if value is None:
        return None
    s = str(value).strip()
    if not s:
        return None
    result = float(s)
    if not np.isfinite(result):
        raise ValueError(f"non-finite number {s!r}")
    return result


def parse_count(value):
    """
    Parse a count cell. Accepts "4980" and "4980.0"; rejects "4980.5".
    Returns None for empty cells.
    """
    number = parse_float(value)
    if number is None:
        return None
    if not float(number).is_integer():
        raise ValueError(f"count {str(value).strip()!r} is not an integer")
    return int(number)


def parse_grid(spec):
    """Parse a grid spec such as "512x512" into (n_signal, n_idler)."""
    parts = str(spec).lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"grid must look like <n>x<n>, got {spec!r}")
    n_signal, n_idler = int(parts[0]), int(parts[1])
    if n_signal < 2 or n_idler < 2:
        raise ValueError("grid needs at least 2 points per axis")
    return n_signal, n_idler


# ---------------------------------------------------------------------------
# Formatting helpers
# ---------------------------------------------------------------------------

def format_number(val):
    """Format a float with 17 significant digits (lossless round-trip)."""
    if val is None:
        return ""
    if isinstance(val, (int, np.integer)) and not isinstance(val, bool):
        return str(int(val))
    return f"{float(val):.17g}"


def format_percent(val, digits=3):
    """Format a fraction for display (0.96660 -> 96.660%)."""
    if val is None:
        return "-"
    return f"{100.0 * val:.{digits}f}%"


def format_power(val):
    """Format an optical power for display (6e-11 -> 0.0600 nW)."""
    if val is None:
        return "-"
    if abs(val) >= 1e-3:
        return f"{val * 1e3:.3f} mW"
    if abs(val) >= 1e-6:
        return f"{val * 1e6:.3f} µW"
    return f"{val * 1e9:.4f} nW"


# ---------------------------------------------------------------------------
# Seeded random streams: every stream is a pure function of (seed, labels)
# ---------------------------------------------------------------------------

def label_key(*labels):
    """Fold purpose labels into a 64-bit integer with an md5 digest."""
    raw = "|".join(str(label) for label in labels)
    return int.from_bytes(hashlib.md5(raw.encode()).digest()[:8], "big")


def stream(rng_seed, *labels):
    """
    Return a numpy Generator keyed by (rng_seed, labels).

    Integer labels (setting index, resample index) are kept as separate
    entropy words, so stream(7, "set", 3) never collides with stream(7, "set", 4).
    """
    words = [int(rng_seed) & 0xFFFFFFFFFFFFFFFF]
    text_labels = [str(label) for label in labels if not isinstance(label, (int, np.integer))]
    words.append(label_key(*text_labels))
    words.extend(int(label) for label in labels if isinstance(label, (int, np.integer)))
    return np.random.default_rng(np.random.SeedSequence(words))


# ---------------------------------------------------------------------------
# Config loading: flags > file > defaults
# ---------------------------------------------------------------------------

def config_path(path=None):
    return path or os.getenv("TOMO_CONFIG") or DEFAULT_CONFIG_PATH


def load_config(path=None):
    """Load the run config JSON. A missing default file yields an empty config."""
    path = config_path(path)
    if not os.path.exists(path):
        if path == DEFAULT_CONFIG_PATH:
            return {}
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def merge_settings(defaults, file_section, overrides):
    """Merge one config section. None-valued overrides do not clobber the file."""
    merged = dict(defaults)
    merged.update(file_section or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return merged


def resolve_path(path, base=PROJECT_ROOT):
    """Resolve a path relative to `base` unless it is already absolute."""
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base, path)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def atomic_write_text(path, text):
    """Write text via a temp file + rename so readers never see a torn file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".partial-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
