#!/usr/bin/env python3
"""
Tool: Measurement Model
Description: Builds the 36-setting tomography plan and simulates both
measurement channels for a polarization-entangled pair:

  - QST: coincidence counts (Poisson, plus dark coincidences)
  - SET: stimulated idler power for a prepared seed polarization
         (seed-power jitter, multiplicative detector noise, additive floor)

Each setting draws from its own stream keyed by (rng_seed, channel, setting
index), so results do not depend on evaluation order.

Usage:
    python tools/measurement_model.py set --state bell:0.0247 --noise-rel 0.01
    python tools/measurement_model.py qst --state bell:0.0138 --seed 3
"""

import os
import sys
import argparse
from dataclasses import dataclass
from itertools import product

import numpy as np
from rich.table import Table

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import InvalidArgumentError
from tools.qstate import BasisState, DensityMatrix, projector2q, state_from_preset
from tools.run_utils import console, stream, format_power

VALUE_COUNTS = "counts"
VALUE_POWER = "power"
VALUE_KINDS = (VALUE_COUNTS, VALUE_POWER)

# 20 mW seed and 0.06 nW stimulated idler at Born probability 0.5
DEFAULT_SEED_POWER = 20e-3
DEFAULT_GAIN = 0.06e-9 / (0.5 * DEFAULT_SEED_POWER)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementSetting:
    """Signal-side (or seed) polarization and idler analysis polarization."""

    signal: BasisState
    idler: BasisState

    @property
    def label(self):
        return f"{self.signal.value}{self.idler.value}"


@dataclass(frozen=True)
class MeasurementRecord:
    setting: MeasurementSetting
    value: float
    value_kind: str
    seed_power: float = None
    integration_time: float = None

    def __post_init__(self):
        if self.value_kind not in VALUE_KINDS:
            raise InvalidArgumentError(f"value_kind must be one of {VALUE_KINDS}, got {self.value_kind!r}")
        if self.value is None or not np.isfinite(self.value) or self.value < 0:
            raise InvalidArgumentError(f"measured value must be a nonnegative number, got {self.value!r}")
        if self.value_kind == VALUE_COUNTS:
            if float(self.value) != int(self.value):
                raise InvalidArgumentError(f"counts must be integers, got {self.value!r}")
            object.__setattr__(self, "value", int(self.value))
        if self.value_kind == VALUE_POWER and (self.seed_power is None or not self.seed_power > 0):
            raise InvalidArgumentError("power records need seed_power > 0")


@dataclass(frozen=True)
class NormalizedRecord:
    setting: MeasurementSetting
    value: float
    weight: float


@dataclass(frozen=True)
class QstNoiseModel:
    pair_rate: float = 4.0e5
    integration_time: float = 1.0
    efficiency_signal: float = 0.5
    efficiency_idler: float = 0.2
    dark_coincidence_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise InvalidArgumentError(f"pair_rate must be positive, got {self.pair_rate!r}")
        if not self.integration_time > 0:
            raise InvalidArgumentError(f"integration_time must be positive, got {self.integration_time!r}")
        for name in ("efficiency_signal", "efficiency_idler"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {eta!r}")
        if not self.dark_coincidence_rate >= 0:
            raise InvalidArgumentError("dark_coincidence_rate must be nonnegative")

    @property
    def detected_pairs(self):
        """Expected coincidences at unit Born probability."""
        return self.pair_rate * self.integration_time * self.efficiency_signal * self.efficiency_idler


@dataclass(frozen=True)
class SetNoiseModel:
    gain: float = DEFAULT_GAIN
    seed_power_nominal: float = DEFAULT_SEED_POWER
    seed_power_jitter_rel: float = 0.0
    detector_noise_rel: float = 0.0
    detector_floor: float = 0.0
    rng_seed: int = 0
    seed_conjugation: bool = False

    def __post_init__(self):
        if not self.gain > 0:
            raise InvalidArgumentError(f"gain must be positive, got {self.gain!r}")
        if not self.seed_power_nominal > 0:
            raise InvalidArgumentError("seed_power_nominal must be positive")
        for name in ("seed_power_jitter_rel", "detector_noise_rel"):
            frac = getattr(self, name)
            if not 0.0 <= frac < 0.5:
                raise InvalidArgumentError(f"{name} must lie in [0, 0.5), got {frac!r}")
        if not self.detector_floor >= 0:
            raise InvalidArgumentError("detector_floor must be nonnegative")


def noise_model_from_dict(cls, payload):
    """Build a noise model from a config section; unknown keys are an error."""
    fields = cls.__dataclass_fields__
    unknown = sorted(set(payload) - set(fields))
    if unknown:
        raise InvalidArgumentError(f"unknown {cls.__name__} fields: {', '.join(unknown)}")
    return cls(**payload)


# ---------------------------------------------------------------------------
# Plan
# ---------------------------------------------------------------------------

PLAN_ORDER = (BasisState.H, BasisState.V, BasisState.D, BasisState.A, BasisState.R, BasisState.L)


def build_plan():
    """The 36 settings {H,V,D,A,R,L}², signal-major."""
    return [MeasurementSetting(s, i) for s, i in product(PLAN_ORDER, PLAN_ORDER)]


def plan_index(setting):
    return PLAN_ORDER.index(setting.signal) * len(PLAN_ORDER) + PLAN_ORDER.index(setting.idler)


def product_basis_quadruples(plan):
    """
    Index quadruples {(a,b), (a,b⊥), (a⊥,b), (a⊥,b⊥)} found in `plan`,
    one per pair of single-qubit bases.
    """
    position = {(st.signal, st.idler): k for k, st in enumerate(plan)}
    quads = []
    for a in (BasisState.H, BasisState.D, BasisState.R):
        for b in (BasisState.H, BasisState.D, BasisState.R):
            keys = [(a, b), (a, b.orthogonal), (a.orthogonal, b), (a.orthogonal, b.orthogonal)]
            if all(key in position for key in keys):
                quads.append(tuple(position[key] for key in keys))
    return quads


def setting_projector(setting, seed_conjugation=False):
    """Π(seed′, analysis); seed′ is the conjugate Jones vector when requested."""
    seed = setting.signal.jones
    if seed_conjugation:
        seed = seed.conjugate()
    return projector2q(seed, setting.idler.jones)


def projector_stack(plan, seed_conjugation=False):
    """(K, 4, 4) array of setting projectors."""
    return np.stack([setting_projector(st, seed_conjugation).entries for st in plan])


def born_probabilities(rho, plan, seed_conjugation=False):
    """Tr(ρΠ_k) for every setting, clamped to [0, 1]."""
    projectors = projector_stack(plan, seed_conjugation)
    probs = np.real(np.einsum("ij,kji->k", rho.entries, projectors))
    return np.clip(probs, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

def simulate_qst(rho, plan, noise):
    """Poisson-sampled coincidence counts for each setting."""
    if not isinstance(rho, DensityMatrix):
        raise InvalidArgumentError("rho must be a DensityMatrix")
    probs = born_probabilities(rho, plan)
    dark = noise.dark_coincidence_rate * noise.integration_time
    records = []
    for setting, p in zip(plan, probs):
        mu = noise.detected_pairs * p + dark
        rng = stream(noise.rng_seed, "qst", plan_index(setting))
        counts = int(rng.poisson(mu)) if mu > 0 else 0
        records.append(MeasurementRecord(setting, counts, VALUE_COUNTS,
                                         integration_time=noise.integration_time))
    return records


def simulate_set(rho, plan, noise):
    """Stimulated idler power for each seed/analysis setting."""
    if not isinstance(rho, DensityMatrix):
        raise InvalidArgumentError("rho must be a DensityMatrix")
    probs = born_probabilities(rho, plan, noise.seed_conjugation)
    records = []
    for setting, p in zip(plan, probs):
        rng = stream(noise.rng_seed, "set", plan_index(setting))
        jitter, detector = rng.standard_normal(2)
        seed_power = noise.seed_power_nominal * (1.0 + noise.seed_power_jitter_rel * jitter)
        # a 0.5 relative jitter can in principle reach zero seed power
        seed_power = max(seed_power, 1e-6 * noise.seed_power_nominal)
        expected = noise.gain * seed_power * p
        value = expected * (1.0 + noise.detector_noise_rel * detector) + noise.detector_floor
        records.append(MeasurementRecord(setting, max(float(value), 0.0), VALUE_POWER,
                                         seed_power=float(seed_power)))
    return records


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def records_kind(records):
    """The common value_kind of `records`; mixed kinds are rejected."""
    if not records:
        raise InvalidArgumentError("no measurement records")
    kinds = {r.value_kind for r in records}
    if len(kinds) != 1:
        raise InvalidArgumentError(f"records mix value kinds {sorted(kinds)}")
    return kinds.pop()


def normalize_records(records, gain=1.0, detector_floor=0.0):
    """
    Per-record (setting, normalized_value, weight).

    Counts pass through with Poisson weights 1/max(counts, 1). Powers become
    (value − floor)/(gain·seed_power), an estimate of Tr(ρΠ), with uniform weights.
    """
    kind = records_kind(records)
    out = []
    for r in records:
        if kind == VALUE_COUNTS:
            out.append(NormalizedRecord(r.setting, float(r.value), 1.0 / max(r.value, 1)))
            continue
        if not r.seed_power or r.seed_power <= 0:
            raise InvalidArgumentError(f"setting {r.setting.label}: seed_power must be positive")
        if not gain > 0:
            raise InvalidArgumentError(f"gain must be positive, got {gain!r}")
        out.append(NormalizedRecord(r.setting, (r.value - detector_floor) / (gain * r.seed_power), 1.0))
    return out


def main():
    parser = argparse.ArgumentParser(description="Simulate QST counts or SET powers for a preset state")
    parser.add_argument("channel", choices=["qst", "set"])
    parser.add_argument("--state", default="bell:0", help="bell:<theta>, mixed or werner:<p>")
    parser.add_argument("--seed", type=int, default=0, help="rng seed")
    parser.add_argument("--noise-rel", type=float, default=0.0, help="SET detector noise (relative)")
    parser.add_argument("--jitter-rel", type=float, default=0.0, help="SET seed-power jitter (relative)")
    args = parser.parse_args()

    rho = state_from_preset(args.state)
    plan = build_plan()
    if args.channel == "qst":
        records = simulate_qst(rho, plan, QstNoiseModel(rng_seed=args.seed))
    else:
        records = simulate_set(rho, plan, SetNoiseModel(rng_seed=args.seed,
                                                        detector_noise_rel=args.noise_rel,
                                                        seed_power_jitter_rel=args.jitter_rel))

    table = Table(title=f"{args.channel.upper()} simulation: {args.state}", border_style="bright_blue")
    table.add_column("Setting", style="bold white")
    table.add_column("Value", justify="right")
    table.add_column("Seed power", justify="right", style="dim")
    for r in records:
        value = str(r.value) if r.value_kind == VALUE_COUNTS else format_power(r.value)
        table.add_row(r.setting.label, value, format_power(r.seed_power) if r.seed_power else "")
    console.print(table)


if __name__ == "__main__":
    main()
