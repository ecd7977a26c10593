#!/usr/bin/env python3
"""
Tool: MLE Reconstruct
Description: Reconstructs a two-photon polarization density matrix from
36-setting records (coincidence counts or stimulated idler powers).

Pipeline:
  1. Normalize records and put them in plan order
  2. Linear inversion over the 16 Pauli-product coefficients (initializer)
  3. Clamp to the PSD cone, factor into the lower-triangular T
  4. Minimize the weighted objective over T with a simplex search,
     optional L-BFGS-B polish
  5. Parametric bootstrap for metric uncertainties

ρ = T†T / Tr(T†T) is physical for every nonzero T, so the fit never leaves
the set of density matrices.

Usage:
    python tools/mle_reconstruct.py .tmp/set_records.csv
    python tools/mle_reconstruct.py .tmp/qst_records.csv --bootstrap 100
"""

import os
import sys
import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from rich.table import Table
from scipy.optimize import minimize

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import (
    DegenerateParameterError, IncompletePlanError, InvalidArgumentError,
    UndefinedPhaseError, UnstableMetricError,
)
from tools.measurement_model import (
    MeasurementRecord, VALUE_COUNTS, normalize_records, plan_index, records_kind,
    setting_projector,
)
from tools.qstate import (
    DensityMatrix, bell_state, concurrence, fidelity_mixed, fidelity_to_pure,
    purity, relative_phase,
)
from tools.run_utils import console, format_percent, log, stream

OBJECTIVES = ("gaussian", "poisson")
METHODS = ("mle", "linear")
METRIC_NAMES = ("fidelity", "concurrence", "purity", "relative_phase")

EIGENVALUE_LIFT = 1e-12
NONPHYSICAL_TOL = -1e-8
# residual noise estimates below this are round-off of an exact fit
RESIDUAL_NOISE_FLOOR = 1e-9

# (row, col) of the six complex entries below the diagonal of T
_LOWER = ((1, 0), (2, 1), (2, 0), (3, 1), (3, 0), (3, 2))

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
# σa⊗σb / 4: Tr(B_ab) = δ_a0·δ_b0, and ρ = Σ Tr(ρ σa⊗σb)·B_ab
_PAULI_BASIS = np.stack([np.kron(a, b) / 4.0 for a in _PAULI for b in _PAULI])


# ---------------------------------------------------------------------------
# Cholesky-style parametrization
# ---------------------------------------------------------------------------

def _t_matrix(t):
    t = np.asarray(t, dtype=float)
    if t.shape != (16,):
        raise InvalidArgumentError(f"T parameters must be 16 reals, got shape {t.shape}")
    T = np.diag(t[:4]).astype(complex)
    for k, (r, c) in enumerate(_LOWER):
        T[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return T


def _rho_array(t):
    T = _t_matrix(t)
    m = T.conj().T @ T
    trace = np.trace(m).real
    if trace <= 0:
        raise DegenerateParameterError("all T parameters are zero")
    m = m / trace
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True, eq=False)
class TParams:
    """16 reals: T's diagonal, then (Re, Im) of each entry below it."""

    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        if t.shape != (16,) or not np.all(np.isfinite(t)):
            raise InvalidArgumentError("T parameters must be 16 finite reals")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def matrix(self):
        return _t_matrix(self.t)


def rho_from_t(params):
    """T†T / Tr(T†T)."""
    t = params.t if isinstance(params, TParams) else params
    return DensityMatrix(_rho_array(t))


def t_from_rho(rho):
    """
    Lower-triangular T with T†T = ρ.

    Eigenvalues below 1e-12 are lifted first so the factorization exists.
    Cholesky of JρJ (J the exchange matrix) gives L with JρJ = LL†; then
    T = (JLJ)† is lower triangular and T†T = ρ.
    """
    w, v = np.linalg.eigh(rho.entries)
    w = np.maximum(w, EIGENVALUE_LIFT)
    lifted = (v * w) @ v.conj().T
    lifted = 0.5 * (lifted + lifted.conj().T) / np.sum(w)

    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ lifted @ J)
    T = (J @ L @ J).conj().T

    t = np.empty(16)
    t[:4] = np.real(np.diag(T))
    for k, (r, c) in enumerate(_LOWER):
        t[4 + 2 * k] = T[r, c].real
        t[5 + 2 * k] = T[r, c].imag
    return TParams(t)


# ---------------------------------------------------------------------------
# Linear inversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearEstimate:
    """Unconstrained least-squares estimate; may have negative eigenvalues."""

    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def physical(self):
        return self.min_eigenvalue >= NONPHYSICAL_TOL


def _design_matrix(settings, seed_conjugation):
    """A[k, ab] = Tr(B_ab Π_k) (real since both are Hermitian)."""
    projectors = np.stack([setting_projector(st, seed_conjugation).entries for st in settings])
    return np.real(np.einsum("aij,kji->ka", _PAULI_BASIS, projectors))


def linear_inversion(normalized, seed_conjugation=False):
    """
    Weighted least squares for Tr(MΠ_k) = y_k over Hermitian M, then ρ = M/Tr(M).

    Fitting M without a trace constraint makes the estimate independent of
    the overall intensity scale (pair number or gain).
    """
    if not normalized:
        raise IncompletePlanError("no measurement records")
    A = _design_matrix([r.setting for r in normalized], seed_conjugation)
    rank = np.linalg.matrix_rank(A)
    if rank < 16:
        raise IncompletePlanError(f"measurement settings fix only {rank} of 16 state parameters")

    y = np.array([r.value for r in normalized], dtype=float)
    sw = np.sqrt(np.array([r.weight for r in normalized], dtype=float))
    coeffs, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    m = np.einsum("a,aij->ij", coeffs, _PAULI_BASIS)
    trace = np.trace(m).real
    if trace <= 1e-300:
        m = np.eye(4, dtype=complex) / 4.0
    else:
        m = m / trace
    m = 0.5 * (m + m.conj().T)
    return LinearEstimate(m, float(np.linalg.eigvalsh(m)[0]))


def physicalize(candidate):
    """Closest PSD unit-trace matrix by eigenvalue clamping."""
    m = candidate.matrix if isinstance(candidate, LinearEstimate) else np.asarray(candidate, dtype=complex)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.clip(w, 0.0, None)
    if np.sum(w) <= 0:
        return DensityMatrix(np.eye(4, dtype=complex) / 4.0)
    return DensityMatrix.from_array((v * (w / np.sum(w))) @ v.conj().T)


# ---------------------------------------------------------------------------
# Fit objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitOptions:
    objective: str = "gaussian"
    method: str = "mle"
    refine: bool = False
    max_evaluations: int = 50000
    fatol: float = 1e-10
    xatol: float = 1e-9
    simplex_step: float = 0.02
    gain: float = 1.0
    detector_floor: float = 0.0
    detector_noise_rel: float = None
    seed_conjugation: bool = False
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidArgumentError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.method not in METHODS:
            raise InvalidArgumentError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_evaluations < 1:
            raise InvalidArgumentError("max_evaluations must be at least 1")
        if not self.gain > 0:
            raise InvalidArgumentError(f"gain must be positive, got {self.gain!r}")
        if self.detector_noise_rel is not None and self.detector_noise_rel < 0:
            raise InvalidArgumentError("detector_noise_rel must be nonnegative")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be at least 1")


def fit_options_from_dict(payload):
    fields = FitOptions.__dataclass_fields__
    unknown = sorted(set(payload) - set(fields))
    if unknown:
        raise InvalidArgumentError(f"unknown reconstruction fields: {', '.join(unknown)}")
    return FitOptions(**payload)


class _FitProblem:
    """Normalized records in plan order with their flattened projectors."""

    def __init__(self, records, options):
        self.kind = records_kind(records)
        if self.kind == VALUE_COUNTS and options.objective == "poisson":
            self.poisson = True
        elif options.objective == "poisson":
            raise InvalidArgumentError("the Poisson objective applies to counts only")
        else:
            self.poisson = False

        normalized = normalize_records(records, options.gain, options.detector_floor)
        normalized.sort(key=lambda r: (plan_index(r.setting), r.value))
        self.normalized = normalized
        self.y = np.array([r.value for r in normalized], dtype=float)
        # Tr(ρΠ) = Σ_ij ρ_ij (Π^T)_ij
        self.flat_projectors = np.stack([
            setting_projector(r.setting, options.seed_conjugation).entries.T.ravel()
            for r in normalized
        ])
        rel = options.detector_noise_rel
        mean_y = float(np.mean(np.abs(self.y))) if len(self.y) else 0.0
        self.power_sigma = max(rel or 1.0, 1e-4) * (mean_y if mean_y > 0 else 1.0)

    def probabilities(self, m):
        return np.clip(np.real(self.flat_projectors @ np.asarray(m).ravel()), 0.0, None)

    def expected(self, m):
        """Forward model μ_k with the intensity scale profiled out."""
        p = self.probabilities(m)
        if self.kind == VALUE_COUNTS:
            total = np.sum(p)
            scale = np.sum(self.y) / total if total > 0 else 0.0
        else:
            norm = np.dot(p, p)
            scale = np.dot(self.y, p) / norm if norm > 0 else 0.0
        return scale * p

    def __call__(self, m):
        mu = self.expected(m)
        y = self.y
        if self.poisson:
            safe_mu = np.maximum(mu, 1e-300)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / safe_mu), 0.0)
            return float(np.sum(mu - y + log_term))
        if self.kind == VALUE_COUNTS:
            var = np.maximum(mu, 1.0)
            return float(np.sum((y - mu) ** 2 / (2.0 * var)))
        return float(np.sum((y - mu) ** 2) / (2.0 * self.power_sigma ** 2))


def objective_value(records, rho, options=None):
    """The fit objective evaluated at `rho` (lower is better)."""
    problem = _FitProblem(records, options or FitOptions())
    return problem(rho.entries)


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionResult:
    rho: DensityMatrix
    objective_value: float
    iterations: int
    converged: bool
    method: str


def _initial_simplex(x0, step):
    simplex = np.tile(x0, (len(x0) + 1, 1))
    for i in range(len(x0)):
        simplex[i + 1, i] += step
    return simplex


def mle_fit(records, init=None, options=None):
    """
    Fit a physical density matrix to measurement records.

    Non-convergence is reported through `converged`, never raised.
    """
    options = options or FitOptions()
    problem = _FitProblem(records, options)
    estimate = linear_inversion(problem.normalized, options.seed_conjugation)

    if options.method == "linear":
        rho = physicalize(estimate)
        return ReconstructionResult(rho, problem(rho.entries), 0, True, "linear")

    start = init if init is not None else physicalize(estimate)
    x0 = t_from_rho(start).t.copy()

    def cost(t):
        # ρ is invariant under t -> c·t; pin the scale so the search has no flat direction
        gauge = (np.dot(t, t) - 1.0) ** 2
        try:
            return problem(_rho_array(t)) + gauge
        except DegenerateParameterError:
            return np.inf

    result = minimize(cost, x0, method="Nelder-Mead", options={
        "initial_simplex": _initial_simplex(x0, options.simplex_step),
        "xatol": options.xatol,
        "fatol": options.fatol,
        "maxfev": options.max_evaluations,
        "maxiter": options.max_evaluations,
        "adaptive": True,
    })
    simplex, fsim = result.final_simplex
    converged = bool(
        np.max(np.abs(fsim - fsim[0])) < options.fatol
        or np.max(np.abs(simplex - simplex[0])) < options.xatol
    )
    best_t, iterations = result.x, int(result.nit)

    if options.refine:
        polished = minimize(cost, best_t, method="L-BFGS-B",
                            options={"maxfun": options.max_evaluations, "ftol": 1e-15, "gtol": 1e-12})
        iterations += int(polished.nit)
        if polished.fun <= cost(best_t):
            best_t = polished.x
            converged = converged or bool(polished.success)

    rho = DensityMatrix.from_array(_rho_array(best_t))
    return ReconstructionResult(rho, problem(rho.entries), iterations, converged, "mle")


# ---------------------------------------------------------------------------
# Metrics and bootstrap
# ---------------------------------------------------------------------------

def metric_value(name, rho, target=None):
    """Evaluate one named metric. Fidelity is against `target` (default bell_state(0))."""
    if name == "fidelity":
        target = target if target is not None else bell_state(0.0)
        if abs(purity(target) - 1.0) <= 1e-8:
            return fidelity_to_pure(rho, target)
        return fidelity_mixed(rho, target)
    if name == "concurrence":
        return concurrence(rho)
    if name == "purity":
        return purity(rho)
    if name == "relative_phase":
        return relative_phase(rho)
    raise InvalidArgumentError(f"unknown metric {name!r} (use {', '.join(METRIC_NAMES)})")


@dataclass(frozen=True)
class BootstrapStats:
    metric_name: str
    mean: float
    std_dev: float
    n_resamples: int
    skipped: int = 0


def relative_residual(records, fit, options=None):
    """RMS relative residual of the fitted powers or counts (the detector noise a fit implies)."""
    problem = _FitProblem(records, options or FitOptions())
    mu = problem.expected(fit.rho.entries)
    mask = mu > 1e-3 * np.max(mu) if np.max(mu) > 0 else np.zeros_like(mu, dtype=bool)
    if not np.any(mask):
        return 0.0
    return float(np.sqrt(np.mean(((problem.y[mask] - mu[mask]) / mu[mask]) ** 2)))


def _resample(records, rng, noise_rel):
    out = []
    for r in records:
        if r.value_kind == VALUE_COUNTS:
            value = int(rng.poisson(r.value)) if r.value > 0 else 0
        else:
            value = max(float(rng.normal(r.value, noise_rel * abs(r.value))), 0.0)
        out.append(MeasurementRecord(r.setting, value, r.value_kind,
                                     seed_power=r.seed_power, integration_time=r.integration_time))
    return out


def bootstrap(records, n_resamples=100, metrics=METRIC_NAMES, options=None, target=None, base_fit=None):
    """
    Parametric bootstrap: resample records, refit, report mean and std of each metric.

    Resample i draws from stream(rng_seed, "bootstrap", i), so results do not
    depend on the number of workers.
    """
    if n_resamples < 2:
        raise InvalidArgumentError(f"n_resamples must be at least 2, got {n_resamples}")
    for name in metrics:
        if name not in METRIC_NAMES:
            raise InvalidArgumentError(f"unknown metric {name!r} (use {', '.join(METRIC_NAMES)})")
    options = options or FitOptions()
    records = sorted(records, key=lambda r: (plan_index(r.setting), r.value))
    base_fit = base_fit or mle_fit(records, options=options)

    noise_rel = options.detector_noise_rel
    if noise_rel is None and records_kind(records) != VALUE_COUNTS:
        noise_rel = relative_residual(records, base_fit, options)
        if noise_rel < RESIDUAL_NOISE_FLOOR:
            noise_rel = 0.0
        log(f"  Estimated detector noise from residuals: {noise_rel:.3g} (relative)")
    refit_options = replace(options, workers=1)

    def run_one(index):
        rng = stream(options.rng_seed, "bootstrap", index)
        fit = mle_fit(_resample(records, rng, noise_rel or 0.0), init=base_fit.rho, options=refit_options)
        values = {}
        for name in metrics:
            try:
                values[name] = metric_value(name, fit.rho, target)
            except UndefinedPhaseError:
                values[name] = None
        return values

    if options.workers > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            samples = list(pool.map(run_one, range(n_resamples)))
    else:
        samples = [run_one(i) for i in range(n_resamples)]

    stats = []
    for name in metrics:
        values = np.array([s[name] for s in samples if s[name] is not None], dtype=float)
        skipped = n_resamples - len(values)
        if skipped > 0.5 * n_resamples or len(values) < 2:
            raise UnstableMetricError(f"{name}: undefined on {skipped} of {n_resamples} resamples")
        stats.append(BootstrapStats(name, float(np.mean(values)), float(np.std(values, ddof=1)),
                                    n_resamples, skipped))
    return stats


def main():
    from tools.record_io import parse_records

    parser = argparse.ArgumentParser(description="Reconstruct a density matrix from a records CSV")
    parser.add_argument("records", help="measurement-record CSV")
    parser.add_argument("--objective", choices=OBJECTIVES, default="gaussian")
    parser.add_argument("--refine", action="store_true", help="L-BFGS-B polish after the simplex search")
    parser.add_argument("--bootstrap", type=int, default=0, help="number of bootstrap resamples")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    records = parse_records(args.records)
    options = FitOptions(objective=args.objective, refine=args.refine, rng_seed=args.seed)
    fit = mle_fit(records, options=options)

    np.set_printoptions(precision=4, suppress=True)
    console.print(fit.rho.entries)
    table = Table(title="Reconstruction", border_style="bright_blue")
    table.add_column("Metric", style="bold white")
    table.add_column("Value", justify="right")
    table.add_row("Objective", f"{fit.objective_value:.6g}")
    table.add_row("Iterations", str(fit.iterations))
    table.add_row("Converged", "yes" if fit.converged else "[red]no[/red]")
    table.add_row("Fidelity to bell:0", format_percent(metric_value("fidelity", fit.rho)))
    table.add_row("Concurrence", f"{concurrence(fit.rho):.5f}")
    table.add_row("Purity", f"{purity(fit.rho):.5f}")
    console.print(table)

    if args.bootstrap:
        for s in bootstrap(records, args.bootstrap, options=options, base_fit=fit):
            log(f"  {s.metric_name}: {s.mean:.6g} ± {s.std_dev:.2g} (skipped {s.skipped})")


if __name__ == "__main__":
    main()
