#!/usr/bin/env python3
"""
Tool: Two-Qubit State Core
Description: Polarization basis states, two-qubit projectors, density matrices
and the entanglement metrics reported for a polarization-entangled pair
(fidelity, concurrence, purity, relative phase).

Basis order is (HH, HV, VH, VV) with the signal photon first. Circular states
follow R = (1, -i)/sqrt(2), L = (1, i)/sqrt(2).

Usage:
    python tools/qstate.py bell:0.0247
    python tools/qstate.py werner:0.8
"""

import sys
import os
import argparse
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import unitary_group

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.errors import InvalidArgumentError, UndefinedPhaseError

BASIS_LABELS = ("HH", "HV", "VH", "VV")

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-10
NORM_TOL = 1e-12
COHERENCE_FLOOR = 1e-6

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


# ---------------------------------------------------------------------------
# Single-qubit polarization states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JonesVector:
    """Two complex amplitudes (horizontal, vertical) with unit norm."""

    h: complex
    v: complex

    def __post_init__(self):
        norm2 = abs(self.h) ** 2 + abs(self.v) ** 2
        if not np.isfinite(norm2) or abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"Jones vector must be unit-norm, |ψ|² = {norm2!r}")

    @property
    def components(self):
        return np.array([self.h, self.v], dtype=complex)

    def conjugate(self):
        return JonesVector(complex(self.h).conjugate(), complex(self.v).conjugate())

    @classmethod
    def normalized(cls, h, v):
        norm = np.sqrt(abs(h) ** 2 + abs(v) ** 2)
        if norm == 0:
            raise InvalidArgumentError("cannot normalize a zero Jones vector")
        return cls(complex(h) / norm, complex(v) / norm)


class BasisState(Enum):
    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"

    @property
    def jones(self):
        return _BASIS_JONES[self]

    @property
    def orthogonal(self):
        return _ORTHOGONAL[self]

    @classmethod
    def parse(cls, label):
        try:
            return cls(str(label).strip().upper())
        except ValueError:
            raise InvalidArgumentError(f"unknown polarization label {label!r}") from None


_BASIS_JONES = {
    BasisState.H: JonesVector(1 + 0j, 0j),
    BasisState.V: JonesVector(0j, 1 + 0j),
    BasisState.D: JonesVector(_SQRT_HALF + 0j, _SQRT_HALF + 0j),
    BasisState.A: JonesVector(_SQRT_HALF + 0j, -_SQRT_HALF + 0j),
    BasisState.R: JonesVector(_SQRT_HALF + 0j, -1j * _SQRT_HALF),
    BasisState.L: JonesVector(_SQRT_HALF + 0j, 1j * _SQRT_HALF),
}

_ORTHOGONAL = {
    BasisState.H: BasisState.V, BasisState.V: BasisState.H,
    BasisState.D: BasisState.A, BasisState.A: BasisState.D,
    BasisState.R: BasisState.L, BasisState.L: BasisState.R,
}


# ---------------------------------------------------------------------------
# Two-qubit matrices
# ---------------------------------------------------------------------------

def _frozen(matrix):
    out = np.array(matrix, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TwoQubitOperator:
    """A 4×4 complex operator in the (HH, HV, VH, VV) basis."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (4, 4):
            raise InvalidArgumentError(f"two-qubit operator must be 4×4, got {entries.shape}")
        object.__setattr__(self, "entries", _frozen(entries))

    def is_hermitian(self, tol=HERMITIAN_TOL):
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)

    def is_projector(self, tol=HERMITIAN_TOL):
        m = self.entries
        return self.is_hermitian(tol) and bool(np.max(np.abs(m @ m - m)) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    Hermitian, positive semidefinite, unit-trace 4×4 matrix.

    Eigenvalues in [-1e-10, 0) are accepted as round-off; metrics clamp them.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidArgumentError(f"density matrix must be 4×4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidArgumentError("density matrix has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise InvalidArgumentError("density matrix is not Hermitian")
        trace = np.trace(m)
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidArgumentError(f"density matrix trace is {trace.real:.12g}, expected 1")
        if np.min(np.linalg.eigvalsh(m)) < EIGENVALUE_FLOOR:
            raise InvalidArgumentError("density matrix has negative eigenvalues")
        object.__setattr__(self, "entries", _frozen(m))

    @classmethod
    def from_array(cls, matrix, renormalize=False):
        """Build from a nearly-valid array, symmetrizing (and optionally renormalizing) first."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        if renormalize:
            m = m / np.trace(m).real
        return cls(m)

    @classmethod
    def from_ket(cls, ket):
        psi = np.asarray(ket, dtype=complex).reshape(4)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidArgumentError("zero state vector")
        psi = psi / norm
        return cls.from_array(np.outer(psi, psi.conj()))

    def eigenvalues(self):
        """Ascending eigenvalues with round-off negatives clamped to zero."""
        w = np.linalg.eigvalsh(self.entries)
        return np.where((w < 0) & (w >= EIGENVALUE_FLOOR), 0.0, w)

    def coherence(self):
        """⟨VV|ρ|HH⟩."""
        return complex(self.entries[3, 0])

    def to_dict(self):
        return {
            "basis": list(BASIS_LABELS),
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        basis = payload.get("basis", list(BASIS_LABELS))
        if list(basis) != list(BASIS_LABELS):
            raise InvalidArgumentError(f"unsupported basis order {basis}; expected {list(BASIS_LABELS)}")
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
        return cls(re + 1j * im)


# ---------------------------------------------------------------------------
# State builders
# ---------------------------------------------------------------------------

def bell_state(theta):
    """(|HH⟩ + e^{iθ}|VV⟩)/√2 as a density matrix."""
    theta = float(theta)
    if not np.isfinite(theta):
        raise InvalidArgumentError(f"theta must be finite, got {theta!r}")
    ket = np.array([1.0, 0.0, 0.0, np.exp(1j * theta)], dtype=complex) * _SQRT_HALF
    return DensityMatrix.from_ket(ket)


def maximally_mixed():
    return DensityMatrix(np.eye(4, dtype=complex) / 4.0)


def werner_state(p, theta=0.0):
    """p·|Ψθ⟩⟨Ψθ| + (1−p)·I/4."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"Werner weight must lie in [0, 1], got {p!r}")
    m = p * bell_state(theta).entries + (1.0 - p) * np.eye(4) / 4.0
    return DensityMatrix.from_array(m)


def classical_mixture():
    """0.5|HH⟩⟨HH| + 0.5|VV⟩⟨VV| (no coherence)."""
    return DensityMatrix(np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex))


def random_pure_state(rng):
    """Haar-random pure state on C^4."""
    ket = rng.normal(size=4) + 1j * rng.normal(size=4)
    return DensityMatrix.from_ket(ket)


def random_mixed_state(rng, rank=4):
    """Normalized Wishart-style A·A† with a complex Gaussian 4×rank matrix A."""
    a = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    return DensityMatrix.from_array(a @ a.conj().T, renormalize=True)


def random_local_unitary(rng):
    """u_s ⊗ u_i with each factor Haar-distributed on U(2)."""
    u_s = unitary_group.rvs(2, random_state=rng)
    u_i = unitary_group.rvs(2, random_state=rng)
    return np.kron(u_s, u_i)


def apply_unitary(rho, unitary):
    u = np.asarray(unitary, dtype=complex)
    return DensityMatrix.from_array(u @ rho.entries @ u.conj().T)


# ---------------------------------------------------------------------------
# Projectors and Born rule
# ---------------------------------------------------------------------------

def projector2q(signal, idler):
    """|ψ_s⟩⟨ψ_s| ⊗ |ψ_i⟩⟨ψ_i| for two unit-norm Jones vectors."""
    for name, vec in (("signal", signal), ("idler", idler)):
        if not isinstance(vec, JonesVector):
            raise InvalidArgumentError(f"{name} must be a JonesVector")
    ket = np.kron(signal.components, idler.components)
    return TwoQubitOperator(np.outer(ket, ket.conj()))


def born_probability(rho, op):
    """Tr(ρ·Π). Clamped to [0, 1] when Π is a projector."""
    value = np.trace(rho.entries @ op.entries)
    if abs(value.imag) > 1e-10 and op.is_hermitian():
        raise InvalidArgumentError(f"Tr(ρΠ) has imaginary part {value.imag:.3g}")
    p = float(value.real)
    if op.is_projector():
        p = min(max(p, 0.0), 1.0)
    return p


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def purity(rho):
    m = rho.entries
    return float(np.real(np.trace(m @ m)))


def fidelity_to_pure(rho, target):
    """⟨ψ|ρ|ψ⟩ for a pure target state |ψ⟩⟨ψ|."""
    if abs(purity(target) - 1.0) > 1e-8:
        raise InvalidArgumentError("target is not pure; use fidelity_mixed")
    value = float(np.real(np.trace(rho.entries @ target.entries)))
    return min(max(value, 0.0), 1.0)


def _sqrt_psd(m):
    w, v = np.linalg.eigh(m)
    # eigenvalues at round-off level are zero; their square roots would not be
    w = np.where(w > 1e-15 * max(w[-1], 1.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity_mixed(rho1, rho2):
    """
    Uhlmann fidelity (Tr√(√ρ1 ρ2 √ρ1))².

    Computed as the squared nuclear norm of √ρ1·√ρ2, which is symmetric in
    its arguments and avoids square roots of round-off eigenvalues.
    """
    sv = np.linalg.svd(_sqrt_psd(rho1.entries) @ _sqrt_psd(rho2.entries), compute_uv=False)
    value = float(np.sum(sv) ** 2)
    return min(max(value, 0.0), 1.0)


def concurrence(rho):
    """
    Wootters concurrence max(0, λ1−λ2−λ3−λ4).

    The λi (square roots of the eigenvalues of ρ·ρ̃) are taken as singular
    values of √ρ·√ρ̃, with ρ̃ = (σy⊗σy) ρ* (σy⊗σy).
    """
    sqrt_rho = _sqrt_psd(rho.entries)
    sqrt_rho_tilde = _SIGMA_YY @ sqrt_rho.conj() @ _SIGMA_YY
    lam = np.linalg.svd(sqrt_rho @ sqrt_rho_tilde, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def relative_phase(rho, floor=COHERENCE_FLOOR):
    """arg⟨VV|ρ|HH⟩ in (−π, π]."""
    c = rho.coherence()
    if abs(c) <= floor:
        raise UndefinedPhaseError(f"|⟨VV|ρ|HH⟩| = {abs(c):.3g} is below the coherence floor {floor:g}")
    phase = float(np.angle(c))
    return np.pi if phase <= -np.pi else phase


# ---------------------------------------------------------------------------
# State presets ("bell:<theta>", "mixed", "werner:<p>")
# ---------------------------------------------------------------------------

def state_from_preset(spec):
    """Build a state from a preset string."""
    name, _, arg = str(spec).strip().partition(":")
    name = name.lower()
    try:
        if name == "bell":
            return bell_state(float(arg) if arg else 0.0)
        if name == "werner":
            return werner_state(float(arg))
        if name == "mixed":
            return maximally_mixed()
    except ValueError as e:
        if isinstance(e, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"bad state preset {spec!r}: {e}") from None
    raise InvalidArgumentError(f"unknown state preset {spec!r} (use bell:<theta>, mixed, werner:<p>)")


def main():
    parser = argparse.ArgumentParser(description="Print a preset state and its metrics")
    parser.add_argument("state", help="bell:<theta>, mixed or werner:<p>")
    args = parser.parse_args()

    rho = state_from_preset(args.state)
    np.set_printoptions(precision=4, suppress=True)
    print(rho.entries)
    print(f"Purity:      {purity(rho):.6f}")
    print(f"Concurrence: {concurrence(rho):.6f}")
    print(f"Fidelity to bell:0: {fidelity_to_pure(rho, bell_state(0.0)):.6f}")
    try:
        print(f"Phase θ:     {relative_phase(rho):.6f} rad")
    except UndefinedPhaseError as e:
        print(f"Phase θ:     undefined ({e})")


if __name__ == "__main__":
    main()
