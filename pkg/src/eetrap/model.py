"""System parameters, effective Hamiltonians and embedded-eigenstate conditions.

Frequencies are in units of a reference frequency ``omega_ref`` (the bare atom
frequency by default) and the waveguide group velocity is 1, so waveguide
couplings ``V`` carry units of ``sqrt(omega_ref)``. A single emitter coupled
with strength ``V`` loses amplitude into the waveguide at ``2*pi*V**2``.
Time axes are reported in units of ``1/Gamma`` with
``Gamma = pi*(V_A**2 + V_C**2)``, which is half the amplitude decay rate of the
bright single-excitation mode.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCouplings, NoRealCoupling, SingularDenominator, ZeroCoupling

SQRT2 = np.sqrt(2.0)


def amplitude_decay(v: float) -> float:
    """Waveguide-induced amplitude decay rate ``2*pi*V**2`` of a single emitter."""
    return 2.0 * np.pi * v * v


def real_space_coupling(v: float) -> float:
    """Coupling to the chiral even mode, ``2*sqrt(pi)*V``."""
    return 2.0 * np.sqrt(np.pi) * v


@dataclass(frozen=True)
class SystemParams:
    """Cavity + two-level atom, both side-coupled to one waveguide at x = 0.

    The same record describes two coupled linear cavities; in that case the
    atom slot holds cavity 1 (see :meth:`two_cavity`).
    """

    omega_c: float
    omega_a: float
    j_coupling: float = 0.0
    v_c: float = 0.0
    v_a: float = 0.0
    gamma_prime_c: float = 0.0
    gamma_prime_a: float = 0.0

    def __post_init__(self):
        if self.v_c < 0 or self.v_a < 0:
            raise ValueError("waveguide couplings must be non-negative")
        if self.gamma_prime_c < 0 or self.gamma_prime_a < 0:
            raise ValueError("intrinsic loss rates must be non-negative")

    @classmethod
    def two_cavity(cls, omega_1, omega_2, j_coupling, v_1, v_2, gamma_prime_1=0.0, gamma_prime_2=0.0):
        """Two linear cavities: cavity 1 takes the atom slot, cavity 2 the cavity slot."""
        return cls(omega_c=omega_2, omega_a=omega_1, j_coupling=j_coupling, v_c=v_2, v_a=v_1,
                   gamma_prime_c=gamma_prime_2, gamma_prime_a=gamma_prime_1)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def gamma_a(self) -> float:
        return amplitude_decay(self.v_a)

    @property
    def gamma_c(self) -> float:
        return amplitude_decay(self.v_c)

    @property
    def gamma_unit(self) -> float:
        return np.pi * (self.v_a ** 2 + self.v_c ** 2)

    def require_coupled(self):
        if self.v_a == 0 and self.v_c == 0:
            raise ZeroCoupling("at least one of v_a, v_c must be nonzero")


@dataclass(frozen=True)
class ThreeModeParams:
    """Two coupled cavities on a waveguide, with an atom inside cavity 1."""

    omega_1: float
    omega_2: float
    omega_a: float
    j_coupling: float
    g_coupling: float
    v_1: float
    v_2: float
    gamma_prime_1: float = 0.0
    gamma_prime_2: float = 0.0
    gamma_prime_a: float = 0.0

    def __post_init__(self):
        if self.v_1 < 0 or self.v_2 < 0:
            raise ValueError("waveguide couplings must be non-negative")
        if min(self.gamma_prime_1, self.gamma_prime_2, self.gamma_prime_a) < 0:
            raise ValueError("intrinsic loss rates must be non-negative")

    def replace(self, **changes) -> "ThreeModeParams":
        return dataclasses.replace(self, **changes)

    @property
    def gamma_unit(self) -> float:
        return np.pi * (self.v_1 ** 2 + self.v_2 ** 2)


@dataclass(frozen=True)
class UnitConvention:
    omega_ref: float
    gamma_unit: float

    @classmethod
    def from_params(cls, params, omega_ref: float = 1.0) -> "UnitConvention":
        return cls(omega_ref=omega_ref, gamma_unit=params.gamma_unit)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Eigenpairs of a non-Hermitian effective Hamiltonian.

    Eigenvalues are ordered by ascending ``|Im|`` (ties broken by ``Re``), so
    index 0 is always the least-damped state. Eigenvectors are the columns of
    ``eigenvectors``, unit-normalized, with the largest component real positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def decay_rates(self) -> np.ndarray:
        """Amplitude decay rates ``-Im(lambda)``."""
        return -self.eigenvalues.imag

    def real_indices(self, tol: float = 1e-10) -> list[int]:
        return [i for i, lam in enumerate(self.eigenvalues) if abs(lam.imag) < tol]


def spectrum(h: np.ndarray) -> ComplexSpectrum:
    vals, vecs = np.linalg.eig(np.asarray(h, dtype=complex))
    order = np.lexsort((vals.real, np.round(np.abs(vals.imag), 13)))
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    for k in range(vecs.shape[1]):
        big = np.argmax(np.abs(vecs[:, k]))
        vecs[:, k] *= np.exp(-1j * np.angle(vecs[big, k]))
    return ComplexSpectrum(vals, vecs)


# --- cavity + atom -------------------------------------------------------------

def ee_condition_residual(params: SystemParams) -> float:
    """``(w_A - w_c) V_A V_C - J (V_A^2 - V_C^2)``; zero iff a bound state exists."""
    p = params
    return (p.omega_a - p.omega_c) * p.v_a * p.v_c - p.j_coupling * (p.v_a ** 2 - p.v_c ** 2)


def solve_j_for_ee(params: SystemParams) -> float:
    """Direct coupling J that places ``params`` on the bound-state condition."""
    p = params
    detuning = p.omega_a - p.omega_c
    scale = max(p.v_a, p.v_c)
    if scale == 0:
        raise ZeroCoupling("v_a and v_c are both zero")
    if abs(p.v_a - p.v_c) / scale < 1e-12:
        if detuning != 0:
            raise DegenerateCouplings(
                f"v_a == v_c with omega_a != omega_c (detuning {detuning:g}): no finite J")
        return 0.0
    return detuning * p.v_a * p.v_c / (p.v_a ** 2 - p.v_c ** 2)


def with_ee_coupling(params: SystemParams) -> SystemParams:
    return params.replace(j_coupling=solve_j_for_ee(params))


def single_excitation_heff(params: SystemParams) -> np.ndarray:
    """2x2 effective Hamiltonian in the basis {|e,0>, |g,1>}."""
    p = params
    ga, gc = p.gamma_a, p.gamma_c
    cross = p.j_coupling - 1j * np.sqrt(ga * gc)
    return np.array([
        [p.omega_a - 1j * (ga + p.gamma_prime_a), cross],
        [cross, p.omega_c - 1j * (gc + p.gamma_prime_c)],
    ])


def two_excitation_heff(params: SystemParams) -> np.ndarray:
    """2x2 effective Hamiltonian in the basis {|2,g>, |1,e>}."""
    p = params
    tc, ta = 2 * p.gamma_c, 2 * p.gamma_a
    tca = 4 * np.pi * p.v_c * p.v_a
    herm = np.array([
        [2 * p.omega_c, SQRT2 * p.j_coupling],
        [SQRT2 * p.j_coupling, p.omega_c + p.omega_a],
    ], dtype=complex)
    decay = 0.5 * np.array([
        [2 * tc, SQRT2 * tca],
        [SQRT2 * tca, tc + ta],
    ])
    loss = np.diag([2 * p.gamma_prime_c, p.gamma_prime_c + p.gamma_prime_a])
    return herm - 1j * (decay + loss)


def single_excitation_spectrum(params: SystemParams) -> ComplexSpectrum:
    return spectrum(single_excitation_heff(params))


def ee_frequency(params: SystemParams) -> float:
    """Frequency of the least-damped single-excitation state (the EE on the condition)."""
    return float(single_excitation_spectrum(params).eigenvalues[0].real)


def bright_frequency(params: SystemParams) -> float:
    return float(single_excitation_spectrum(params).eigenvalues[1].real)


def ee_frequency_closed_forms(params: SystemParams) -> tuple[float, float]:
    """``w_c - J V_C/V_A`` and ``w_A - J V_A/V_C``; equal on the condition."""
    p = params
    if p.v_a == 0 or p.v_c == 0:
        raise ZeroCoupling("closed forms need both couplings nonzero")
    return (p.omega_c - p.j_coupling * p.v_c / p.v_a,
            p.omega_a - p.j_coupling * p.v_a / p.v_c)


def ee_state(params: SystemParams) -> tuple[float, float]:
    """Atom and cavity amplitudes ``(A, C)`` of the dark single-excitation state."""
    p = params
    norm = np.hypot(p.v_a, p.v_c)
    if norm == 0:
        raise ZeroCoupling("v_a and v_c are both zero")
    return p.v_c / norm, -p.v_a / norm


def bright_state(params: SystemParams) -> tuple[float, float]:
    p = params
    norm = np.hypot(p.v_a, p.v_c)
    if norm == 0:
        raise ZeroCoupling("v_a and v_c are both zero")
    return p.v_a / norm, p.v_c / norm


def two_excitation_levels(params: SystemParams) -> dict[str, float]:
    """Bright/dark two-excitation frequencies and amplitude decay rates."""
    spec = spectrum(two_excitation_heff(params))
    dark, bright = spec.eigenvalues[0], spec.eigenvalues[1]
    return {
        "omega_b2": float(bright.real), "gamma_b2": float(-bright.imag),
        "omega_d2": float(dark.real), "gamma_d2": float(-dark.imag),
    }


def carrier_candidates(params: SystemParams) -> dict[str, float]:
    """Single-photon carrier frequencies that address each excited level.

    The mapping of a two-excitation level onto a single-photon carrier is
    ambiguous, so both readings (half the level, and the level minus the
    one-excitation bright or dark frequency) are returned.
    """
    lev = two_excitation_levels(params)
    w_ee, w_b = ee_frequency(params), bright_frequency(params)
    return {
        "omega_b1": w_b,
        "omega_ee1": w_ee,
        "omega_b2_half": lev["omega_b2"] / 2,
        "omega_d2_half": lev["omega_d2"] / 2,
        "omega_b2_minus_b1": lev["omega_b2"] - w_b,
        "omega_d2_minus_b1": lev["omega_d2"] - w_b,
        "omega_b2_minus_ee1": lev["omega_b2"] - w_ee,
        "omega_d2_minus_ee1": lev["omega_d2"] - w_ee,
    }


# --- two cavities + atom ---------------------------------------------------------

def _three_mode_denominator(p: ThreeModeParams) -> float:
    den = p.v_2 * p.j_coupling + p.v_1 * (p.omega_a - p.omega_2)
    if abs(den) < 1e-14:
        raise SingularDenominator(f"V2*J + V1*(wA - w2) = {den:g}")
    return den


def three_mode_ee_residual(params: ThreeModeParams) -> float:
    p = params
    den = _three_mode_denominator(p)
    lhs = (p.omega_1 - p.omega_2) * p.v_1 * p.v_2 - p.j_coupling * (p.v_1 ** 2 - p.v_2 ** 2)
    return lhs - p.v_1 ** 2 * p.v_2 * p.g_coupling ** 2 / den


def solve_g_for_ee(params: ThreeModeParams) -> float:
    """Atom-cavity coupling g >= 0 that satisfies the three-mode condition."""
    p = params
    if p.v_1 == 0 or p.v_2 == 0:
        raise ZeroCoupling("both cavity couplings must be nonzero")
    den = _three_mode_denominator(p)
    lhs = (p.omega_1 - p.omega_2) * p.v_1 * p.v_2 - p.j_coupling * (p.v_1 ** 2 - p.v_2 ** 2)
    g2 = lhs * den / (p.v_1 ** 2 * p.v_2)
    if g2 < 0:
        raise NoRealCoupling(f"condition requires g^2 = {g2:g} < 0")
    return float(np.sqrt(g2))


def three_mode_heff(params: ThreeModeParams) -> np.ndarray:
    """3x3 effective Hamiltonian in the basis {atom, cavity 1, cavity 2}."""
    p = params
    g1, g2 = amplitude_decay(p.v_1), amplitude_decay(p.v_2)
    cross = p.j_coupling - 1j * np.sqrt(g1 * g2)
    return np.array([
        [p.omega_a - 1j * p.gamma_prime_a, p.g_coupling, 0],
        [p.g_coupling, p.omega_1 - 1j * (g1 + p.gamma_prime_1), cross],
        [0, cross, p.omega_2 - 1j * (g2 + p.gamma_prime_2)],
    ], dtype=complex)


def three_mode_spectrum(params: ThreeModeParams) -> ComplexSpectrum:
    return spectrum(three_mode_heff(params))
