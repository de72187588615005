"""Coherent pulsed driving in a truncated Fock space (Lindblad master equation).

The waveguide is eliminated into one collective jump operator
``L = sqrt(2 gamma_C) a + sqrt(2 gamma_A) sigma`` (or the two-cavity analogue
for the three-mode system). A coherent input with photon-flux amplitude
``beta(t)`` enters through the same port, ``H_d = i (beta L^dag - beta^* L)``.
Everything runs in a frame rotating at the least-damped single-excitation
frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.stats import poisson

from .errors import PositivityLoss, TraceDrift, TruncationBreach
from .model import (SystemParams, ThreeModeParams, amplitude_decay, ee_frequency, ee_state,
                    three_mode_spectrum)
from .trajectory import Trajectory

TAIL_TOL = 1e-6
TRACE_TOL = 1e-6
POSITIVITY_TOL = 1e-7


@dataclass(frozen=True)
class FockSpaceSpec:
    """Cavity Fock cutoff ``n_max`` for each of ``n_cavities`` modes, times one two-level atom."""

    n_max: int
    n_cavities: int = 1

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.n_cavities not in (1, 2):
            raise ValueError("one or two cavity modes are supported")

    @staticmethod
    def required_cutoff(mean_photons: float) -> int:
        n = max(2, int(np.ceil(mean_photons + 5 * np.sqrt(mean_photons))))
        if mean_photons < 1:
            # weak drives: the mean + 5 sd rule undercounts; bound the Poisson tail instead
            while poisson.sf(n - 1, mean_photons) > 1e-7:
                n += 1
        return n

    @classmethod
    def for_mean(cls, mean_photons: float, n_cavities: int = 1) -> "FockSpaceSpec":
        return cls(cls.required_cutoff(mean_photons), n_cavities)

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1) ** self.n_cavities


@dataclass(frozen=True)
class DriveEnvelope:
    """Gaussian photon-flux amplitude with ``int |beta|^2 dt = mean_photons``."""

    mean_photons: float
    width: float
    center: float
    detuning: float = 0.0

    def __call__(self, t):
        amp = np.sqrt(self.mean_photons) * (np.pi * self.width ** 2) ** -0.25
        return amp * np.exp(-((t - self.center) ** 2) / (2 * self.width ** 2)) * np.exp(-1j * self.detuning * t)

    def photon_number(self, t_final: float, n: int = 20001) -> float:
        t = np.linspace(0.0, t_final, n)
        return float(trapezoid(np.abs(self(t)) ** 2, t))


@dataclass
class Generator:
    """Sparse Lindblad generator pieces plus the operators that get sampled."""

    kind: str
    fock: FockSpaceSpec
    frame: float
    h: sp.csr_matrix
    jump: sp.csr_matrix
    losses: list
    observables: dict
    ee_vectors: dict
    tail: np.ndarray
    gamma_unit: float
    max_rate: float
    meta: dict = field(default_factory=dict)

    @property
    def heff(self) -> sp.csr_matrix:
        acc = self.jump.getH() @ self.jump
        for op in self.losses:
            acc = acc + op.getH() @ op
        return (self.h - 0.5j * acc).tocsr()


def _ladder(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr", dtype=complex)


def _kron(*ops) -> sp.csr_matrix:
    out = ops[0]
    for op in ops[1:]:
        out = sp.kron(out, op, format="csr")
    return out.tocsr()


def _top_level_mask(fock: FockSpaceSpec) -> np.ndarray:
    n = np.arange(fock.n_max + 1)
    if fock.n_cavities == 1:
        top = n == fock.n_max
        return np.tile(top, 2)
    top = (n[:, None] == fock.n_max) | (n[None, :] == fock.n_max)
    return np.tile(top.ravel(), 2)


def build_generator(params: SystemParams | ThreeModeParams, fock: FockSpaceSpec | None = None,
                    frame: float | None = None) -> Generator:
    """Hamiltonian, collective and loss jump operators in the rotating frame."""
    if isinstance(params, ThreeModeParams):
        return _three_mode_generator(params, fock or FockSpaceSpec(10, 2), frame)
    p = params
    fock = fock or FockSpaceSpec(10, 1)
    if fock.n_cavities != 1:
        raise ValueError("the cavity-atom system has one cavity mode")
    if frame is None:
        frame = ee_frequency(p) if (p.v_a or p.v_c) else p.omega_a
    nc = fock.n_max + 1
    ic, ia = sp.identity(nc, format="csr"), sp.identity(2, format="csr")
    a = _kron(ia, _ladder(fock.n_max))
    s = _kron(_ladder(1), ic)
    num_a = a.getH() @ a
    num_s = s.getH() @ s
    h = ((p.omega_c - frame) * num_a + (p.omega_a - frame) * num_s
         + p.j_coupling * (a.getH() @ s + s.getH() @ a)).tocsr()
    ga, gc = p.gamma_a, p.gamma_c
    jump = (np.sqrt(2 * gc) * a + np.sqrt(2 * ga) * s).tocsr()
    losses = [np.sqrt(2 * g) * op for g, op in ((p.gamma_prime_c, a), (p.gamma_prime_a, s)) if g > 0]
    ee_vectors = {}
    if p.v_a or p.v_c:
        amp_a, amp_c = ee_state(p)
        v = np.zeros(fock.dim, complex)
        v[nc] = amp_a       # |e, 0>
        v[1] = amp_c        # |g, 1>
        ee_vectors["p_ee"] = v
    rates = [abs(p.omega_c - frame), abs(p.omega_a - frame), abs(p.j_coupling), ga, gc,
             p.gamma_prime_a, p.gamma_prime_c]
    return Generator("cavity-atom", fock, frame, h, jump, losses,
                     {"n_cavity": num_a, "p_atom": num_s}, ee_vectors, _top_level_mask(fock),
                     p.gamma_unit, max(rates))


def _three_mode_generator(p: ThreeModeParams, fock: FockSpaceSpec, frame: float | None) -> Generator:
    if fock.n_cavities != 2:
        raise ValueError("the three-mode system has two cavity modes")
    spec = three_mode_spectrum(p)
    if frame is None:
        frame = float(spec.eigenvalues[0].real)
    nc = fock.n_max + 1
    ic, ia = sp.identity(nc, format="csr"), sp.identity(2, format="csr")
    lad = _ladder(fock.n_max)
    a1 = _kron(ia, lad, ic)
    a2 = _kron(ia, ic, lad)
    s = _kron(_ladder(1), ic, ic)
    n1, n2, ns = a1.getH() @ a1, a2.getH() @ a2, s.getH() @ s
    h = ((p.omega_1 - frame) * n1 + (p.omega_2 - frame) * n2 + (p.omega_a - frame) * ns
         + p.g_coupling * (a1.getH() @ s + s.getH() @ a1)
         + p.j_coupling * (a1.getH() @ a2 + a2.getH() @ a1)).tocsr()
    g1, g2 = amplitude_decay(p.v_1), amplitude_decay(p.v_2)
    jump = (np.sqrt(2 * g1) * a1 + np.sqrt(2 * g2) * a2).tocsr()
    losses = [np.sqrt(2 * g) * op for g, op in
              ((p.gamma_prime_1, a1), (p.gamma_prime_2, a2), (p.gamma_prime_a, s)) if g > 0]
    # the two least-damped single-excitation eigenvectors, basis {atom, cav1, cav2}
    slots = [nc * nc, nc, 1]
    ee_vectors = {}
    for name, k in (("p_ee", 0), ("p_ee2", 1)):
        v = np.zeros(fock.dim, complex)
        v[slots] = spec.eigenvectors[:, k]
        ee_vectors[name] = v
    rates = [abs(p.omega_1 - frame), abs(p.omega_2 - frame), abs(p.omega_a - frame), abs(p.j_coupling),
             abs(p.g_coupling), g1, g2, p.gamma_prime_1, p.gamma_prime_2, p.gamma_prime_a]
    return Generator("three-mode", fock, frame, h, jump, losses,
                     {"n_cavity": n1, "n_cavity2": n2, "p_atom": ns}, ee_vectors, _top_level_mask(fock),
                     p.gamma_unit, max(rates),
                     meta={"ee_eigenvalues": [complex(x) for x in spec.eigenvalues[:2]]})


def default_dt(gen: Generator, drive: DriveEnvelope | None = None) -> float:
    """Step resolving the fastest single-mode rate and the drive bandwidth by a factor 100."""
    rate = gen.max_rate
    if drive is not None:
        rate = max(rate, 1.0 / drive.width, abs(drive.detuning))
    return 0.01 / rate


def evolve_master(gen: Generator, drive: DriveEnvelope | None, t_final: float, dt: float | None = None,
                  sample_every: int | None = None, rho0: np.ndarray | None = None,
                  check_positivity: bool = True, positivity_every: int = 10) -> Trajectory:
    """Fixed-step RK4 integration of the master equation from the ground state."""
    if dt is None:
        dt = default_dt(gen, drive)
    n_steps = int(np.ceil(t_final / dt - 1e-9))
    dt = t_final / n_steps
    if sample_every is None:
        sample_every = max(1, int(round(0.05 / (gen.gamma_unit * dt))))

    heff = gen.heff
    jump, jump_h = gen.jump, gen.jump.getH().tocsr()
    losses = [op.tocsr() for op in gen.losses]

    def rhs(rho, beta):
        y = jump @ rho
        x = heff @ rho
        if beta != 0:
            x = x + 1j * beta * (jump_h @ rho) - 1j * np.conj(beta) * y
        # rho is Hermitian, so L rho L^dag = L (L rho)^dag; every piece is kept
        # exactly Hermitian or rounding errors excite unphysical growing modes
        z = jump @ y.conj().T
        for op in losses:
            z = z + op @ (op @ rho).conj().T
        out = -1j * x + 0.5 * z
        return out + out.conj().T

    beta_of = (lambda t: complex(drive(t))) if drive is not None else (lambda t: 0.0)
    rho = np.zeros((gen.fock.dim, gen.fock.dim), complex)
    if rho0 is None:
        rho[0, 0] = 1.0
    else:
        rho[:] = 0.5 * (rho0 + np.conj(rho0).T)

    names = list(gen.observables) + list(gen.ee_vectors) + ["trace_err", "tail_pop"]
    rows = []
    diag_ops = {k: op.diagonal().real for k, op in gen.observables.items()}

    def sample(t):
        d = rho.diagonal().real
        row = [t] + [float(d @ diag_ops[k]) for k in gen.observables]
        row += [float(np.vdot(v, rho @ v).real) for v in gen.ee_vectors.values()]
        trace = float(d.sum())
        tail = float(d[gen.tail].sum())
        row += [trace - 1.0, tail]
        rows.append(row)
        if abs(trace - 1.0) > TRACE_TOL:
            raise TraceDrift(f"trace {trace:.9f} at t = {t:g}")
        if tail > TAIL_TOL:
            raise TruncationBreach(f"top Fock level holds {tail:.3g} at t = {t:g}; raise n_max")
        if check_positivity and len(rows) % positivity_every == 1:
            lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
            if lam < -POSITIVITY_TOL:
                raise PositivityLoss(f"eigenvalue {lam:.3g} at t = {t:g}")

    sample(0.0)
    for n in range(n_steps):
        t = n * dt
        b0, b1, b2 = beta_of(t), beta_of(t + 0.5 * dt), beta_of(t + dt)
        k1 = rhs(rho, b0)
        k2 = rhs(rho + 0.5 * dt * k1, b1)
        k3 = rhs(rho + 0.5 * dt * k2, b1)
        k4 = rhs(rho + dt * k3, b2)
        rho = rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (n + 1) % sample_every == 0 or n + 1 == n_steps:
            sample((n + 1) * dt)

    data = np.array(rows)
    return Trajectory(t=data[:, 0], columns={k: data[:, i + 1] for i, k in enumerate(names)},
                      gamma_unit=gen.gamma_unit,
                      meta={"kind": gen.kind, "frame": gen.frame, "dt": dt, "n_max": gen.fock.n_max,
                            "rho_final": rho, **gen.meta})


def standard_drive(gamma_unit: float, mean_photons: float, detuning: float = 0.0) -> DriveEnvelope:
    """Gaussian pulse of width 1/Gamma centered 6 widths after t = 0."""
    width = 1.0 / gamma_unit
    return DriveEnvelope(mean_photons, width, 6 * width, detuning)


def run_coherent(params: SystemParams, mean_photons: float = 2.0, n_max: int | None = None,
                 t_after: float = 60.0, dt: float | None = None) -> Trajectory:
    """Cavity-atom system driven at the EE frequency; ``t_after`` is in units of 1/Gamma."""
    fock = FockSpaceSpec(n_max) if n_max else FockSpaceSpec.for_mean(mean_photons)
    gen = build_generator(params, fock)
    drive = standard_drive(params.gamma_unit, mean_photons)
    return evolve_master(gen, drive, drive.center + drive.width * 6 + t_after / params.gamma_unit, dt=dt)


def run_fig4c(params: ThreeModeParams, mean_photons: float = 2.0, n_max: int | None = None,
              t_after: float = 60.0, dt: float | None = None) -> Trajectory:
    """Three-mode system driven at its least-damped single-excitation frequency."""
    fock = FockSpaceSpec(n_max, 2) if n_max else FockSpaceSpec.for_mean(mean_photons, 2)
    gen = build_generator(params, fock)
    drive = standard_drive(params.gamma_unit, mean_photons)
    return evolve_master(gen, drive, drive.center + drive.width * 6 + t_after / params.gamma_unit, dt=dt)


def late_slope(traj: Trajectory, name: str, t_from: float) -> float:
    """Largest |d(name)/dt| over samples with ``t >= t_from`` (finite differences)."""
    keep = traj.t >= t_from
    t, y = traj.t[keep], traj[name][keep]
    if len(t) < 2:
        raise ValueError("not enough samples after t_from")
    return float(np.max(np.abs(np.diff(y) / np.diff(t))))
