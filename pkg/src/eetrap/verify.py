"""Fast self-checks of the numerical core (run by ``eetrap verify``).

Each check returns a :class:`Check` with the measured value and the bound it
is held to; none of them takes more than a few seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .coherent import FockSpaceSpec, build_generator
from .model import SystemParams, single_excitation_spectrum, with_ee_coupling
from .onephoton import SingleExcState, evolve_single
from .twophoton import (TwoPhotonState, assemble_local_hamiltonian, assemble_shift, build_gaussian_two_photon,
                        evolve_two_photon, symmetry_error)
from .waveguide import GridSpec, PulseSpec, default_frame


@dataclass
class Check:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.bound)


def reference_params() -> SystemParams:
    return with_ee_coupling(SystemParams(omega_c=0.96, omega_a=1.0, v_a=0.1, v_c=0.05))


def _small_grid(params: SystemParams, n_left: int = 9, n_cells: int = 40, dx_gamma: float = 0.1) -> GridSpec:
    dx = dx_gamma / params.gamma_unit
    return GridSpec(n_cells=n_cells, dx=dx, x0=-n_left * dx, coupling_index=n_left)


def _random_state(grid: GridSpec, rng: np.random.Generator) -> TwoPhotonState:
    """Random amplitudes on cells left of the coupling point, so nothing reaches the edge in 20 steps."""
    m, c = grid.n_cells, grid.coupling_index
    live = np.arange(m) <= c
    z = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    chi = (z + z.T) * np.outer(live, live)
    pa = (rng.normal(size=m) + 1j * rng.normal(size=m)) * live
    pc = (rng.normal(size=m) + 1j * rng.normal(size=m)) * live
    st = TwoPhotonState(chi, pa, pc, complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal()))
    scale = np.sqrt(st.norm(grid.dx))
    return TwoPhotonState(chi / scale, pa / scale, pc / scale, st.e_ac / scale, st.e_2c / scale)


def check_hermiticity(params: SystemParams | None = None, flip: str | None = None) -> Check:
    p = params or reference_params()
    grid = _small_grid(p)
    h, _ = assemble_local_hamiltonian(p, grid, default_frame(p), flip=flip)
    return Check("two-excitation Hamiltonian is Hermitian", float(np.max(np.abs(h - h.conj().T))), 1e-14)


def check_dense_propagation(params: SystemParams | None = None, n_steps: int = 20, seed: int = 7) -> Check:
    p = params or reference_params()
    grid = _small_grid(p)
    frame = default_frame(p)
    h, basis = assemble_local_hamiltonian(p, grid, frame)
    step = expm(-1j * grid.dx * h) @ assemble_shift(basis)
    st = _random_state(grid, np.random.default_rng(seed))
    v = basis.pack(st)
    for _ in range(n_steps):
        v = step @ v
    _, fin = evolve_two_photon(p, st, grid, n_steps * grid.dx, frame=frame)
    return Check("engine matches dense matrix exponential", float(np.max(np.abs(basis.pack(fin) - v))), 1e-6)


def small_trap_run(params: SystemParams | None = None, dx_gamma: float = 0.25):
    """Coarse replica of the headline trapping run (Gaussian pair, width 1/Gamma)."""
    p = params or reference_params()
    g = p.gamma_unit
    grid = GridSpec.spanning(-11 / g, 21 / g, dx_gamma / g)
    from .protocols import bright_carrier

    spec = PulseSpec(-5 / g, 1 / g, bright_carrier(p))
    pulse = build_gaussian_two_photon(spec, spec, grid)
    return evolve_two_photon(p, TwoPhotonState.from_pulse(pulse), grid, 15 / g, symmetry_every=1)


def check_norm_and_symmetry() -> list[Check]:
    traj, fin = small_trap_run()
    return [Check("lossless norm conserved", float(np.max(np.abs(traj["norm"] - 1))), 1e-6),
            Check("exchange symmetry kept", symmetry_error(fin.chi), 1e-9)]


def check_free_transport() -> Check:
    """With the waveguide couplings off the field moves exactly one cell per step, also across x = 0."""
    p = SystemParams(omega_c=0.96, omega_a=1.0, j_coupling=0.02)
    grid = GridSpec(n_cells=64, dx=0.5, x0=-20.0, coupling_index=40)
    rng = np.random.default_rng(3)
    n = 36
    xi = np.zeros(64, complex)
    xi[:n] = rng.normal(size=n) + 1j * rng.normal(size=n)
    _, out = evolve_single(p, SingleExcState(xi.copy(), 0.6, 0.8), grid, 10 * grid.dx, frame=1.0)
    ok1 = np.array_equal(out.xi[10:10 + n], xi[:n]) and not out.xi[:10].any()
    chi = np.zeros((64, 64), complex)
    blk = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    chi[:n, :n] = blk + blk.T
    st = TwoPhotonState(chi.copy(), np.zeros(64, complex), np.zeros(64, complex))
    _, fin = evolve_two_photon(p, st, grid, 10 * grid.dx, frame=1.0)
    ok2 = np.array_equal(fin.chi[10:10 + n, 10:10 + n], chi[:n, :n]) and np.abs(fin.chi).sum() == np.abs(chi).sum()
    return Check("free transport is an exact shift", 0.0 if (ok1 and ok2) else 1.0, 0.5)


def check_dark_state() -> Check:
    """The collective jump operator annihilates the single-excitation EE."""
    p = reference_params()
    gen = build_generator(p, FockSpaceSpec(3))
    v = gen.ee_vectors["p_ee"]
    return Check("jump operator annihilates the EE", float(np.max(np.abs(gen.jump @ v))), 1e-15)


def fitted_bright_eigenvalue(params: SystemParams | None = None, dx_gamma: float = 0.002,
                             t_gamma: float = 3.0) -> tuple[complex, complex]:
    """Complex frequency fitted from the free decay of the bright eigenmode, and the exact one."""
    p = params or reference_params()
    g = p.gamma_unit
    spec = single_excitation_spectrum(p)
    lam, vec = spec.eigenvalues[1], spec.eigenvectors[:, 1]
    frame = default_frame(p)
    dx = dx_gamma / g
    n_steps = int(round(t_gamma / dx_gamma))
    chunk = max(1, n_steps // 200)
    # the field is cleared after every chunk (emission never returns), so a short grid suffices
    grid = GridSpec.spanning(-2 * dx, (chunk + 20) * dx, dx)
    st = SingleExcState(np.zeros(grid.n_cells, complex), vec[0], vec[1])
    amps = [complex(np.vdot(vec, [st.e_a, st.e_c]))]
    times = [0.0]
    for k in range(n_steps // chunk):
        _, st = evolve_single(p, st, grid, chunk * dx, frame=frame, sample_every=chunk)
        st.xi[:] = 0
        amps.append(complex(np.vdot(vec, [st.e_a, st.e_c])))
        times.append((k + 1) * chunk * dx)
    amps, times = np.array(amps), np.array(times)
    rate = np.polyfit(times, np.log(np.abs(amps)), 1)[0]
    freq = np.polyfit(times, np.unwrap(np.angle(amps)), 1)[0]
    return complex(-freq + frame, rate), lam


def check_decay_fit() -> list[Check]:
    fit, exact = fitted_bright_eigenvalue()
    frame = default_frame(reference_params())
    return [Check("fitted bright detuning matches eigenvalue (relative)",
                  abs((fit.real - frame) - (exact.real - frame)) / abs(exact.real - frame), 0.01),
            Check("fitted bright decay matches eigenvalue (relative)", abs(fit.imag - exact.imag) / abs(exact.imag),
                  0.01)]


def run_all(corrupt_sign: bool = False) -> list[Check]:
    checks = [check_hermiticity(flip="phi_c<-chi" if corrupt_sign else None), check_dense_propagation()]
    checks += check_norm_and_symmetry()
    checks.append(check_free_transport())
    checks.append(check_dark_state())
    checks += check_decay_fit()
    return checks
