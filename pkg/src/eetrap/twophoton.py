"""Two-excitation real-space dynamics of the cavity-atom-waveguide system.

State amplitudes (densities on the grid):

* ``chi[i, j]``  two photons at cells i and j (symmetric, norm ``sum |chi|^2 dx^2``)
* ``phi_a[j]``   atom excited, one photon at j
* ``phi_c[j]``   one cavity photon, one waveguide photon at j
* ``e_ac``       atom and cavity excited
* ``e_2c``       two cavity photons

Time stepping uses ``dt = dx``: every photon coordinate moves one cell (a
diagonal shift of ``chi``), then the coupling row/column of ``chi`` together
with all emitter amplitudes is advanced by exact local propagators. The shift
is realized as a moving offset into ring buffers, so a step costs O(M) rather
than O(M^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryReached, ResidualTooLarge, SupportViolation, SymmetryDrift
from .model import SQRT2, SystemParams, ee_state, real_space_coupling
from .trajectory import Trajectory
from .waveguide import EDGE_CELLS, EDGE_TOL, GridSpec, PulseSpec, default_frame, gaussian_pulse, local_propagators

CSV_COLUMNS = ["t_gamma", "p_atom", "p_cav", "p_wg2", "e_ac2", "e_2c2", "p_ee", "norm"]
SYMMETRY_TOL = 1e-9


@dataclass
class TwoPhotonState:
    chi: np.ndarray
    phi_a: np.ndarray
    phi_c: np.ndarray
    e_ac: complex = 0.0
    e_2c: complex = 0.0

    @classmethod
    def empty(cls, n_cells: int) -> "TwoPhotonState":
        return cls(np.zeros((n_cells, n_cells), complex), np.zeros(n_cells, complex),
                   np.zeros(n_cells, complex))

    @classmethod
    def from_pulse(cls, pulse: "TwoPhotonPulse") -> "TwoPhotonState":
        m = pulse.grid.n_cells
        return cls(pulse.chi.astype(complex, copy=True), np.zeros(m, complex), np.zeros(m, complex))

    def copy(self) -> "TwoPhotonState":
        return TwoPhotonState(self.chi.copy(), self.phi_a.copy(), self.phi_c.copy(), self.e_ac, self.e_2c)

    def stored(self, dx: float) -> float:
        """Probability that at least one excitation sits in the atom-cavity system."""
        return float((np.vdot(self.phi_a, self.phi_a).real + np.vdot(self.phi_c, self.phi_c).real) * dx
                     + abs(self.e_ac) ** 2 + abs(self.e_2c) ** 2)

    def norm(self, dx: float) -> float:
        return float(np.vdot(self.chi, self.chi).real * dx * dx) + self.stored(dx)


@dataclass
class TwoPhotonPulse:
    """Two-photon waveguide amplitude on a grid plus a free-form descriptor."""

    chi: np.ndarray
    grid: GridSpec
    descriptor: dict = field(default_factory=dict)

    def norm(self) -> float:
        return float(np.vdot(self.chi, self.chi).real * self.grid.dx ** 2)

    def regrid(self, grid: GridSpec) -> "TwoPhotonPulse":
        """Copy onto another grid with the same cell size; cells outside are dropped."""
        if not np.isclose(grid.dx, self.grid.dx, rtol=1e-12, atol=0):
            raise ValueError("regrid needs equal cell sizes")
        shift = grid.coupling_index - self.grid.coupling_index
        m_old, m_new = self.grid.n_cells, grid.n_cells
        lo = max(0, -shift)
        hi = min(m_old, m_new - shift)
        chi = np.zeros((m_new, m_new), complex)
        if hi > lo:
            chi[lo + shift:hi + shift, lo + shift:hi + shift] = self.chi[lo:hi, lo:hi]
        return TwoPhotonPulse(chi, grid, dict(self.descriptor))

    def cropped(self, x_min: float, x_max: float) -> "TwoPhotonPulse":
        return self.regrid(GridSpec.spanning(x_min, x_max, self.grid.dx))

    def marginal(self) -> np.ndarray:
        """Single-photon position density ``int |chi(x, y)|^2 dy``."""
        return np.sum(np.abs(self.chi) ** 2, axis=1) * self.grid.dx

    def mean_position(self) -> float:
        w = self.marginal()
        return float(np.sum(w * self.grid.x) / np.sum(w))


def symmetry_error(chi: np.ndarray) -> float:
    return float(np.max(np.abs(chi - chi.T))) if chi.size else 0.0


def p_ee(state: TwoPhotonState, params: SystemParams, dx: float) -> float:
    """Probability that one excitation occupies the dark single-excitation state."""
    w = params.v_a ** 2 + params.v_c ** 2
    d = params.v_c * state.phi_a - params.v_a * state.phi_c
    return float(np.vdot(d, d).real * dx / w)


def observables(state: TwoPhotonState, params: SystemParams, dx: float,
                chi_weight: float | None = None) -> dict[str, float]:
    """Populations of ``state``; ``chi_weight`` (``sum |chi|^2``) skips the O(M^2) reduction when known."""
    pa = float(np.vdot(state.phi_a, state.phi_a).real * dx)
    pc = float(np.vdot(state.phi_c, state.phi_c).real * dx)
    eac, e2c = abs(state.e_ac) ** 2, abs(state.e_2c) ** 2
    if chi_weight is None:
        chi_weight = float(np.vdot(state.chi, state.chi).real)
    wg2 = chi_weight * dx * dx
    return {
        "p_atom": pa + eac,
        "p_cav": pc + eac + 2 * e2c,
        "p_wg2": wg2,
        "e_ac2": eac,
        "e_2c2": e2c,
        "p_ee": p_ee(state, params, dx) if (params.v_a or params.v_c) else 0.0,
        "stored": pa + pc + eac + e2c,
        "norm": wg2 + pa + pc + eac + e2c,
    }


# --- input and output states -----------------------------------------------------

def build_gaussian_two_photon(spec_a: PulseSpec, spec_b: PulseSpec, grid: GridSpec) -> TwoPhotonPulse:
    """Symmetrized product of two Gaussian packets, both incoming from x < 0."""
    for spec in (spec_a, spec_b):
        if spec.center + 5 * spec.width > 0:
            raise SupportViolation(f"pulse at {spec.center:g} (width {spec.width:g}) reaches x >= 0")
    fa = gaussian_pulse(spec_a, grid)
    fb = gaussian_pulse(spec_b, grid)
    behind = grid.x >= 0
    fa[behind] = 0
    fb[behind] = 0
    chi = np.outer(fa, fb)
    chi = chi + chi.T
    chi /= np.sqrt(np.vdot(chi, chi).real) * grid.dx
    desc = {"kind": "gaussian-product",
            "x_a": spec_a.center, "x_b": spec_b.center,
            "sigma_a": spec_a.width, "sigma_b": spec_b.width,
            "k_a": spec_a.carrier, "k_b": spec_b.carrier}
    return TwoPhotonPulse(chi, grid, desc)


def make_release_state(params: SystemParams, packet: np.ndarray, grid: GridSpec) -> TwoPhotonState:
    """One photon stored in the dark state, one incoming photon with amplitude ``packet``."""
    packet = np.asarray(packet, dtype=complex)
    if np.sum(np.abs(packet[grid.x >= 0]) ** 2) * grid.dx > 1e-12:
        raise SupportViolation("release packet must vanish for x >= 0")
    amp_a, amp_c = ee_state(params)
    m = grid.n_cells
    return TwoPhotonState(np.zeros((m, m), complex), amp_a * packet, amp_c * packet)


def extract_outgoing(state: TwoPhotonState, grid: GridSpec, threshold: float = 0.05) -> TwoPhotonPulse:
    residual = state.stored(grid.dx)
    if residual >= threshold:
        raise ResidualTooLarge(f"stored population {residual:.4g} >= {threshold:g}")
    chi = state.chi.copy()
    norm = np.sqrt(np.vdot(chi, chi).real) * grid.dx
    chi /= norm
    return TwoPhotonPulse(chi, grid, {"kind": "outgoing", "residual": residual, "chi_norm": norm ** 2})


def time_reverse(pulse: TwoPhotonPulse, tol: float = 1e-8) -> TwoPhotonPulse:
    """Mirror through the coupling point and conjugate: ``chi'(x1, x2) = chi*(-x1, -x2)``."""
    g = pulse.grid
    not_out = g.x <= 0
    weight = (np.sum(np.abs(pulse.chi[not_out, :]) ** 2) * g.dx ** 2) / max(pulse.norm(), 1e-300)
    if weight > tol:
        raise SupportViolation(f"pulse weight {weight:.3g} at x <= 0; expected an outgoing state")
    mirrored = GridSpec(n_cells=g.n_cells, dx=g.dx, x0=-g.x_max, coupling_index=g.n_cells - 1 - g.coupling_index)
    desc = dict(pulse.descriptor)
    desc["time_reversed"] = not desc.get("time_reversed", False)
    return TwoPhotonPulse(np.conj(pulse.chi[::-1, ::-1]), mirrored, desc)


# --- propagation -----------------------------------------------------------------

class SteadyStateDetector:
    """Fires once ``P_EE`` moves by less than ``rel_tol`` (relative) over ``window``."""

    def __init__(self, t_min: float, window: float, rel_tol: float = 1e-4):
        self.t_min, self.window, self.rel_tol = t_min, window, rel_tol
        self._t: list[float] = []
        self._p: list[float] = []
        self.t_steady: float | None = None

    def update(self, t: float, p: float) -> bool:
        self._t.append(t)
        self._p.append(p)
        if t < self.t_min or t - self._t[0] < self.window:
            return False
        k = np.searchsorted(self._t, t - self.window, side="right") - 1
        change = abs(p - self._p[k])
        if change <= self.rel_tol * abs(p) or change <= 1e-14:
            self.t_steady = t
            return True
        return False


def evolve_two_photon(params: SystemParams, state: TwoPhotonState, grid: GridSpec, t_final: float,
                      dt: float | None = None, frame: float | None = None, sample_every: int | None = None,
                      detector: SteadyStateDetector | None = None,
                      symmetry_every: int = 250) -> tuple[Trajectory, TwoPhotonState]:
    """Propagate a two-excitation state to ``t_final`` (or until ``detector`` fires).

    Raises :class:`BoundaryReached` when amplitude above ``1e-8`` sits in the
    eight right-most cells, and :class:`SymmetryDrift` if ``chi`` loses its
    exchange symmetry.
    """
    dx = grid.dx
    m = grid.n_cells
    if dt is not None and not np.isclose(dt, dx, rtol=1e-12, atol=0):
        raise ValueError(f"dt must equal dx ({dx:g}) for exact transport, got {dt:g}")
    if state.chi.shape != (m, m):
        raise ValueError("state does not match the grid")
    if symmetry_error(state.chi) > 1e-12 * max(1.0, float(np.max(np.abs(state.chi)))):
        raise SymmetryDrift("initial chi is not symmetric")
    if frame is None:
        frame = default_frame(params)
    if sample_every is None:
        g = params.gamma_unit
        sample_every = max(1, int(round(0.1 / (g * dx)))) if g > 0 else 1
    u3, u5 = local_propagators(params, dx, frame)
    c = grid.coupling_index
    sq = np.sqrt(dx)
    # cell normalizations folded into the propagators (exact pass-through when decoupled)
    s3 = np.array([SQRT2 * dx, sq, sq])
    s5 = np.array([dx, sq, sq, 1.0, 1.0])
    u3 = u3 * s3[None, :] / s3[:, None]
    u5 = u5 * s5[None, :] / s5[:, None]
    n_steps = int(round(t_final / dx))

    st = state.copy()
    chi, phi_a, phi_c = st.chi, st.phi_a, st.phi_c
    e = np.array([st.e_ac, st.e_2c], dtype=complex)
    rows: list[tuple] = []
    n_samples = 0
    # sum |chi|^2, kept up to date row by row; resynchronized at every symmetry check
    weight = float(np.vdot(chi, chi).real)

    def line_weight(k):
        r = chi[k, :]
        return 2 * float(np.vdot(r, r).real) - abs(r[k]) ** 2

    def sample(n):
        nonlocal n_samples, weight
        snap = TwoPhotonState(chi, phi_a, phi_c, e[0], e[1])
        obs = observables(snap, params, dx, weight)
        rows.append((n * dx, obs["p_atom"], obs["p_cav"], obs["p_wg2"], obs["e_ac2"], obs["e_2c2"],
                     obs["p_ee"], obs["stored"], obs["norm"]))
        n_samples += 1
        if n_samples % symmetry_every == 0:
            err = symmetry_error(chi)
            if err > SYMMETRY_TOL:
                raise SymmetryDrift(f"max |chi - chi^T| = {err:.3g} at t = {n * dx:g}")
            weight = float(np.vdot(chi, chi).real)
        return obs

    sample(0)
    if detector is not None:
        detector.update(0.0, rows[-1][6])
    n_done = 0
    for n in range(1, n_steps + 1):
        edge = (np.arange(m - EDGE_CELLS, m) - (n - 1)) % m
        amp = max(np.max(np.abs(chi[edge, :])) * dx, np.max(np.abs(phi_a[edge])) * sq,
                  np.max(np.abs(phi_c[edge])) * sq)
        if amp > EDGE_TOL:
            raise BoundaryReached(f"amplitude {amp:.3g} at the right edge at t = {(n - 1) * dx:g}")

        p0 = (-n) % m
        weight -= line_weight(p0)
        chi[p0, :] = 0
        chi[:, p0] = 0
        phi_a[p0] = 0
        phi_c[p0] = 0

        q = (c - n) % m
        weight -= line_weight(q)
        corner = u5 @ np.array([chi[q, q], phi_a[q], phi_c[q], e[0], e[1]])
        block = u3 @ np.stack([chi[q, :], phi_a, phi_c])
        row = block[0]
        row[q] = corner[0]
        chi[q, :] = row
        chi[:, q] = row
        phi_a[:] = block[1]
        phi_c[:] = block[2]
        phi_a[q] = corner[1]
        phi_c[q] = corner[2]
        e = corner[3:]
        weight = max(weight + line_weight(q), 0.0)
        n_done = n

        if n % sample_every == 0 or n == n_steps:
            obs = sample(n)
            if detector is not None and detector.update(n * dx, obs["p_ee"]):
                break

    err = symmetry_error(chi)
    if err > SYMMETRY_TOL:
        raise SymmetryDrift(f"max |chi - chi^T| = {err:.3g} at the end of the run")

    roll = n_done % m
    final = TwoPhotonState(np.roll(chi, roll, axis=(0, 1)), np.roll(phi_a, roll), np.roll(phi_c, roll),
                           complex(e[0]), complex(e[1]))
    data = np.array(rows)
    names = ["p_atom", "p_cav", "p_wg2", "e_ac2", "e_2c2", "p_ee", "stored", "norm"]
    traj = Trajectory(t=data[:, 0], columns={k: data[:, i + 1] for i, k in enumerate(names)},
                      gamma_unit=params.gamma_unit,
                      meta={"frame": frame, "dx": dx, "n_steps": n_done, "t_end": n_done * dx,
                            "t_steady": detector.t_steady if detector else None})
    return traj, final


# --- brute-force reference -------------------------------------------------------

class TwoExcitationBasis:
    """Orthonormal basis of the discretized two-excitation sector.

    Order: photon pairs ``(i <= j)``, then atom + photon ``j``, cavity +
    photon ``j``, then ``E_AC`` and ``E_2C``. :meth:`pack` converts grid
    densities to normalized coordinates and :meth:`unpack` reverses it.
    """

    def __init__(self, n_cells: int, dx: float):
        self.m, self.dx = n_cells, dx
        iu = np.triu_indices(n_cells)
        self.pairs = list(zip(iu[0].tolist(), iu[1].tolist()))
        self.pair_index = {p: k for k, p in enumerate(self.pairs)}
        n_p = len(self.pairs)
        self.a0, self.c0 = n_p, n_p + n_cells
        self.eac, self.e2c = n_p + 2 * n_cells, n_p + 2 * n_cells + 1
        self.dim = n_p + 2 * n_cells + 2
        # normalized amplitude = scale * density
        self.scale = np.empty(self.dim)
        self.scale[:n_p] = [dx if i == j else SQRT2 * dx for i, j in self.pairs]
        self.scale[n_p:n_p + 2 * n_cells] = np.sqrt(dx)
        self.scale[-2:] = 1.0
        self.iu = iu

    def pair(self, i: int, j: int) -> int:
        return self.pair_index[(i, j) if i <= j else (j, i)]

    def pack(self, state: TwoPhotonState) -> np.ndarray:
        dens = np.concatenate([state.chi[self.iu], state.phi_a, state.phi_c, [state.e_ac, state.e_2c]])
        return dens * self.scale

    def unpack(self, vec: np.ndarray) -> TwoPhotonState:
        dens = vec / self.scale
        m = self.m
        chi = np.zeros((m, m), complex)
        chi[self.iu] = dens[:len(self.pairs)]
        chi = chi + chi.T - np.diag(np.diag(chi))
        return TwoPhotonState(chi, dens[self.a0:self.a0 + m].copy(), dens[self.c0:self.c0 + m].copy(),
                              complex(dens[self.eac]), complex(dens[self.e2c]))


def assemble_local_hamiltonian(params: SystemParams, grid: GridSpec, frame: float,
                               flip: str | None = None) -> tuple[np.ndarray, TwoExcitationBasis]:
    """Dense two-excitation Hamiltonian (all terms except free transport).

    Built equation by equation from the equations of motion for the density
    amplitudes, then rescaled to the orthonormal basis. Nothing here forces
    Hermiticity, so a wrong prefactor shows up as ``H != H^dagger``. ``flip``
    names one coupling term whose sign is inverted (negative control).
    """
    b = TwoExcitationBasis(grid.n_cells, grid.dx)
    m, dx, c = grid.n_cells, grid.dx, grid.coupling_index
    p = params
    ta, tc = real_space_coupling(p.v_a), real_space_coupling(p.v_c)
    da = p.omega_a - frame - 1j * p.gamma_prime_a
    dc = p.omega_c - frame - 1j * p.gamma_prime_c
    delta = 1.0 / dx
    dens = np.zeros((b.dim, b.dim), complex)

    def term(name, row, col, coef):
        dens[row, col] += -coef if name == flip else coef

    # i d/dt chi(x1, x2) = (1/sqrt2)[delta(x1)(tc phi_c(x2) + ta phi_a(x2)) + (x1 <-> x2)]
    for (i, j) in b.pairs:
        r = b.pair(i, j)
        for x1, x2 in ((i, j), (j, i)):
            if x1 == c:
                term("chi<-phi_a", r, b.a0 + x2, ta * delta / SQRT2)
                term("chi<-phi_c", r, b.c0 + x2, tc * delta / SQRT2)
    for x in range(m):
        ra, rc = b.a0 + x, b.c0 + x
        # i d/dt phi_c = dc phi_c + J phi_a + delta(x)(sqrt2 tc E2C + ta EAC) + sqrt2 tc chi(x, 0)
        term("phi_c<-phi_c", rc, rc, dc)
        term("phi_c<-phi_a", rc, ra, p.j_coupling)
        term("phi_c<-chi", rc, b.pair(x, c), SQRT2 * tc)
        # i d/dt phi_a = da phi_a + J phi_c + delta(x) tc EAC + sqrt2 ta chi(x, 0)
        term("phi_a<-phi_a", ra, ra, da)
        term("phi_a<-phi_c", ra, rc, p.j_coupling)
        term("phi_a<-chi", ra, b.pair(x, c), SQRT2 * ta)
        if x == c:
            term("phi_c<-e2c", rc, b.e2c, SQRT2 * tc * delta)
            term("phi_c<-eac", rc, b.eac, ta * delta)
            term("phi_a<-eac", ra, b.eac, tc * delta)
    # i d/dt EAC = (dc + da) EAC + sqrt2 J E2C + tc phi_a(0) + ta phi_c(0)
    term("eac<-eac", b.eac, b.eac, da + dc)
    term("eac<-e2c", b.eac, b.e2c, SQRT2 * p.j_coupling)
    term("eac<-phi_a", b.eac, b.a0 + c, tc)
    term("eac<-phi_c", b.eac, b.c0 + c, ta)
    # i d/dt E2C = 2 dc E2C + sqrt2 J EAC + sqrt2 tc phi_c(0)
    term("e2c<-e2c", b.e2c, b.e2c, 2 * dc)
    term("e2c<-eac", b.e2c, b.eac, SQRT2 * p.j_coupling)
    term("e2c<-phi_c", b.e2c, b.c0 + c, SQRT2 * tc)

    h = dens * b.scale[:, None] / b.scale[None, :]
    return h, b


def assemble_shift(basis: TwoExcitationBasis) -> np.ndarray:
    """Dense one-cell transport; amplitude leaving the right edge is dropped."""
    m = basis.m
    s = np.zeros((basis.dim, basis.dim))
    for (i, j) in basis.pairs:
        if i + 1 < m and j + 1 < m:
            s[basis.pair(i + 1, j + 1), basis.pair(i, j)] = 1
    for x in range(m - 1):
        s[basis.a0 + x + 1, basis.a0 + x] = 1
        s[basis.c0 + x + 1, basis.c0 + x] = 1
    s[basis.eac, basis.eac] = 1
    s[basis.e2c, basis.e2c] = 1
    return s
