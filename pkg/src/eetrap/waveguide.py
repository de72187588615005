"""Spatial grid, Gaussian wavepackets and the local coupling blocks.

The even waveguide mode is chiral with unit group velocity, so one time step
``dt = dx`` moves every photon by exactly one cell. Amplitudes are stored as
densities (``xi`` with ``sum |xi|^2 dx = 1``); the coupling blocks act on the
cell-normalized amplitudes ``xi * sqrt(dx)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import PulseOutOfDomain
from .model import SQRT2, SystemParams, ee_frequency, real_space_coupling

MIN_CELLS = 16
EDGE_CELLS = 8
EDGE_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with cell centers ``x0 + j*dx``; cell ``coupling_index`` holds x = 0."""

    n_cells: int
    dx: float
    x0: float
    coupling_index: int

    def __post_init__(self):
        if self.n_cells < MIN_CELLS:
            raise ValueError(f"need at least {MIN_CELLS} cells, got {self.n_cells}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not 0 <= self.coupling_index < self.n_cells:
            raise ValueError("coupling_index outside the grid")
        if abs(self.x0 + self.coupling_index * self.dx) > 0.5 * self.dx * (1 + 1e-9):
            raise ValueError("coupling cell does not contain x = 0")

    @classmethod
    def spanning(cls, x_min: float, x_max: float, dx: float) -> "GridSpec":
        """Smallest grid with a cell centered on x = 0 that covers [x_min, x_max]."""
        left = int(np.ceil(-x_min / dx - 1e-9))
        right = int(np.ceil(x_max / dx - 1e-9))
        left, right = max(left, 0), max(right, 0)
        return cls(n_cells=max(left + right + 1, MIN_CELLS), dx=dx, x0=-left * dx, coupling_index=left)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_cells)

    @property
    def x_max(self) -> float:
        return self.x0 + self.dx * (self.n_cells - 1)


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian packet ``exp(-(x-center)^2 / 2 width^2) exp(i carrier x)``.

    ``carrier`` is the detuning from the rotating frame.
    """

    center: float
    width: float
    carrier: float = 0.0
    normalize: bool = True

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("pulse width must be positive")


def gaussian_pulse(spec: PulseSpec, grid: GridSpec, margin: float = 5.0) -> np.ndarray:
    lo, hi = spec.center - margin * spec.width, spec.center + margin * spec.width
    if lo < grid.x0 or hi > grid.x_max:
        raise PulseOutOfDomain(
            f"pulse support [{lo:g}, {hi:g}] not inside grid [{grid.x0:g}, {grid.x_max:g}]")
    x = grid.x
    f = np.exp(-((x - spec.center) ** 2) / (2 * spec.width ** 2)) * np.exp(1j * spec.carrier * x)
    if spec.normalize:
        f /= np.sqrt(np.sum(np.abs(f) ** 2) * grid.dx)
    return f


def default_frame(params: SystemParams) -> float:
    """Rotating-frame frequency: the least-damped single-excitation level."""
    return ee_frequency(params)


def local_blocks(params: SystemParams, dx: float, frame: float) -> tuple[np.ndarray, np.ndarray]:
    """Local Hamiltonians acting during one step on the coupling cell.

    Returns ``(h3, h5)``. ``h3`` acts on ``(pair(c, j), atom + photon j,
    cavity + photon j)`` for every photon cell ``j`` other than the coupling
    cell ``c``; in the one-excitation sector the same matrix acts on
    ``(cell c, atom, cavity)``. ``h5`` acts on ``(pair(c, c), atom + photon c,
    cavity + photon c, atom + cavity, two cavity photons)``. All amplitudes are
    cell-normalized; intrinsic loss enters as an anti-Hermitian diagonal.
    """
    p = params
    da = p.omega_a - frame - 1j * p.gamma_prime_a
    dc = p.omega_c - frame - 1j * p.gamma_prime_c
    j = p.j_coupling
    ka = real_space_coupling(p.v_a) / np.sqrt(dx)
    kc = real_space_coupling(p.v_c) / np.sqrt(dx)

    h3 = np.array([
        [0, ka, kc],
        [ka, da, j],
        [kc, j, dc],
    ], dtype=complex)

    h5 = np.zeros((5, 5), dtype=complex)
    h5[1, 1], h5[2, 2] = da, dc
    h5[1, 2] = h5[2, 1] = j
    h5[3, 3], h5[4, 4] = da + dc, 2 * dc
    h5[3, 4] = h5[4, 3] = SQRT2 * j
    h5[0, 1] = h5[1, 0] = SQRT2 * ka
    h5[0, 2] = h5[2, 0] = SQRT2 * kc
    h5[1, 3] = h5[3, 1] = kc
    h5[2, 3] = h5[3, 2] = ka
    h5[2, 4] = h5[4, 2] = SQRT2 * kc
    return h3, h5


def local_propagators(params: SystemParams, dx: float, frame: float) -> tuple[np.ndarray, np.ndarray]:
    h3, h5 = local_blocks(params, dx, frame)
    return expm(-1j * dx * h3), expm(-1j * dx * h5)
