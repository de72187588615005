"""EE2P binary format for two-photon grids.

Layout (little-endian): magic ``b"EE2P"``, version u16, M u32, dx f64,
x0 f64, t f64, then M*M complex128 values row-major in x1.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .waveguide import GridSpec

MAGIC = b"EE2P"
VERSION = 1
_HEADER = struct.Struct("<4sHIddd")


def write_ee2p(path, chi: np.ndarray, dx: float, x0: float, t: float = 0.0):
    chi = np.asarray(chi)
    m = chi.shape[0]
    if chi.shape != (m, m):
        raise ValueError("chi must be square")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, m, float(dx), float(x0), float(t)))
        fh.write(np.ascontiguousarray(chi, dtype="<c16").tobytes())


def read_ee2p(path) -> tuple[np.ndarray, float, float, float]:
    """Return ``(chi, dx, x0, t)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, m, dx, x0, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not an EE2P file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported EE2P version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 16 * m * m:
        raise ValueError(f"{path}: expected {m}x{m} grid, got {len(body)} bytes")
    chi = np.frombuffer(body, dtype="<c16").reshape(m, m).astype(complex)
    return chi, dx, x0, t


def grid_from_header(m: int, dx: float, x0: float) -> GridSpec:
    c = int(round(-x0 / dx))
    return GridSpec(n_cells=m, dx=dx, x0=x0, coupling_index=c)


def save_pulse(path, pulse, t: float = 0.0):
    write_ee2p(path, pulse.chi, pulse.grid.dx, pulse.grid.x0, t)


def load_pulse(path):
    from .twophoton import TwoPhotonPulse

    chi, dx, x0, _ = read_ee2p(path)
    return TwoPhotonPulse(chi, grid_from_header(chi.shape[0], dx, x0), {"kind": "file", "path": str(path)})
