"""Experiment orchestration: trapping efficiency, parameter sweeps, loss
comparison, release optimization and the release / time-reverse / trap
pipeline.

Lengths and times passed to these functions in ``*_gamma`` arguments are in
units of ``1/Gamma`` of the system at hand; everything else is absolute.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EETrapError, NoSteadyState, TargetNotMet
from .gridio import save_pulse
from .model import (SystemParams, bright_frequency, carrier_candidates, ee_condition_residual, ee_state,
                    solve_j_for_ee)
from .trajectory import Trajectory, fit_exponential_rate
from .twophoton import (SteadyStateDetector, TwoPhotonPulse, TwoPhotonState, build_gaussian_two_photon,
                        evolve_two_photon, extract_outgoing, make_release_state, time_reverse)
from .waveguide import GridSpec, PulseSpec, default_frame, gaussian_pulse

WORKERS_ENV = "EETRAP_WORKERS"
DEFAULT_DX_GAMMA = 0.05
AMPLITUDE_FLOOR = 1e-10


def bright_carrier(params: SystemParams) -> float:
    """Carrier resonant with the single-excitation bright mode, in the default frame."""
    return bright_frequency(params) - default_frame(params)


def default_center_gamma(sigma_gamma: float) -> float:
    """Input position far enough back that the packet starts fully at x < 0."""
    return -max(5.0, 6.0 * sigma_gamma)


def gaussian_input(params: SystemParams, sigma_gamma: float = 1.0, center_gamma: float | None = None,
                   carrier: float | None = None, dx_gamma: float = DEFAULT_DX_GAMMA,
                   x_max_gamma: float = 1.0) -> TwoPhotonPulse:
    """Two identical Gaussian photons heading for the emitters (bright carrier by default)."""
    g = params.gamma_unit
    if center_gamma is None:
        center_gamma = default_center_gamma(sigma_gamma)
    if carrier is None:
        carrier = bright_carrier(params)
    spec = PulseSpec(center_gamma / g, sigma_gamma / g, carrier)
    grid = GridSpec.spanning((center_gamma - 5.5 * sigma_gamma) / g, x_max_gamma / g, dx_gamma / g)
    return build_gaussian_two_photon(spec, spec, grid)


def _support(weights: np.ndarray, x: np.ndarray, dx: float) -> tuple[float, float]:
    live = np.nonzero(np.sqrt(weights * dx) > AMPLITUDE_FLOOR)[0]
    if live.size == 0:
        return 0.0, 0.0
    return float(x[live[0]]), float(x[live[-1]])


# --- trapping --------------------------------------------------------------------

@dataclass
class TrapResult:
    p_ee: float
    t_steady: float | None
    t_arrival: float
    trajectory: Trajectory | None
    final_state: TwoPhotonState | None
    grid: GridSpec | None


def trap(params: SystemParams, pulse: TwoPhotonPulse, t_max: float | None = None, window_gamma: float = 2.0,
         rel_tol: float = 1e-4, settle_gamma: float = 10.0, frame: float | None = None,
         sample_every: int | None = None) -> TrapResult:
    """Send ``pulse`` onto the emitters and run until ``P_EE`` is steady.

    The detector needs the relative change of ``P_EE`` over ``window_gamma``
    to drop below ``rel_tol`` and at least ``settle_gamma`` to have passed
    since the pulse centroid arrived. ``t_max`` defaults to ``60/Gamma`` or
    20/Gamma after the trailing edge passes, whichever is later.
    """
    if abs(ee_condition_residual(params)) >= 1e-9:
        raise ValueError("trapping runs need the bound-state condition to hold")
    g = params.gamma_unit
    if pulse.norm() == 0:
        return TrapResult(0.0, 0.0, 0.0, None, None, None)
    marg = pulse.marginal()
    t_arrival = -pulse.mean_position()
    tail, lead = _support(marg, pulse.grid.x, pulse.grid.dx)
    if t_max is None:
        t_max = max(60.0 / g, -tail + 20.0 / g)
    grid = GridSpec.spanning(min(pulse.grid.x0, tail), lead + t_max + 1.0 / g, pulse.grid.dx)
    state = TwoPhotonState.from_pulse(pulse.regrid(grid))
    det = SteadyStateDetector(t_min=t_arrival + settle_gamma / g, window=window_gamma / g, rel_tol=rel_tol)
    traj, final = evolve_two_photon(params, state, grid, t_max, frame=frame, sample_every=sample_every,
                                    detector=det)
    if det.t_steady is None:
        raise NoSteadyState(f"P_EE still moving at t = {t_max * g:.1f}/Gamma")
    return TrapResult(traj.final("p_ee"), det.t_steady, t_arrival, traj, final, grid)


def trap_efficiency(params: SystemParams, pulse: TwoPhotonPulse, **kwargs) -> float:
    """Steady-state EE occupation left behind by ``pulse``."""
    return trap(params, pulse, **kwargs).p_ee


# --- release ----------------------------------------------------------------------

@dataclass
class ReleaseResult:
    residual: float
    trajectory: Trajectory
    final_state: TwoPhotonState
    grid: GridSpec
    packet: np.ndarray
    sigma_gamma: float


def release(params: SystemParams, sigma_gamma: float = 1.0, center_gamma: float | None = None,
            carrier: float | None = None, dx_gamma: float = DEFAULT_DX_GAMMA,
            t_after_gamma: float = 30.0) -> ReleaseResult:
    """One photon parked in the EE, one Gaussian photon sent in to knock it out.

    The run continues ``t_after_gamma`` past the moment the packet's trailing
    edge reaches the emitters; the residual is the population still stored.
    """
    g = params.gamma_unit
    if center_gamma is None:
        center_gamma = default_center_gamma(sigma_gamma)
    if carrier is None:
        carrier = bright_carrier(params)
    tail = center_gamma - 6 * sigma_gamma
    t_final = (-tail + t_after_gamma) / g
    lead = (center_gamma + 6 * sigma_gamma) / g
    grid = GridSpec.spanning(tail / g, max(lead, 0.0) + t_final + 1.0 / g, dx_gamma / g)
    packet = gaussian_pulse(PulseSpec(center_gamma / g, sigma_gamma / g, carrier), grid)
    packet[grid.x >= 0] = 0
    packet /= np.sqrt(np.sum(np.abs(packet) ** 2) * grid.dx)
    state = make_release_state(params, packet, grid)
    traj, final = evolve_two_photon(params, state, grid, t_final)
    return ReleaseResult(final.stored(grid.dx), traj, final, grid, packet, sigma_gamma)


@dataclass
class ReleaseReport:
    best_sigma: float
    residuals: dict
    monotone: bool
    target: float


def optimize_release_pulse(params: SystemParams, sigma_list=(1.0, 2.0, 3.0, 5.0), target: float = 0.03,
                           dx_gamma: float = DEFAULT_DX_GAMMA) -> ReleaseReport:
    """Release residual for each Gaussian width; the narrowest width meeting ``target`` wins."""
    sigmas = [float(s) for s in sigma_list]
    if sigmas != sorted(sigmas):
        raise ValueError("sigma_list must be ascending")
    residuals = {s: release(params, s, dx_gamma=dx_gamma).residual for s in sigmas}
    vals = list(residuals.values())
    monotone = all(b <= a for a, b in zip(vals, vals[1:]))
    good = [s for s in sigmas if residuals[s] < target]
    if not good:
        raise TargetNotMet(f"no width reaches residual {target:g}: {residuals}")
    return ReleaseReport(good[0], residuals, monotone, target)


# --- pipeline -----------------------------------------------------------------------

@dataclass
class PipelineResult:
    params: SystemParams
    p_ee: float
    release_residual: float
    optimal_input: TwoPhotonPulse
    trap_result: TrapResult
    release_result: ReleaseResult
    artifacts: dict = field(default_factory=dict)

    def recovered_overlap(self) -> float:
        """Overlap of the photon left over after trapping with the mirrored release packet.

        Exact time reversal sends back the conjugated, mirrored packet that
        originally knocked the stored photon out; the photon paired with the
        EE at the end of the trap run is compared against it.
        """
        rel, tr = self.release_result, self.trap_result
        st, grid = tr.final_state, tr.grid
        amp_a, amp_c = ee_state(self.params)
        h = amp_a * st.phi_a + amp_c * st.phi_c
        # at the end of the release run the reversed process reaches the packet's mirror image
        s = tr.trajectory.meta["t_end"] - rel.trajectory.meta["t_end"]
        src = -(grid.x - s)
        target = np.conj(np.interp(src, rel.grid.x, rel.packet.real, left=0, right=0)
                         + 1j * np.interp(src, rel.grid.x, rel.packet.imag, left=0, right=0))
        num = abs(np.vdot(target, h)) ** 2
        den = np.vdot(target, target).real * np.vdot(h, h).real
        return float(num / den) if den > 0 else 0.0


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def optimal_trap_pipeline(params: SystemParams, sigma_release_gamma: float = 5.0,
                          dx_gamma: float = DEFAULT_DX_GAMMA, threshold: float = 0.05,
                          out_dir=None) -> PipelineResult:
    """Release with a Gaussian photon, time-reverse the outgoing pair, trap it again."""
    g = params.gamma_unit
    rel = release(params, sigma_release_gamma, dx_gamma=dx_gamma)
    out = extract_outgoing(rel.final_state, rel.grid, threshold)
    _, lead = _support(out.marginal(), rel.grid.x, rel.grid.dx)
    out = out.cropped(0.0, lead + 1.0 / g)
    opt = time_reverse(out)
    opt.descriptor.update({"kind": "time-reversed-release", "sigma_release_gamma": sigma_release_gamma})
    tr = trap(params, opt)
    res = PipelineResult(params, tr.p_ee, rel.residual, opt, tr, rel)
    if out_dir is not None:
        res.artifacts = write_pipeline_artifacts(Path(out_dir), params, res, out)
    return res


def write_pipeline_artifacts(out_dir: Path, params: SystemParams, res: PipelineResult,
                             outgoing: TwoPhotonPulse) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    g = params.gamma_unit
    files = {
        "release_outgoing.ee2p": (outgoing, res.release_result.trajectory.meta["t_end"]),
        "optimal_input.ee2p": (res.optimal_input, 0.0),
    }
    manifest = {"stages": [], "params": params.__dict__.copy()}
    for name, (pulse, t) in files.items():
        path = out_dir / name
        save_pulse(path, pulse, t)
        manifest["stages"].append({"file": name, "sha256": _sha256(path), "t": t, "m": pulse.grid.n_cells,
                                   "dx": pulse.grid.dx, "x0": pulse.grid.x0})
    manifest["release_residual"] = res.release_residual
    manifest["p_ee"] = res.p_ee
    manifest["t_steady_gamma"] = res.trap_result.t_steady * g if res.trap_result.t_steady else None
    (out_dir / "pipeline_manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return {k: str(out_dir / k) for k in list(files) + ["pipeline_manifest.json"]}


def bunching_weight(pulse: TwoPhotonPulse, band: float) -> float:
    """Fraction of the two-photon probability with ``|x1 - x2| < band``."""
    x = pulse.grid.x
    near = np.abs(x[:, None] - x[None, :]) < band
    w = np.abs(pulse.chi) ** 2
    return float(w[near].sum() / w.sum())


def reference_product(pulse: TwoPhotonPulse) -> TwoPhotonPulse:
    """Symmetrized product of two identical Gaussians with the same marginal mean and spread."""
    x, m = pulse.grid.x, pulse.marginal()
    m = m / m.sum()
    mu = float(np.sum(m * x))
    sd = float(np.sqrt(np.sum(m * (x - mu) ** 2)))
    f = np.exp(-((x - mu) ** 2) / (4 * sd ** 2))
    chi = np.outer(f, f)
    chi /= np.sqrt(np.vdot(chi, chi).real) * pulse.grid.dx
    return TwoPhotonPulse(chi.astype(complex), pulse.grid, {"kind": "reference-product", "sigma": sd})


# --- sweeps -------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepAxis:
    name: str
    lo: float
    hi: float
    n_points: int
    scale: str = "linear"

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a sweep axis needs at least two points")
        if self.scale not in ("linear", "log"):
            raise ValueError("scale must be 'linear' or 'log'")
        if self.scale == "log" and min(self.lo, self.hi) <= 0:
            raise ValueError("log axes need positive bounds")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.n_points)
        return np.linspace(self.lo, self.hi, self.n_points)


@dataclass(frozen=True)
class SweepSpec:
    """Two-axis sweep. ``kind`` is ``"vc-sigma"`` or ``"k-sigma"``.

    Rows are V_C/V_A (vc-sigma) or the carrier offset ``(k - w_B)/Gamma``
    (k-sigma); columns are ``sigma*Gamma``. J is re-solved at each point and
    cells with ``J > mask_fraction * (w_c + w_A)/2`` are masked.
    """

    kind: str
    rows: SweepAxis
    cols: SweepAxis
    omega_a: float = 1.0
    omega_c: float = 0.96
    v_a: float = 0.1
    vc_ratio: float = 0.5
    mask_fraction: float = 0.1
    dx_gamma: float = DEFAULT_DX_GAMMA
    center_gamma: float | None = None

    @classmethod
    def vc_sigma(cls, n: int = 17, **kw) -> "SweepSpec":
        return cls("vc-sigma", SweepAxis("vc_ratio", 0.1, 0.9, n), SweepAxis("sigma_gamma", 0.2, 5.0, n), **kw)

    @classmethod
    def k_sigma(cls, n: int = 17, k_span: float = 4.0, **kw) -> "SweepSpec":
        return cls("k-sigma", SweepAxis("k_offset_gamma", -k_span, k_span, n),
                   SweepAxis("sigma_gamma", 0.2, 5.0, n), **kw)

    def point_params(self, row: float) -> SystemParams:
        ratio = row if self.kind == "vc-sigma" else self.vc_ratio
        p = SystemParams(omega_c=self.omega_c, omega_a=self.omega_a, v_a=self.v_a, v_c=ratio * self.v_a)
        return p.replace(j_coupling=solve_j_for_ee(p))

    def j_limit(self) -> float:
        return self.mask_fraction * (self.omega_c + self.omega_a) / 2


@dataclass
class SweepResult:
    spec: SweepSpec
    row_values: np.ndarray
    col_values: np.ndarray
    p_ee: np.ndarray
    masked: np.ndarray
    reasons: list
    j_used: np.ndarray
    t_steady: np.ndarray
    overlays: dict = field(default_factory=dict)
    runtime: float = 0.0

    def argmax(self) -> tuple[float, float]:
        vals = np.where(self.masked, -np.inf, self.p_ee)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        return float(self.row_values[i]), float(self.col_values[j])

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.spec.rows.name, self.spec.cols.name, "p_ee", "masked", "mask_reason", "j_used",
                    "t_steady_gamma"])
        for i, r in enumerate(self.row_values):
            for j, c in enumerate(self.col_values):
                w.writerow([repr(float(r)), repr(float(c)), repr(float(self.p_ee[i, j])), int(self.masked[i, j]),
                            self.reasons[i][j], repr(float(self.j_used[i, j])), repr(float(self.t_steady[i, j]))])
        return buf.getvalue()

    def to_csv(self, path):
        Path(path).write_text(self.csv_text())


def _sweep_point(task):
    spec, row, col = task
    try:
        p = spec.point_params(row)
    except EETrapError as exc:
        return np.nan, True, exc.code, np.nan, np.nan
    if p.j_coupling > spec.j_limit():
        return np.nan, True, "J-limit", p.j_coupling, np.nan
    g = p.gamma_unit
    carrier = bright_carrier(p)
    if spec.kind == "k-sigma":
        carrier += row * g
    center = spec.center_gamma if spec.center_gamma is not None else default_center_gamma(col)
    try:
        pulse = gaussian_input(p, col, center, carrier, spec.dx_gamma)
        res = trap(p, pulse)
    except EETrapError as exc:
        return np.nan, True, exc.code, p.j_coupling, np.nan
    return res.p_ee, False, "", p.j_coupling, res.t_steady * g


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Evaluate every grid point; results are gathered in grid order, so output is deterministic."""
    rows, cols = spec.rows.values(), spec.cols.values()
    tasks = [(spec, float(r), float(c)) for r in rows for c in cols]
    workers = worker_count() if workers is None else workers
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_sweep_point, tasks))
    else:
        out = [_sweep_point(t) for t in tasks]
    shape = (len(rows), len(cols))
    res = SweepResult(
        spec, rows, cols,
        p_ee=np.array([o[0] for o in out], dtype=float).reshape(shape),
        masked=np.array([o[1] for o in out], dtype=bool).reshape(shape),
        reasons=[[out[i * len(cols) + j][2] for j in range(len(cols))] for i in range(len(rows))],
        j_used=np.array([o[3] for o in out], dtype=float).reshape(shape),
        t_steady=np.array([o[4] for o in out], dtype=float).reshape(shape),
        runtime=time.perf_counter() - t0,
    )
    if spec.kind == "k-sigma":
        p = spec.point_params(0.0)
        w_b, g = bright_frequency(p), p.gamma_unit
        res.overlays = {k: (v - w_b) / g for k, v in carrier_candidates(p).items()}
    return res


def sweep_vc_sigma(spec: SweepSpec | None = None, workers: int | None = None) -> SweepResult:
    return run_sweep(spec or SweepSpec.vc_sigma(), workers)


def sweep_k_sigma(spec: SweepSpec | None = None, workers: int | None = None) -> SweepResult:
    return run_sweep(spec or SweepSpec.k_sigma(), workers)


# --- loss comparison -----------------------------------------------------------------

@dataclass
class LossBranch:
    ratio: float
    full: Trajectory
    cavity: Trajectory
    full_rate: float
    cavity_rate: float
    predicted_rate: float
    full_peak: float
    cavity_peak: float


def predicted_ee_loss_rate(params: SystemParams) -> float:
    """Population decay of the trapped EE from cavity loss alone: ``2 G'_C V_A^2/(V_A^2+V_C^2)``."""
    p = params
    return 2 * p.gamma_prime_c * p.v_a ** 2 / (p.v_a ** 2 + p.v_c ** 2)


def loss_comparison(params: SystemParams, ratios=(0.05, 0.1, 0.2), sigma_gamma: float = 1.0,
                    dx_gamma: float = DEFAULT_DX_GAMMA, fit_from_gamma: float = 20.0,
                    fit_to_gamma: float = 50.0) -> list[LossBranch]:
    """Full cavity-atom system versus the bare cavity, both with cavity loss ``ratio * gamma_C``.

    Both branches get the same two-photon pulse (same absolute carrier). The
    full branch's decay is fitted on ``P_EE`` between ``fit_from_gamma`` and
    ``fit_to_gamma`` after the pulse centroid arrives; the cavity branch is
    fitted on its stored population once the pulse has passed. Peaks are of
    the stored population (at least one excitation held by the emitters).
    """
    g = params.gamma_unit
    frame = default_frame(params)
    center = default_center_gamma(sigma_gamma)
    base = gaussian_input(params, sigma_gamma, center, dx_gamma=dx_gamma)
    t_arrival = -center / g
    t_final = t_arrival + fit_to_gamma / g
    grid = GridSpec.spanning(base.grid.x0, (center + 6 * sigma_gamma) / g + t_final + 1.0 / g, base.grid.dx)
    pulse = base.regrid(grid)
    out = []
    for ratio in ratios:
        lossy = params.replace(gamma_prime_c=ratio * params.gamma_c)
        cav = lossy.replace(v_a=0.0, j_coupling=0.0)
        full, _ = evolve_two_photon(lossy, TwoPhotonState.from_pulse(pulse), grid, t_final, frame=frame)
        bare, _ = evolve_two_photon(cav, TwoPhotonState.from_pulse(pulse), grid, t_final, frame=frame)
        win = full.window(t_arrival + fit_from_gamma / g, t_final)
        full_rate = fit_exponential_rate(full.t[win], full["p_ee"][win])
        stored = bare["stored"]
        cwin = (bare.t >= t_arrival + 4 * sigma_gamma / g) & (stored > 1e-8 * stored.max())
        cav_rate = fit_exponential_rate(bare.t[cwin], stored[cwin])
        out.append(LossBranch(ratio, full, bare, full_rate, cav_rate, predicted_ee_loss_rate(lossy),
                              float(full["stored"].max()), float(stored.max())))
    return out
