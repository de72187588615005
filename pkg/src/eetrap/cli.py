"""``eetrap`` command-line front end.

Subcommands:

* ``spectrum CONFIG``: bound-state residuals, single- and two-excitation
  levels; prints a table and writes ``spectrum.csv``.
* ``run CONFIG``: runs the configured experiment, writes CSV/EE2P artifacts and
  ``manifest.json`` (``--dry-run`` writes only the manifest).
* ``verify``: fast numerical self-checks.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 simulation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import protocols as pr
from .coherent import DriveEnvelope, FockSpaceSpec, build_generator, evolve_master
from .config import RunConfig, build_params, emit_toml, load_config, parse_config
from .errors import ConfigError, EETrapError
from .gridio import save_pulse
from .model import (SystemParams, ThreeModeParams, bright_frequency, ee_condition_residual, ee_frequency,
                    ee_frequency_closed_forms, ee_state, single_excitation_spectrum, three_mode_ee_residual,
                    three_mode_spectrum, two_excitation_levels)
from .onephoton import classical_two_cavity, post_pulse_ratio, scatter_pulse
from .trajectory import Trajectory
from .verify import run_all
from .waveguide import GridSpec, PulseSpec, default_frame

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3
MANIFEST = "manifest.json"

SINGLE_COLUMNS = ["t_gamma", "pop_atom", "pop_cavity", "pop_waveguide", "stored", "p_ee", "norm"]
CLASSICAL_COLUMNS = ["t_gamma", "intensity_1", "intensity_2", "stored", "pop_waveguide", "norm"]
TRAJ_COLUMNS = ["t_gamma", "p_atom", "p_cav", "p_wg2", "e_ac2", "e_2c2", "p_ee", "stored", "norm"]


class SimulationFailure(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# --- derived values -------------------------------------------------------------

def _c(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def derived_values(params) -> dict:
    """Everything computed from the system block that a reader needs to reproduce a run."""
    if isinstance(params, ThreeModeParams):
        spec = three_mode_spectrum(params)
        return {
            "kind": "three-mode",
            "params": dict(params.__dict__),
            "j_coupling": params.j_coupling,
            "g_coupling": params.g_coupling,
            "ee_residual": float(three_mode_ee_residual(params)),
            "gamma_unit": params.gamma_unit,
            "eigenvalues": [_c(z) for z in spec.eigenvalues],
            "min_abs_imag": float(np.min(np.abs(spec.eigenvalues.imag))),
        }
    spec = single_excitation_spectrum(params)
    out = {
        "kind": "cavity-atom",
        "params": dict(params.__dict__),
        "j_coupling": params.j_coupling,
        "ee_residual": float(ee_condition_residual(params)),
        "gamma_unit": params.gamma_unit,
        # amplitude decay rates used by the dynamics (2 pi V^2 each); the bright mode decays at their sum
        "gamma_a": params.gamma_a,
        "gamma_c": params.gamma_c,
        "gamma_bright": params.gamma_a + params.gamma_c,
        "omega_ee1": float(ee_frequency(params)),
        "omega_b1": float(bright_frequency(params)),
        "eigenvalues": [_c(z) for z in spec.eigenvalues],
        "two_excitation": two_excitation_levels(params),
    }
    if params.v_a > 0 and params.v_c > 0:
        amp_a, amp_c = ee_state(params)
        out["ee_closed_forms"] = list(ee_frequency_closed_forms(params))
        out["ee_amplitudes"] = [amp_a, amp_c]
        out["ee_balance"] = amp_a ** 2 / amp_c ** 2
        out["ee_balance_expected"] = (params.v_c / params.v_a) ** 2
    return out


def resolve(cfg: RunConfig):
    """System parameters and derived values; parameter errors count as configuration errors."""
    try:
        params = build_params(cfg)
        derived = derived_values(params)
    except ConfigError:
        raise
    except (EETrapError, ValueError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        raise ConfigError(f"{cfg.source or '<config>'}: [system]: {code}: {exc}") from None
    cfg.derived = derived
    return params


# --- spectrum -------------------------------------------------------------------------

def spectrum_rows(derived: dict) -> list[tuple[str, str]]:
    rows = [("J", f"{derived['j_coupling']:.9g}")]
    if derived["kind"] == "three-mode":
        rows.append(("g", f"{derived['g_coupling']:.9g}"))
    rows.append(("EE residual", f"{derived['ee_residual']:.3e}"))
    rows.append(("Gamma", f"{derived['gamma_unit']:.9g}"))
    if derived["kind"] != "three-mode":
        rows.append(("gamma_A, gamma_C", f"{derived['gamma_a']:.9g}, {derived['gamma_c']:.9g}"))
        rows.append(("omega_EE(1)", f"{derived['omega_ee1']:.9g}"))
        rows.append(("omega_B(1)", f"{derived['omega_b1']:.9g}"))
        for k, v in derived["two_excitation"].items():
            rows.append((k, f"{v:.9g}"))
        if "ee_balance" in derived:
            rows.append(("EE |A|^2/|C|^2", f"{derived['ee_balance']:.9g}"))
            rows.append(("(V_C/V_A)^2", f"{derived['ee_balance_expected']:.9g}"))
    for i, (re, im) in enumerate(derived["eigenvalues"]):
        rows.append((f"lambda_{i}", f"{re:.9g} {im:+.3e}i"))
    return rows


def spectrum_csv(derived: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for i, (re, im) in enumerate(derived["eigenvalues"]):
        w.writerow([i, repr(re), repr(im)])
    return buf.getvalue()


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    resolve(cfg)
    for name, val in spectrum_rows(cfg.derived):
        print(f"{name:<18} {val}")
    out = Path(args.out or cfg.get("output", "directory"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "spectrum.csv").write_text(spectrum_csv(cfg.derived))
    return EXIT_OK


# --- experiment runners ------------------------------------------------------------------
# each returns (summary dict, {file name: writer callable})

def _carrier(cfg: RunConfig, params: SystemParams) -> float:
    ref = cfg.get("pulse", "carrier_ref")
    frame = default_frame(params)
    base = {"bright": bright_frequency(params) - frame, "ee": ee_frequency(params) - frame, "frame": 0.0}[ref]
    return base + cfg.get("pulse", "carrier_offset_gamma") * params.gamma_unit


def _need_cavity_atom(params, exp: str) -> SystemParams:
    if not isinstance(params, SystemParams):
        raise ConfigError(f"experiment '{exp}' needs a cavity-atom or two-cavity system")
    return params


def _csv_writer(traj: Trajectory, names: list[str]):
    return lambda path: traj.to_csv(path, names)


def run_linear(cfg: RunConfig, params) -> tuple[dict, dict]:
    p = _need_cavity_atom(params, "linear")
    g = p.gamma_unit
    sigma = cfg.get("pulse", "sigma_gamma")
    center = cfg.get("pulse", "center_gamma", pr.default_center_gamma(sigma))
    t_after = cfg.get("numerics", "t_after_gamma", 20.0)
    t_final = cfg.get("numerics", "t_final_gamma", -center + 6 * sigma + t_after)
    dx = cfg.get("grid", "dx_gamma") / g
    x_min = cfg.get("grid", "x_min_gamma", center - 6 * sigma) / g
    x_max = cfg.get("grid", "x_max_gamma", center + 6 * sigma + t_final + 1.0) / g
    grid = GridSpec.spanning(x_min, x_max, dx)
    pulse = PulseSpec(center / g, sigma / g, _carrier(cfg, p))
    every = cfg.get("numerics", "sample_every", max(1, int(round(0.05 / (g * dx)))))
    two_cavity = cfg.system_kind == "two-cavity"
    run = classical_two_cavity if two_cavity else scatter_pulse
    traj = run(p, pulse, grid, t_final / g, sample_every=every)
    t_post = (-center + 5 * sigma) / g
    summary = {"post_pulse_ratio": post_pulse_ratio(traj, t_post), "t_post_gamma": t_post * g,
               "peak_stored": float(traj["stored"].max()), "final_p_ee": traj.final("p_ee"),
               "grid": {"n_cells": grid.n_cells, "dx": grid.dx, "x0": grid.x0}}
    names = CLASSICAL_COLUMNS if two_cavity else SINGLE_COLUMNS
    return summary, {"trajectory.csv": _csv_writer(traj, names)}


def run_coherent_exp(cfg: RunConfig, params) -> tuple[dict, dict]:
    g = params.gamma_unit
    n_mean = cfg.get("drive", "mean_photons")
    width = cfg.get("drive", "width_gamma") / g
    three = isinstance(params, ThreeModeParams)
    n_max = cfg.get("drive", "n_max")
    fock = FockSpaceSpec(n_max, 2 if three else 1) if n_max else FockSpaceSpec.for_mean(n_mean, 2 if three else 1)
    gen = build_generator(params, fock)
    drive = DriveEnvelope(n_mean, width, 6 * width, cfg.get("drive", "detuning_gamma") * g)
    t_after = cfg.get("numerics", "t_after_gamma", 60.0)
    t_final = cfg.get("numerics", "t_final_gamma", (12 * width + t_after / g) * g) / g
    traj = evolve_master(gen, drive, t_final, dt=cfg.get("numerics", "dt"),
                         sample_every=cfg.get("numerics", "sample_every"))
    traj.meta.pop("rho_final", None)
    names = ["t_gamma"] + list(traj.columns)
    t_late = traj.t[-1] - 10.0 / g
    late = traj.t >= t_late
    summary = {"n_max": fock.n_max, "dim": fock.dim, "frame": gen.frame, "dt": traj.meta["dt"],
               "final": {k: float(v[-1]) for k, v in traj.columns.items()},
               "late_slope_gamma": {k: float(np.max(np.abs(np.diff(traj[k][late]) / np.diff(traj.t[late]))) / g)
                                    for k in gen.ee_vectors}}
    if not three and traj.final("n_cavity") > 0:
        summary["atom_cavity_ratio"] = traj.final("p_atom") / traj.final("n_cavity")
    return summary, {"trajectory.csv": _csv_writer(traj, names)}


def _trap_kwargs(cfg: RunConfig, g: float) -> dict:
    kw = {"window_gamma": cfg.get("numerics", "steady_window_gamma"),
          "rel_tol": cfg.get("numerics", "steady_rel_tol"),
          "settle_gamma": cfg.get("numerics", "settle_gamma"),
          "sample_every": cfg.get("numerics", "sample_every")}
    if cfg.get("numerics", "t_final_gamma") is not None:
        kw["t_max"] = cfg.get("numerics", "t_final_gamma") / g
    return kw


def run_trap(cfg: RunConfig, params) -> tuple[dict, dict]:
    p = _need_cavity_atom(params, "trap")
    g = p.gamma_unit
    pulse = pr.gaussian_input(p, cfg.get("pulse", "sigma_gamma"), cfg.get("pulse", "center_gamma"),
                              _carrier(cfg, p), cfg.get("grid", "dx_gamma"))
    res = pr.trap(p, pulse, **_trap_kwargs(cfg, g))
    summary = {"p_ee": res.p_ee, "t_steady_gamma": res.t_steady * g, "t_arrival_gamma": res.t_arrival * g,
               "grid": {"n_cells": res.grid.n_cells, "dx": res.grid.dx, "x0": res.grid.x0}}
    files = {"trajectory.csv": _csv_writer(res.trajectory, TRAJ_COLUMNS),
             "input.ee2p": lambda path: save_pulse(path, pulse, 0.0)}
    return summary, files


def run_release(cfg: RunConfig, params) -> tuple[dict, dict]:
    p = _need_cavity_atom(params, "release")
    exp = cfg.sections["experiment"]
    sigma_list = exp.get("sigma_list")
    files, summary = {}, {}
    if sigma_list:
        rep = pr.optimize_release_pulse(p, sigma_list, exp.get("target_residual", 0.03), cfg.get("grid", "dx_gamma"))
        summary.update({"best_sigma_gamma": rep.best_sigma, "monotone": rep.monotone,
                        "residuals": {repr(k): v for k, v in rep.residuals.items()}})
    res = pr.release(p, cfg.get("pulse", "sigma_gamma"), cfg.get("pulse", "center_gamma"), _carrier(cfg, p),
                     cfg.get("grid", "dx_gamma"), cfg.get("numerics", "t_after_gamma", 30.0))
    summary.update({"residual": res.residual, "sigma_gamma": res.sigma_gamma,
                    "grid": {"n_cells": res.grid.n_cells, "dx": res.grid.dx, "x0": res.grid.x0}})
    files["trajectory.csv"] = _csv_writer(res.trajectory, TRAJ_COLUMNS)
    return summary, files


def run_pipeline(cfg: RunConfig, params, out: Path) -> tuple[dict, dict]:
    p = _need_cavity_atom(params, "pipeline")
    g = p.gamma_unit
    sigma = cfg.sections["experiment"].get("sigma_release_gamma", 5.0)
    res = pr.optimal_trap_pipeline(p, sigma, cfg.get("grid", "dx_gamma"),
                                   cfg.get("numerics", "extraction_threshold"), out_dir=out)
    band = cfg.get("pulse", "sigma_gamma") / g
    summary = {"p_ee": res.p_ee, "release_residual": res.release_residual,
               "t_steady_gamma": res.trap_result.t_steady * g, "recovered_overlap": res.recovered_overlap(),
               "bunching": {"band_gamma": band * g, "optimal": pr.bunching_weight(res.optimal_input, band),
                            "product": pr.bunching_weight(pr.reference_product(res.optimal_input), band)}}
    files = {"release_trajectory.csv": _csv_writer(res.release_result.trajectory, TRAJ_COLUMNS),
             "trap_trajectory.csv": _csv_writer(res.trap_result.trajectory, TRAJ_COLUMNS)}
    # the EE2P grids and the stage manifest are already on disk
    pre = {Path(v).name: None for v in res.artifacts.values()}
    return summary, {**pre, **files}


def _sweep_spec(cfg: RunConfig, kind: str) -> pr.SweepSpec:
    sw = cfg.sections["sweep"]
    sysd = cfg.sections["system"]
    n = int(sw.get("n_points", 17))
    base = pr.SweepSpec.vc_sigma(n) if kind == "vc-sigma" else pr.SweepSpec.k_sigma(n)
    rows = pr.SweepAxis(base.rows.name, sw.get("rows_min", base.rows.lo), sw.get("rows_max", base.rows.hi), n)
    cols = pr.SweepAxis(base.cols.name, sw.get("cols_min", base.cols.lo), sw.get("cols_max", base.cols.hi), n,
                        sw.get("cols_scale", "linear"))
    return pr.SweepSpec(kind, rows, cols, omega_a=sysd.get("omega_a", 1.0), omega_c=sysd.get("omega_c", 0.96),
                        v_a=sysd.get("v_a", 0.1), vc_ratio=sw.get("vc_ratio", 0.5),
                        dx_gamma=cfg.get("grid", "dx_gamma"), center_gamma=cfg.get("pulse", "center_gamma"))


def run_sweep_exp(cfg: RunConfig, params, kind: str) -> tuple[dict, dict]:
    if cfg.system_kind != "cavity-atom":
        raise ConfigError("sweeps need a cavity-atom system")
    try:
        spec = _sweep_spec(cfg, kind)
    except ValueError as exc:
        raise ConfigError(f"[sweep]: {exc}") from None
    res = pr.run_sweep(spec)
    r, c = res.argmax()
    summary = {"argmax": {spec.rows.name: r, spec.cols.name: c}, "n_masked": int(res.masked.sum()),
               "j_limit": spec.j_limit(), "overlays": res.overlays, "workers": pr.worker_count()}
    return summary, {"sweep.csv": res.to_csv}


def run_loss(cfg: RunConfig, params) -> tuple[dict, dict]:
    p = _need_cavity_atom(params, "loss-compare")
    g = p.gamma_unit
    ratios = cfg.sections["experiment"].get("loss_ratios", [0.05, 0.1, 0.2])
    branches = pr.loss_comparison(p, ratios, cfg.get("pulse", "sigma_gamma"), cfg.get("grid", "dx_gamma"))
    files, rows = {}, []
    for b in branches:
        tag = f"{b.ratio:g}"
        files[f"full_{tag}.csv"] = _csv_writer(b.full, TRAJ_COLUMNS)
        files[f"cavity_{tag}.csv"] = _csv_writer(b.cavity, TRAJ_COLUMNS)
        rows.append({"ratio": b.ratio, "full_rate_gamma": b.full_rate / g, "cavity_rate_gamma": b.cavity_rate / g,
                     "predicted_rate_gamma": b.predicted_rate / g, "full_peak": b.full_peak,
                     "cavity_peak": b.cavity_peak})

    def write_summary(path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(float(v)) for k, v in row.items()})

    files["loss_summary.csv"] = write_summary
    return {"branches": rows}, files


def execute(cfg: RunConfig, params, out: Path) -> tuple[dict, dict]:
    exp = cfg.experiment
    if exp == "linear":
        return run_linear(cfg, params)
    if exp == "coherent":
        return run_coherent_exp(cfg, params)
    if exp == "trap":
        return run_trap(cfg, params)
    if exp == "release":
        return run_release(cfg, params)
    if exp == "pipeline":
        return run_pipeline(cfg, params, out)
    if exp in ("sweep-vc-sigma", "sweep-k-sigma"):
        return run_sweep_exp(cfg, params, exp[len("sweep-"):])
    return run_loss(cfg, params)


# --- run ------------------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def build_manifest(cfg: RunConfig, status: str, **extra) -> dict:
    return _jsonable({"eetrap_version": __version__, "status": status, "source": cfg.source,
                      "experiment": cfg.experiment, "config": cfg.to_dict(), "derived": cfg.derived, **extra})


def config_from_manifest(manifest: dict) -> RunConfig:
    """Re-parse the resolved configuration stored in a run manifest."""
    return parse_config(emit_toml(manifest["config"]), "<manifest>")


def _write_manifest(out: Path, manifest: dict) -> Path:
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _cleanup(out: Path, created_dir: bool, before: set):
    if created_dir:
        shutil.rmtree(out, ignore_errors=True)
        return
    for path in out.iterdir():
        if path.name not in before:
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            else:
                path.unlink(missing_ok=True)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    params = resolve(cfg)
    if args.out:
        cfg.sections["output"]["directory"] = str(args.out)
    out = Path(cfg.get("output", "directory"))
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    before = {p.name for p in out.iterdir()}
    if args.dry_run:
        path = _write_manifest(out, build_manifest(cfg, "dry-run", artifacts={}, timing={}))
        print(f"dry run: manifest written to {path}")
        return EXIT_OK
    t0 = time.perf_counter()
    try:
        try:
            summary, writers = execute(cfg, params, out)
        except ConfigError:
            raise
        except EETrapError as exc:
            raise SimulationFailure(exc.code, str(exc)) from None
        except (ValueError, ArithmeticError) as exc:
            raise SimulationFailure(type(exc).__name__, str(exc)) from None
        artifacts = {}
        for name, write in writers.items():
            path = out / name
            if write is not None:
                write(path)
            artifacts[name] = _sha256(path)
        elapsed = time.perf_counter() - t0
        manifest = build_manifest(cfg, "ok", results=summary, artifacts=artifacts,
                                  timing={"seconds": round(elapsed, 3)})
        _write_manifest(out, manifest)
    except (ConfigError, SimulationFailure, KeyboardInterrupt):
        _cleanup(out, created, before)
        raise
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    print(f"artifacts written to {out}")
    return EXIT_OK


# --- verify ---------------------------------------------------------------------------------

def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    checks = run_all(corrupt_sign=args.corrupt_sign)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.value:.3e} < {c.bound:.0e}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_VERIFY if failed else EXIT_OK


# --- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eetrap", description="Embedded-eigenstate photon trapping simulator.")
    ap.add_argument("--version", action="version", version=f"eetrap {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("spectrum", help="print EE residuals and excitation levels")
    sp.add_argument("config")
    sp.add_argument("--out", help="directory for spectrum.csv (default: [output].directory)")
    rp = sub.add_parser("run", help="run the configured experiment")
    rp.add_argument("config")
    rp.add_argument("--out", help="override [output].directory")
    rp.add_argument("--dry-run", action="store_true", help="resolve the config and write the manifest only")
    vp = sub.add_parser("verify", help="run the fast self-checks")
    vp.add_argument("--corrupt-sign", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"spectrum": cmd_spectrum, "run": cmd_run, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFailure as exc:
        print(f"simulation error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
