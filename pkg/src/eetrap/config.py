"""Run configuration: TOML files with fixed sections and typed keys.

Keys ending in ``_gamma`` are measured in units of the bright-mode scale
``Gamma`` (lengths and times in ``1/Gamma``, frequency offsets in
``Gamma``); every other physical value is relative to the reference
frequency. Unknown sections or keys are rejected before anything runs.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .model import SystemParams, ThreeModeParams, solve_g_for_ee, solve_j_for_ee

EXPERIMENTS = ("linear", "coherent", "trap", "release", "pipeline", "sweep-vc-sigma", "sweep-k-sigma",
               "loss-compare")
SYSTEM_KINDS = ("cavity-atom", "two-cavity", "three-mode")

_NUM = (int, float)
SCHEMA: dict[str, dict[str, tuple]] = {
    "system": {
        "kind": (str,), "omega_c": _NUM, "omega_a": _NUM, "omega_1": _NUM, "omega_2": _NUM,
        "j_coupling": _NUM, "g_coupling": _NUM, "v_c": _NUM, "v_a": _NUM, "v_1": _NUM, "v_2": _NUM,
        "gamma_prime_c": _NUM, "gamma_prime_a": _NUM, "gamma_prime_1": _NUM, "gamma_prime_2": _NUM,
        "solve_j": (bool,), "solve_g": (bool,),
    },
    "grid": {"dx_gamma": _NUM, "dx": _NUM, "x_min_gamma": _NUM, "x_max_gamma": _NUM},
    "pulse": {"center_gamma": _NUM, "sigma_gamma": _NUM, "carrier_ref": (str,), "carrier_offset_gamma": _NUM},
    "drive": {"mean_photons": _NUM, "width_gamma": _NUM, "n_max": (int,), "detuning_gamma": _NUM},
    "experiment": {"kind": (str,), "loss_ratios": (list,), "sigma_list": (list,), "sigma_release_gamma": _NUM,
                   "target_residual": _NUM},
    "sweep": {"n_points": (int,), "rows_min": _NUM, "rows_max": _NUM, "cols_min": _NUM, "cols_max": _NUM,
              "cols_scale": (str,), "vc_ratio": _NUM},
    "numerics": {"t_final_gamma": _NUM, "t_after_gamma": _NUM, "sample_every": (int,),
                 "steady_window_gamma": _NUM, "steady_rel_tol": _NUM, "settle_gamma": _NUM,
                 "extraction_threshold": _NUM, "dt": _NUM},
    "output": {"directory": (str,), "formats": (list,)},
}

DEFAULTS = {
    "grid": {"dx_gamma": 0.05},
    "pulse": {"sigma_gamma": 1.0, "carrier_ref": "bright", "carrier_offset_gamma": 0.0},
    "drive": {"mean_photons": 2.0, "width_gamma": 1.0, "detuning_gamma": 0.0},
    "numerics": {"steady_window_gamma": 2.0, "steady_rel_tol": 1e-4, "settle_gamma": 10.0,
                 "extraction_threshold": 0.05},
    "output": {"directory": "out", "formats": ["csv"]},
}


@dataclass
class RunConfig:
    sections: dict
    source: str | None = None
    derived: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def experiment(self) -> str:
        return self.sections["experiment"]["kind"]

    @property
    def system_kind(self) -> str:
        return self.sections["system"]["kind"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.sections)


def _fail(msg: str):
    raise ConfigError(msg)


def validate(raw: dict, source: str | None = None) -> RunConfig:
    where = f"{source}: " if source else ""
    sections = {}
    for name, body in raw.items():
        if name not in SCHEMA:
            _fail(f"{where}unknown section [{name}]")
        if not isinstance(body, dict):
            _fail(f"{where}[{name}] must be a table")
        clean = {}
        for key, val in body.items():
            if key not in SCHEMA[name]:
                _fail(f"{where}unknown key '{key}' in [{name}]")
            types = SCHEMA[name][key]
            if isinstance(val, bool) and bool not in types:
                _fail(f"{where}[{name}].{key} must be a number, got a boolean")
            if not isinstance(val, types):
                _fail(f"{where}[{name}].{key} has type {type(val).__name__}")
            if isinstance(val, float) and not math.isfinite(val):
                _fail(f"{where}[{name}].{key} must be finite")
            clean[key] = float(val) if types is _NUM else val
        sections[name] = clean
    for name in ("system", "experiment"):
        if name not in sections:
            _fail(f"{where}missing section [{name}]")
    kind = sections["system"].get("kind", "cavity-atom")
    if kind not in SYSTEM_KINDS:
        _fail(f"{where}[system].kind must be one of {SYSTEM_KINDS}")
    sections["system"]["kind"] = kind
    exp = sections["experiment"].get("kind")
    if exp not in EXPERIMENTS:
        _fail(f"{where}[experiment].kind must be one of {EXPERIMENTS}")
    for name, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(sections.get(name, {}))
        sections[name] = merged
    for name in ("sweep", "numerics", "drive"):
        sections.setdefault(name, {})
    if sections["pulse"]["carrier_ref"] not in ("bright", "ee", "frame"):
        _fail(f"{where}[pulse].carrier_ref must be 'bright', 'ee' or 'frame'")
    for key in ("dx_gamma", "dx", "sigma_gamma", "width_gamma"):
        for sec in ("grid", "pulse", "drive"):
            v = sections[sec].get(key)
            if v is not None and not v > 0:
                _fail(f"{where}[{sec}].{key} must be positive")
    for key in ("loss_ratios", "sigma_list"):
        seq = sections["experiment"].get(key)
        if seq is not None and not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in seq):
            _fail(f"{where}[experiment].{key} must be a list of numbers")
        if seq is not None:
            sections["experiment"][key] = [float(v) for v in seq]
    cfg = RunConfig(sections, source)
    _check_system(cfg, where)
    return cfg


_SYSTEM_KEYS = {
    "cavity-atom": {"omega_c", "omega_a", "j_coupling", "v_c", "v_a", "gamma_prime_c", "gamma_prime_a", "solve_j"},
    "two-cavity": {"omega_1", "omega_2", "j_coupling", "v_1", "v_2", "gamma_prime_1", "gamma_prime_2", "solve_j"},
    "three-mode": {"omega_1", "omega_2", "omega_a", "j_coupling", "g_coupling", "v_1", "v_2", "gamma_prime_1",
                   "gamma_prime_2", "gamma_prime_a", "solve_g"},
}


def _check_system(cfg: RunConfig, where: str):
    sysd = cfg.sections["system"]
    allowed = _SYSTEM_KEYS[sysd["kind"]] | {"kind"}
    extra = sorted(set(sysd) - allowed)
    if extra:
        _fail(f"{where}[system] keys {extra} do not apply to a {sysd['kind']} system")


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source or '<config>'}: {exc}") from None
    return validate(raw, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def build_params(cfg: RunConfig) -> SystemParams | ThreeModeParams:
    """System parameters with J (or g) solved from the bound-state condition when requested."""
    s = dict(cfg.sections["system"])
    kind = s.pop("kind")
    solve_j = s.pop("solve_j", False)
    solve_g = s.pop("solve_g", False)
    if solve_j:
        s.setdefault("j_coupling", 0.0)
    try:
        if kind == "cavity-atom":
            p = SystemParams(**s)
        elif kind == "two-cavity":
            p = SystemParams.two_cavity(**s)
        else:
            p = ThreeModeParams(**{"g_coupling": 0.0, **s})
    except TypeError as exc:
        raise ConfigError(f"[system]: {exc}") from None
    if solve_j and isinstance(p, SystemParams):
        p = p.replace(j_coupling=solve_j_for_ee(p))
    if solve_g and isinstance(p, ThreeModeParams):
        p = p.replace(g_coupling=solve_g_for_ee(p))
    return p


# --- emitter ----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__}")


def emit_toml(sections: dict) -> str:
    """Serialize the flat section/key layout used by run configs."""
    out = []
    for name, body in sections.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in body.items())
        out.append("")
    return "\n".join(out)
