"""Run configuration: YAML file -> validated :class:`RunConfig`."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..exact import MAX_SPINS, sector_dimension
from ..model import ModelParams, RampSchedule

BACKENDS = ("exact", "mps", "ipeps")
DEFAULT_T_R = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)

_TOP = {"backend", "lattice", "ramp", "params", "D", "D_ref", "D_max", "chi", "measure",
        "delta_budget", "output", "seed", "dmrg_sweeps"}
_RAMP = {"shape", "t_r", "s_c"}
_MEASURE = {"s", "edges", "R_max", "energy"}
_PARAMS = {"J_r", "G_r"}


class ConfigError(ValueError):
    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings))


@dataclass(frozen=True)
class Finding:
    level: str          # "error" | "warning"
    key: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.key}: {self.message}"


@dataclass(frozen=True)
class RunConfig:
    backend: str
    rows: int = 0                       # 0 x 0 means the infinite lattice
    cols: int = 0
    shape: str = "smooth"
    t_r: tuple = DEFAULT_T_R
    s_c: float = 0.45
    J_r: float = 1.0
    G_r: float = 1.5
    D: int = 32                         # MPS bond dimension
    D_ref: int = 0                      # DMRG reference; 0 means 2 D
    D_max: int = 4                      # iPEPS bond dimension
    chi: int = 0                        # 0 means the iPEPS default
    s_points: tuple = (0.4, 0.45, 0.5)
    edges: bool = False
    R_max: int = 8
    energy: bool = True
    delta_budget: float = 0.1
    output: str = "runs/out"
    seed: int = 0
    dmrg_sweeps: int = 30
    source: dict = field(default=None, compare=False, repr=False)

    @property
    def infinite(self) -> bool:
        return self.backend == "ipeps"

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.J_r, self.G_r)

    def schedule(self, t_r: float) -> RampSchedule:
        return RampSchedule(t_r, self.shape, self.s_c)

    @property
    def d_ref(self) -> int:
        return self.D_ref or 2 * self.D

    def digest(self) -> str:
        d = asdict(self)
        d.pop("source")
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def load_yaml(path) -> dict:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError([Finding("error", "<root>", "config must be a mapping")])
    return data


def _unknown(d, allowed, where, out):
    for k in d:
        if k not in allowed:
            out.append(Finding("error", f"{where}{k}", "unknown key"))


def validate(raw) -> list:
    """Findings for a raw config mapping (or a path to a YAML file); empty means valid."""
    if isinstance(raw, (str, Path)):
        raw = load_yaml(raw)
    out = []
    _unknown(raw, _TOP, "", out)
    backend = raw.get("backend")
    if backend not in BACKENDS:
        out.append(Finding("error", "backend", f"must be one of {', '.join(BACKENDS)}"))
    ramp = raw.get("ramp", {}) or {}
    _unknown(ramp, _RAMP, "ramp.", out)
    t_rs = ramp.get("t_r", list(DEFAULT_T_R))
    if not isinstance(t_rs, list):
        t_rs = [t_rs]
    if not t_rs:
        out.append(Finding("error", "ramp.t_r", "empty list of ramp times"))
    for t in t_rs:
        if not isinstance(t, (int, float)) or t <= 0:
            out.append(Finding("error", "ramp.t_r", f"ramp time {t!r} must be positive"))
    s_c = ramp.get("s_c", 0.45)
    if not isinstance(s_c, (int, float)) or not 0 < s_c < 1:
        out.append(Finding("error", "ramp.s_c", f"s_c={s_c!r} must lie in (0, 1)"))
    if ramp.get("shape", "smooth") not in ("smooth", "linear"):
        out.append(Finding("error", "ramp.shape", "must be 'smooth' or 'linear'"))
    _unknown(raw.get("params", {}) or {}, _PARAMS, "params.", out)
    meas = raw.get("measure", {}) or {}
    _unknown(meas, _MEASURE, "measure.", out)
    for s in meas.get("s", []):
        if not isinstance(s, (int, float)) or not 0 <= s <= 1:
            out.append(Finding("error", "measure.s", f"s={s!r} outside [0, 1]"))
    lat = raw.get("lattice", "infinite" if backend == "ipeps" else None)
    if backend in ("exact", "mps"):
        if not (isinstance(lat, dict) and set(lat) == {"rows", "cols"}):
            out.append(Finding("error", "lattice", "finite backends need {rows, cols}"))
        else:
            n = lat["rows"] * lat["cols"]
            if min(lat["rows"], lat["cols"]) < 1 or n < 2:
                out.append(Finding("error", "lattice", "need at least two sites"))
            elif backend == "exact" and n > MAX_SPINS:
                out.append(Finding(
                    "error", "lattice",
                    f"exact backend is capped at {MAX_SPINS} spins; {n} spins need a sector "
                    f"of dimension {sector_dimension(n, n % 2)}"))
    elif backend == "ipeps" and lat != "infinite":
        out.append(Finding("error", "lattice", "the ipeps backend runs on the infinite lattice"))
    for k in ("D", "D_ref", "D_max", "chi", "R_max"):
        v = raw.get(k, meas.get(k) if k == "R_max" else None)
        if v is not None and (not isinstance(v, int) or v < (0 if k in ("D_ref", "chi") else 1)):
            out.append(Finding("error", k, f"{v!r} must be a positive integer"))
    b = raw.get("delta_budget", 0.1)
    if not isinstance(b, (int, float)) or b <= 0:
        out.append(Finding("error", "delta_budget", "must be positive"))
    if backend == "exact" and "D" in raw:
        out.append(Finding("warning", "D", "ignored by the exact backend"))
    return out


def from_dict(raw: dict, source=None) -> RunConfig:
    findings = [f for f in validate(raw) if f.level == "error"]
    if findings:
        raise ConfigError(findings)
    ramp = raw.get("ramp", {}) or {}
    meas = raw.get("measure", {}) or {}
    params = raw.get("params", {}) or {}
    t_rs = ramp.get("t_r", list(DEFAULT_T_R))
    t_rs = t_rs if isinstance(t_rs, list) else [t_rs]
    lat = raw.get("lattice")
    rows, cols = (lat["rows"], lat["cols"]) if isinstance(lat, dict) else (0, 0)
    kw = {k: raw[k] for k in ("D", "D_ref", "D_max", "chi", "delta_budget", "seed", "dmrg_sweeps")
          if k in raw}
    if "output" in raw:
        kw["output"] = str(raw["output"])
    if "s" in meas:
        kw["s_points"] = tuple(sorted(float(s) for s in meas["s"]))
    for k in ("edges", "R_max", "energy"):
        if k in meas:
            kw[k] = meas[k]
    return RunConfig(raw["backend"], rows, cols, ramp.get("shape", "smooth"),
                     tuple(sorted(float(t) for t in t_rs)), float(ramp.get("s_c", 0.45)),
                     float(params.get("J_r", 1.0)), float(params.get("G_r", 1.5)),
                     source=raw, **kw)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run config; a relative ``output`` is taken relative to the file."""
    path = Path(path)
    raw = load_yaml(path)
    cfg = from_dict(raw, str(path))
    out = Path(cfg.output)
    if not out.is_absolute():
        cfg = replace(cfg, output=str((path.parent / out).resolve()))
    return cfg
