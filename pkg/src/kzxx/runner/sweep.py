"""Run a sweep over ramp times for one backend and persist the records."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .. import __version__
from .. import exact
from ..ipeps import IPEPSState, evolve_ramp, save_state
from ..kzanalysis import kz_scales
from ..model import Lattice, RampSchedule
from ..mpslat import (build_mpo, expectation, ground_energy, measure_corr, neel_mps, save_mps,
                      tdvp_evolve)
from ..records import EnergyRecord, ErrorRecord
from .config import RunConfig
from .store import KINDS, Store

log = logging.getLogger("kzxx.runner")

WORKERS_ENV = "KZXX_WORKERS"
TERMINATED = "terminated-at-s"
DONE = ("completed", TERMINATED)


@dataclass
class Trajectory:
    key: str
    t_r: float
    status: str = "completed"
    records: dict = field(default_factory=lambda: {k: [] for k in KINDS})
    final_delta: float = 0.0
    bond_history: list = field(default_factory=list)
    seconds: float = 0.0
    message: str = ""
    terminated_s: float = None


def trajectory_key(cfg: RunConfig, t_r: float) -> str:
    D = {"exact": "full", "mps": cfg.D, "ipeps": cfg.D_max}[cfg.backend]
    return f"{cfg.backend}|D={D}|t_r={t_r:g}|{cfg.digest()}"


def measure_points(cfg: RunConfig, t_r: float) -> list:
    """Configured s grid plus, with ``edges``, the ramp parameters at ``t_c -/+ t_hat``."""
    pts = set(cfg.s_points)
    if cfg.edges:
        sched = cfg.schedule(t_r)
        th = kz_scales(t_r).t_hat
        for t in (sched.t_c - th, sched.t_c + th):
            if 0 < t < t_r:
                pts.add(sched.s(t))
    return sorted(pts)


def edge_points(t_r: float, s_c: float = 0.45, shape: str = "smooth"):
    """``(s at t_c - t_hat, s at t_c + t_hat)``; ``None`` where off the ramp."""
    sched = RampSchedule(t_r, shape, s_c)
    th = kz_scales(t_r).t_hat
    return tuple(sched.s(t) if 0 < t < t_r else None for t in (sched.t_c - th, sched.t_c + th))


def _exact(cfg, t_r, pts, out):
    lat = Lattice(cfg.rows, cfg.cols)
    sched, p = cfg.schedule(t_r), cfg.params
    times = {sched.t_of_s(s): s for s in pts}
    psi = exact.neel_state(lat)
    for t, psi in exact.evolve(psi, sched, p, 0.0, max(times), times=list(times)):
        s = times[t]
        out.records["corr"] += exact.row_correlators(psi, t_r, s, t)
        if cfg.energy:
            E = exact.energy(psi, s, p)
            E0 = exact.ground_state(s, p, lat, magnetization=psi.basis.magnetization)[0][0]
            out.records["energy"].append(EnergyRecord(t_r, s, E, E0, (E - E0) / lat.n_sites, "exact", 0))


def _mps(cfg, t_r, pts, out):
    lat = Lattice(cfg.rows, cfg.cols)
    sched, p = cfg.schedule(t_r), cfg.params
    times = {sched.t_of_s(s): s for s in pts}
    res = tdvp_evolve(neel_mps(lat), sched, p, lat, 0.0, max(times), cfg.D, times=list(times))
    out.bond_history = res.bond_history
    out.final_delta = res.truncation
    for t, mps in res.trajectory:
        s = times[t]
        out.records["corr"] += measure_corr(mps, lat, t_r, s, t, cfg.D)
        if cfg.energy:
            E = expectation(mps, build_mpo(lat, s, p))
            E0 = ground_energy(lat, s, cfg.d_ref, p, cfg.seed)
            out.records["energy"].append(EnergyRecord(t_r, s, E, E0, (E - E0) / lat.n_sites, "mps", cfg.D))
    if cfg.output:
        save_mps(res.trajectory[-1][1], os.path.join(cfg.output, "snapshots", _dirname(out.key)),
                 t_r=t_r, t=res.trajectory[-1][0])


def _ipeps(cfg, t_r, pts, out):
    sched = cfg.schedule(t_r)
    res = evolve_ramp(IPEPSState.neel(), sched, cfg.params, cfg.D_max, pts, chi=cfg.chi or None,
                      R_max=cfg.R_max, budget=cfg.delta_budget)
    for m in res.measurements:
        out.records["corr"] += m.records
    out.records["error"] = [ErrorRecord(t_r, s, d, D, cfg.D_max) for _, s, d, D in res.delta_curve]
    out.bond_history = [D for *_, D in res.delta_curve]
    out.final_delta = res.ledger.total
    if res.status == "terminated":
        out.status = TERMINATED
        out.terminated_s = res.terminated_s
        out.message = f"delta budget exceeded at s={res.terminated_s:.6g}"
    if cfg.output:
        save_state(res.state, os.path.join(cfg.output, "snapshots", _dirname(out.key)), t_r=t_r,
                   status=out.status, delta=res.ledger.total,
                   ledger=[[i, b, d] for i, b, d in res.ledger.entries])


def _dirname(key: str) -> str:
    return key.replace("|", "_").replace("=", "")


BACKEND_RUNNERS = {"exact": _exact, "mps": _mps, "ipeps": _ipeps}


def run_trajectory(cfg: RunConfig, t_r: float) -> Trajectory:
    """One ramp; errors are caught and reported as a failed trajectory."""
    out = Trajectory(trajectory_key(cfg, t_r), t_r)
    t0 = time.perf_counter()
    try:
        BACKEND_RUNNERS[cfg.backend](cfg, t_r, measure_points(cfg, t_r), out)
    except Exception as e:      # capacity and convergence failures stay per-trajectory
        log.warning("trajectory %s failed: %s", out.key, e)
        out.status = "failed"
        out.message = f"{type(e).__name__}: {e}"
        out.records = {k: [] for k in KINDS}
    out.seconds = time.perf_counter() - t0
    return out


def _changes(history) -> list:
    """``[[step, D], ...]`` at every step where the bond dimension changed."""
    out = []
    for k, D in enumerate(history):
        if not out or out[-1][1] != D:
            out.append([k, int(D)])
    return out


def _call(args):
    return run_trajectory(*args)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run(cfg: RunConfig, workers: int = None) -> dict:
    """Run every trajectory of ``cfg`` not yet completed in its store; returns the manifest."""
    store = Store(cfg.output)
    man = store.manifest()
    trajs = man.setdefault("trajectories", {})
    todo = [t for t in cfg.t_r if trajs.get(trajectory_key(cfg, t), {}).get("status") not in DONE]
    skipped = len(cfg.t_r) - len(todo)
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(min(workers, len(todo))) as pool:
            results = list(pool.map(_call, [(cfg, t) for t in todo]))
    else:
        results = [run_trajectory(cfg, t) for t in todo]
    for tr in sorted(results, key=lambda r: r.t_r):
        rows = {}
        for kind, recs in tr.records.items():
            start = store.count(kind)
            rows[kind] = [start, start + store.append(kind, recs)]
        trajs[tr.key] = {
            "backend": cfg.backend, "t_r": tr.t_r, "status": tr.status, "message": tr.message,
            "seconds": round(tr.seconds, 3), "final_delta": tr.final_delta,
            "terminated_s": tr.terminated_s,
            "bond_history": _changes(tr.bond_history), "rows": rows}
        log.info("%s: %s (%.1f s)", tr.key, tr.message or tr.status, tr.seconds)
    man.setdefault("runs", []).append({
        "config_hash": cfg.digest(), "code_version": __version__, "config": cfg.source,
        "new": [trajectory_key(cfg, t) for t in todo], "skipped": skipped})
    man["code_version"] = __version__
    store.save_manifest(man)
    return man
