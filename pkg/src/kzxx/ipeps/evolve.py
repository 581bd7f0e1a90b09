"""Ramp driver for the iPEPS backend: Trotter steps with NTU, CTMRG snapshots."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..model import ModelParams, step_times, time_step, trotter_plan, two_site_gate
from .ctm import CTMEnv, correlator, ctmrg, energy_per_site
from .ntu import GateInfo, TruncationLedger, apply_field, apply_gate_ntu
from .state import IPEPSState


@dataclass
class Measurement:
    s: float
    t: float
    records: list
    energy: float
    delta: float
    bond_dims: dict
    chi: int
    ctm_iterations: int
    ctm_converged: bool


@dataclass
class RampResult:
    measurements: list
    ledger: TruncationLedger
    delta_curve: list = field(default_factory=list)     # (t, s, accumulated delta, D)
    status: str = "completed"
    terminated_s: float = None
    state: IPEPSState = None
    env: CTMEnv = None

    def __iter__(self):
        # unpacks as (measurements, ledger)
        return iter((self.measurements, self.ledger))


def default_chi(D_max: int) -> int:
    return 4 * D_max


def trotter_step(state: IPEPSState, plan, D_max: int, ledger: TruncationLedger,
                 **ntu) -> IPEPSState:
    info = GateInfo()
    for layer in plan.layers:
        if layer.kind == "field":
            state = apply_field(state, plan.G, layer.tau)
        else:
            gate = two_site_gate(plan.J, layer.tau)
            state, delta = apply_gate_ntu(state, layer.group, gate, D_max, info, **ntu)
            ledger.add(layer.group, delta, info.regularized)
    return state


def evolve_ramp(state: IPEPSState, sched, params: ModelParams, D_max: int, measure_points,
                chi: int = None, R_max: int = 8, budget: float = 0.1, dt: float = None,
                ctm_tol: float = 1e-8, ctm_max_iter: int = 100, s_end: float = None,
                callback=None, **ntu) -> RampResult:
    """Ramp ``state`` (normally the Neel product state) along ``sched``.

    Measurements are taken at the ramp parameters in ``measure_points``; the
    run stops after the last of them (or at ``s_end``), or as soon as the
    accumulated truncation error exceeds ``budget``.  Partial results are kept.
    """
    chi = default_chi(D_max) if chi is None else chi
    dt = time_step(sched.t_r) if dt is None else dt
    s_points = sorted(float(s) for s in measure_points)
    last = max(s_points + ([s_end] if s_end is not None else []), default=0.0)
    marks = sorted({sched.t_of_s(s) for s in s_points} | {sched.t_of_s(last)})
    ledger = TruncationLedger()
    out = RampResult([], ledger, state=state)
    env = None
    t = 0.0
    wanted = {round(sched.t_of_s(s), 12): s for s in s_points}

    def measure(t, s):
        nonlocal env
        env = ctmrg(state, chi, ctm_tol, ctm_max_iter, env=env, raise_on_failure=False)
        recs = correlator(env, state, R_max, sched.t_r, s, t, D_max)
        out.measurements.append(Measurement(
            s, t, recs, energy_per_site(env, state, s, params), ledger.total,
            state.bond_dims, chi, env.iterations, env.converged))

    for mark in marks:
        for tk, h in step_times(t, mark, dt):
            plan = trotter_plan(None, sched, params, tk, h)
            state = trotter_step(state, plan, D_max, ledger, **ntu)
            s_now = sched.s(tk + h)
            out.delta_curve.append((tk + h, s_now, ledger.total, state.D))
            if callback is not None:
                callback(tk + h, state, ledger)
            if ledger.total > budget:
                out.status = "terminated"
                out.terminated_s = s_now
                out.state = state
                out.env = env
                return out
        t = mark
        s_mark = wanted.get(round(mark, 12))
        if s_mark is not None:
            measure(mark, s_mark)
    out.state = state
    out.env = env
    return out
