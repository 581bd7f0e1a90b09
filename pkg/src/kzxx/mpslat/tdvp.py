"""Time-dependent variational principle for snake MPS.

One step is a symmetric left-to-right then right-to-left sweep, each over
half the time step.  The Hamiltonian is frozen at ``s(t + dt/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .. import krylov
from .. import symtensor as st
from ..model import ModelParams, step_times, time_step
from .mpo import build_mpo
from .mps import (MPSState, extend_left, extend_right, full_bond_dims, left_env_start,
                  qr_left, qr_right, right_env_start)


def heff2(L, W1, W2, R):
    def matvec(theta):
        x = st.tensordot(L, theta, ([0], [0]))         # (w, l', p1, p2, r)
        x = st.tensordot(x, W1, ([0, 2], [0, 2]))      # (l', p2, r, p1', w)
        x = st.tensordot(x, W2, ([4, 1], [0, 2]))      # (l', r, p1', p2', w)
        return st.tensordot(x, R, ([1, 4], [0, 1]))   # (l', p1', p2', r')
    return matvec


def heff1(L, W, R):
    def matvec(A):
        x = st.tensordot(L, A, ([0], [0]))             # (w, l', p, r)
        x = st.tensordot(x, W, ([0, 2], [0, 2]))       # (l', r, p', w)
        return st.tensordot(x, R, ([1, 3], [0, 1]))   # (l', p', r')
    return matvec


def heff0(L, R):
    def matvec(C):
        x = st.tensordot(L, C, ([0], [0]))             # (w, l', r)
        return st.tensordot(x, R, ([2, 0], [0, 1]))   # (l', r')
    return matvec


def right_envs(mps: MPSState, mpo) -> list:
    """``R[k]`` contracts sites ``k..N-1``; ``R[N]`` is the boundary."""
    n = mps.n_sites
    R = [None] * (n + 1)
    R[n] = right_env_start(mps, mpo.tensors[-1])
    for k in range(n - 1, 0, -1):
        R[k] = extend_right(R[k + 1], mps.tensors[k], mpo.tensors[k])
    return R


def _absorb_s(V, S):
    return st.scale_leg(V, 0, S)


def _normalized(S):
    tot = sum(float((v ** 2).sum()) for v in S.values()) ** 0.5
    return {q: v / tot for q, v in S.items()}


def sweep_one_site(mps: MPSState, mpo, dt: float, tol: float = 1e-12) -> None:
    """Second-order one-site TDVP step; bond dimensions stay fixed."""
    n, W, A = mps.n_sites, mpo.tensors, mps.tensors
    tau = dt / 2
    mps.move_center(0)
    R = right_envs(mps, mpo)
    L = [None] * (n + 1)
    L[0] = left_env_start(W[0])
    for k in range(n):
        A[k] = krylov.expm_multiply(heff1(L[k], W[k], R[k + 1]), A[k], -1j * tau, tol)
        if k == n - 1:
            break
        Q, C = qr_right(A[k])
        A[k] = Q
        L[k + 1] = extend_left(L[k], Q, W[k])
        C = krylov.expm_multiply(heff0(L[k + 1], R[k + 1]), C, 1j * tau, tol)
        A[k + 1] = st.tensordot(C, A[k + 1], ([1], [0]))
    for k in range(n - 1, -1, -1):
        A[k] = krylov.expm_multiply(heff1(L[k], W[k], R[k + 1]), A[k], -1j * tau, tol)
        if k == 0:
            break
        A[k], C = qr_left(A[k])
        R[k] = extend_right(R[k + 1], A[k], W[k])
        C = krylov.expm_multiply(heff0(L[k], R[k]), C.transpose((1, 0)), 1j * tau, tol)
        A[k - 1] = st.tensordot(A[k - 1], C, ([2], [0]))
    mps.center = 0


def sweep_two_site(mps: MPSState, mpo, dt: float, D: int, cutoff: float = 1e-14,
                   tol: float = 1e-12) -> float:
    """Second-order two-site TDVP step with SVD truncation to ``D``.

    Returns the summed relative truncation error of the step.
    """
    n, W, A = mps.n_sites, mpo.tensors, mps.tensors
    if n < 2:
        sweep_one_site(mps, mpo, dt, tol)
        return 0.0
    tau = dt / 2
    err = 0.0
    mps.move_center(0)
    R = right_envs(mps, mpo)
    L = [None] * (n + 1)
    L[0] = left_env_start(W[0])
    for k in range(n - 1):
        theta = st.tensordot(A[k], A[k + 1], ([2], [0]))
        theta = krylov.expm_multiply(heff2(L[k], W[k], W[k + 1], R[k + 2]), theta, -1j * tau, tol)
        U, S, V, e = st.svd(theta, (0, 1), (2, 3), max_dim=D, cutoff=cutoff)
        err += e
        A[k] = U
        A[k + 1] = _absorb_s(V, _normalized(S))
        L[k + 1] = extend_left(L[k], U, W[k])
        if k < n - 2:
            A[k + 1] = krylov.expm_multiply(heff1(L[k + 1], W[k + 1], R[k + 2]), A[k + 1],
                                            1j * tau, tol)
    for k in range(n - 2, -1, -1):
        theta = st.tensordot(A[k], A[k + 1], ([2], [0]))
        theta = krylov.expm_multiply(heff2(L[k], W[k], W[k + 1], R[k + 2]), theta, -1j * tau, tol)
        U, S, V, e = st.svd(theta, (0, 1), (2, 3), max_dim=D, cutoff=cutoff)
        err += e
        A[k + 1] = V
        A[k] = st.scale_leg(U, 2, _normalized(S))
        R[k + 1] = extend_right(R[k + 2], V, W[k + 1])
        if k > 0:
            A[k] = krylov.expm_multiply(heff1(L[k], W[k], R[k + 1]), A[k], 1j * tau, tol)
    mps.center = 0
    return err


# ---- driver ---------------------------------------------------------------------


@dataclass
class TDVPResult:
    """Snapshots ``[(t, MPSState)]`` plus bookkeeping of the run."""

    trajectory: list
    truncation: float = 0.0
    two_site_steps: int = 0
    one_site_steps: int = 0
    switch_time: float = None
    saturated: bool = False
    bond_history: list = field(default_factory=list)


def saturated(mps: MPSState, D: int) -> bool:
    """Every bond has reached ``min(D, full sector dimension)``."""
    full = full_bond_dims(mps.n_sites, mps.charge)
    return all(d >= min(D, sum(f.values())) for d, f in zip(mps.bond_dims, full))


def tdvp_evolve(mps: MPSState, sched, params: ModelParams, lattice, t0: float, t1: float,
                D: int, scheme: str = "auto", dt: float = None, times=None,
                cutoff: float = 1e-14, tol: float = 1e-12, callback=None) -> TDVPResult:
    """Evolve ``mps`` from ``t0`` to ``t1`` under the ramp ``sched``.

    ``scheme='auto'`` uses two-site steps until every bond is saturated, then
    one-site steps; a ``D`` covering the full sector pads the bonds up front; ``'two-site'`` and ``'one-site'`` force either variant.
    Snapshots are returned at ``times`` and at ``t1``; ``callback(t, mps)``
    is called after every step.
    """
    if scheme not in ("auto", "two-site", "one-site"):
        raise ValueError(f"unknown TDVP scheme {scheme!r}")
    if dt is None:
        dt = time_step(sched.t_r)
    mps = mps.copy()
    full = full_bond_dims(mps.n_sites, mps.charge)
    if scheme == "auto" and all(D >= sum(f.values()) for f in full):
        mps.pad_bonds(D)        # sector-exact D: complete bonds, one-site steps are then exact
    mps.move_center(0)
    result = TDVPResult([])
    marks = sorted({float(t) for t in (times or []) if t0 <= t <= t1} | {float(t1)})
    if marks and marks[0] == t0:
        result.trajectory.append((t0, mps.copy()))
        marks = marks[1:]
    one_site = scheme == "one-site" or (scheme == "auto" and saturated(mps, D))
    if one_site and scheme == "auto":
        result.switch_time = t0
    t = t0
    for mark in marks:
        for tk, h in step_times(t, mark, dt):
            s_mid = min(max(sched.s(tk + h / 2), 0.0), 1.0)
            mpo = build_mpo(lattice, s_mid, params)
            if one_site:
                sweep_one_site(mps, mpo, h, tol)
                result.one_site_steps += 1
            else:
                result.truncation += sweep_two_site(mps, mpo, h, D, cutoff, tol)
                result.two_site_steps += 1
                if scheme == "auto" and saturated(mps, D):
                    one_site = True
                    result.switch_time = tk + h
            result.bond_history.append(mps.max_bond_dim)
            if callback is not None:
                callback(tk + h, mps)
        t = mark
        result.trajectory.append((t, mps.copy()))
    result.saturated = saturated(mps, D)
    return result
