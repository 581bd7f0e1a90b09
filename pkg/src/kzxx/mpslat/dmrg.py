"""Two-site DMRG reference ground states and the excitation energy above them."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from .. import krylov
from .. import symtensor as st
from ..model import ModelParams
from .mpo import build_mpo
from .mps import (MPSState, expectation, extend_left, extend_right, left_env_start, qr_left,
                  qr_right)
from .tdvp import _normalized, heff1, heff2, right_envs, saturated


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class DMRGResult:
    energy: float
    state: MPSState
    sweeps: int
    converged: bool
    history: list


def _two_site_sweep(mps, mpo, D, cutoff):
    n, W, A = mps.n_sites, mpo.tensors, mps.tensors
    mps.move_center(0)
    R = right_envs(mps, mpo)
    L = [None] * (n + 1)
    L[0] = left_env_start(W[0])
    for k in range(n - 1):
        theta = st.tensordot(A[k], A[k + 1], ([2], [0]))
        _, theta = krylov.lanczos_ground(heff2(L[k], W[k], W[k + 1], R[k + 2]), theta)
        U, S, V, _ = st.svd(theta, (0, 1), (2, 3), max_dim=D, cutoff=cutoff)
        A[k] = U
        A[k + 1] = st.scale_leg(V, 0, _normalized(S))
        L[k + 1] = extend_left(L[k], U, W[k])
    for k in range(n - 2, -1, -1):
        theta = st.tensordot(A[k], A[k + 1], ([2], [0]))
        _, theta = krylov.lanczos_ground(heff2(L[k], W[k], W[k + 1], R[k + 2]), theta)
        U, S, V, _ = st.svd(theta, (0, 1), (2, 3), max_dim=D, cutoff=cutoff)
        A[k + 1] = V
        A[k] = st.scale_leg(U, 2, _normalized(S))
        R[k + 1] = extend_right(R[k + 2], V, W[k + 1])
    mps.center = 0


def _one_site_sweep(mps, mpo):
    # fixed bonds: every local update is variational, so the energy never rises
    n, W, A = mps.n_sites, mpo.tensors, mps.tensors
    mps.move_center(0)
    R = right_envs(mps, mpo)
    L = [None] * (n + 1)
    L[0] = left_env_start(W[0])
    for k in range(n - 1):
        _, A[k] = krylov.lanczos_ground(heff1(L[k], W[k], R[k + 1]), A[k])
        Q, C = qr_right(A[k])
        A[k] = Q
        L[k + 1] = extend_left(L[k], Q, W[k])
        A[k + 1] = st.tensordot(C, A[k + 1], ([1], [0]))
    for k in range(n - 1, 0, -1):
        _, A[k] = krylov.lanczos_ground(heff1(L[k], W[k], R[k + 1]), A[k])
        A[k], C = qr_left(A[k])
        R[k] = extend_right(R[k + 1], A[k], W[k])
        A[k - 1] = st.tensordot(A[k - 1], C.transpose((1, 0)), ([2], [0]))
    _, A[0] = krylov.lanczos_ground(heff1(L[0], W[0], R[1]), A[0])
    mps.center = 0


def dmrg_sweeps(mps: MPSState, mpo, D: int, max_sweeps: int = 30, tol: float = None,
                cutoff: float = 1e-14, two_site_sweeps: int = 2) -> DMRGResult:
    """Two-site sweeps grow the bonds; once they stop growing (and at least
    ``two_site_sweeps`` were done) one-site sweeps finish the job.

    ``history`` holds the energy of the state after each sweep.
    """
    n = mps.n_sites
    tol = 1e-10 * n if tol is None else tol
    history = []
    energy = None
    converged = False
    sweep = 0
    one_site = False
    for sweep in range(1, max_sweeps + 1):
        if one_site:
            _one_site_sweep(mps, mpo)
        else:
            dims = mps.bond_dims
            _two_site_sweep(mps, mpo, D, cutoff)
            one_site = sweep >= two_site_sweeps and (mps.bond_dims == dims or saturated(mps, D))
        e = float(expectation(mps, mpo).real)
        history.append(e)
        if energy is not None and abs(energy - e) < tol:
            energy = e
            converged = True
            break
        energy = e
    if not converged:
        warnings.warn(f"DMRG not converged after {sweep} sweeps; last energy {energy}",
                      ConvergenceWarning)
    mps.normalize()
    return DMRGResult(float(energy), mps, sweep, converged, history)


_CACHE = {}


def dmrg_ground(lattice, s: float, D: int, params: ModelParams = ModelParams(),
                seed: int = 0, max_sweeps: int = 30, charge: int = 0) -> DMRGResult:
    """Ground state of ``H(s)`` at bond dimension ``D`` from a seeded random start."""
    if D < 1:
        raise ValueError("D must be >= 1")
    mpo = build_mpo(lattice, s, params)
    if lattice.n_sites == 1:
        raise ValueError("DMRG needs at least two sites")
    if abs(charge) > lattice.n_sites or (charge - lattice.n_sites) % 2:
        raise ValueError(f"charge {charge} impossible on {lattice.n_sites} sites")
    psi = MPSState.random(lattice.n_sites, D, charge, rng=seed)
    return dmrg_sweeps(psi, mpo, D, max_sweeps)


def ground_energy(lattice, s: float, D: int, params: ModelParams = ModelParams(),
                  seed: int = 0) -> float:
    """Cached DMRG reference energy."""
    key = (lattice, round(float(s), 12), D, params, seed)
    if key not in _CACHE:
        _CACHE[key] = dmrg_ground(lattice, s, D, params, seed).energy
    return _CACHE[key]


def excitation_energy(mps: MPSState, lattice, s: float, params: ModelParams = ModelParams(),
                      D_ref: int = 64, E_gs: float = None) -> float:
    """``(E(s) - E_GS(s)) / N`` with ``E_GS`` from DMRG at ``D_ref``."""
    n = lattice.n_sites
    E = expectation(mps, build_mpo(lattice, s, params))
    if E_gs is None:
        E_gs = ground_energy(lattice, s, D_ref, params)
    dE = (E - E_gs) / n
    if dE * n < -1e-6 * n:
        warnings.warn(f"negative excitation energy {dE:.3e} per site; reference not converged",
                      ConvergenceWarning)
    return dE
