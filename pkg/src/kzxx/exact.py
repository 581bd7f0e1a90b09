"""Exact state vectors in a fixed magnetization sector.

The basis of a sector is the sorted list of bit strings with a fixed number of
up spins (bit ``j`` set means site ``j`` is up).  This backend is the oracle
for the MPS and iPEPS engines and is limited to :data:`MAX_SPINS` sites.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import krylov
from .model import (
    Lattice,
    ModelParams,
    RampSchedule,
    ramp_values,
    step_times,
    time_step,
    trotter_plan,
)
from .records import CorrRecord

MAX_SPINS = 16


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class SectorBasis:
    lattice: Lattice
    magnetization: int
    states: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def build(cls, lattice: Lattice, magnetization: int = 0) -> "SectorBasis":
        n = lattice.n_sites
        if n > MAX_SPINS:
            raise CapacityError(
                f"exact backend holds at most {MAX_SPINS} spins, requested {n} "
                f"(sector dimension {sector_dimension(n, magnetization)})"
            )
        if (n + magnetization) % 2 or abs(magnetization) > n:
            raise ValueError(f"magnetization {magnetization} impossible on {n} sites")
        n_up = (n + magnetization) // 2
        all_states = np.arange(1 << n, dtype=np.int64)
        counts = np.array([bin(s).count("1") for s in range(1 << n)]) if n <= 16 else None
        states = all_states[counts == n_up]
        return cls(lattice, magnetization, states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, configs) -> np.ndarray:
        return np.searchsorted(self.states, configs)

    def bit(self, j: int) -> np.ndarray:
        return (self.states >> j) & 1


def sector_dimension(n_sites: int, magnetization: int = 0) -> int:
    if (n_sites + magnetization) % 2:
        return 0
    return math.comb(n_sites, (n_sites + magnetization) // 2)


@dataclass
class StateVector:
    basis: SectorBasis
    amps: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amps.copy())

    def to_full(self) -> np.ndarray:
        """Amplitudes in the full 2^N space, site 0 as the most significant factor."""
        n = self.basis.lattice.n_sites
        full = np.zeros(1 << n, dtype=complex)
        # kron order: site 0 slowest; bit j of the config is site j
        idx = np.zeros(self.basis.dim, dtype=np.int64)
        for j in range(n):
            idx |= ((self.basis.states >> j) & 1) << (n - 1 - j)
        full[idx] = self.amps
        return full


class SectorOperators:
    """Sparse pieces of ``H(s) = J(s) H_J + G(s) H_G`` and pair index tables."""

    def __init__(self, basis: SectorBasis):
        self.basis = basis
        lat = basis.lattice
        h = lat.staggering()
        z = np.zeros(basis.dim)
        for j in range(lat.n_sites):
            z += 0.5 * h[j] * (2 * basis.bit(j) - 1)
        self.field_diag = z
        self.pairs = {}
        rows, cols = [], []
        for (i, j) in lat.bonds():
            a, b = self.flip_pairs(i, j)
            rows += [a, b]
            cols += [b, a]
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
        self.hop = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                 shape=(basis.dim, basis.dim))

    def flip_pairs(self, i: int, j: int):
        """Indices ``a`` (i up, j down) and their partners ``b`` (i down, j up)."""
        key = (i, j)
        if key not in self.pairs:
            st = self.basis.states
            sel = (((st >> i) & 1) == 1) & (((st >> j) & 1) == 0)
            a = np.nonzero(sel)[0]
            partners = st[a] ^ ((1 << i) | (1 << j))
            b = self.basis.index(partners)
            self.pairs[key] = (a, b)
        return self.pairs[key]

    def hamiltonian(self, s: float, params: ModelParams):
        J, G = ramp_values(params, s)
        return J * self.hop + sp.diags(G * self.field_diag)


_OPS_CACHE: dict = {}


def operators(basis: SectorBasis) -> SectorOperators:
    key = (basis.lattice, basis.magnetization)
    ops = _OPS_CACHE.get(key)
    if ops is None:
        ops = SectorOperators(basis)
        _OPS_CACHE[key] = ops
    return ops


def neel_state(lattice: Lattice) -> StateVector:
    """Product state with every spin anti-aligned to its staggered field."""
    h = lattice.staggering()
    config = 0
    for j in range(lattice.n_sites):
        if h[j] == -1:
            config |= 1 << j
    mag = int(np.sum(-h))
    basis = SectorBasis.build(lattice, mag)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index([config])[0]] = 1.0
    return StateVector(basis, amps)


def basis_state(basis: SectorBasis, config: int) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index([config])[0]] = 1.0
    return StateVector(basis, amps)


# ---- dynamics ---------------------------------------------------------------


def trotter_step(psi: StateVector, sched, params: ModelParams, t: float, dt: float) -> StateVector:
    lat = psi.basis.lattice
    ops = operators(psi.basis)
    plan = trotter_plan(lat, sched, params, t, dt)
    groups = lat.bond_groups()
    amps = psi.amps.copy()
    for layer in plan.layers:
        if layer.kind == "field":
            amps *= np.exp(-1j * plan.G * layer.tau * ops.field_diag)
        else:
            c, s = math.cos(plan.J * layer.tau), math.sin(plan.J * layer.tau)
            for (i, j) in groups[layer.group]:
                a, b = ops.flip_pairs(i, j)
                xa, xb = amps[a], amps[b]
                amps[a] = c * xa - 1j * s * xb
                amps[b] = -1j * s * xa + c * xb
    return StateVector(psi.basis, amps)


def propagator_step(psi: StateVector, sched, params: ModelParams, t: float, dt: float,
                    tol: float = 1e-12) -> StateVector:
    """``exp(-i dt H(s(t + dt/2)))`` applied by Krylov exponentiation."""
    ops = operators(psi.basis)
    s = min(max(sched.s(t + dt / 2), 0.0), 1.0)
    H = ops.hamiltonian(s, params)
    amps = krylov.expm_multiply(lambda v: H @ v, psi.amps, -1j * dt, tol=tol)
    return StateVector(psi.basis, amps)


def evolve(psi: StateVector, sched, params: ModelParams, t0: float, t1: float,
           method: str = "trotter", dt: float = None, times=None, renormalize: bool = False):
    """Evolve from ``t0`` to ``t1``; returns ``[(t, StateVector), ...]``.

    Snapshots are taken at every time in ``times`` (clipped to ``[t0, t1]``)
    and at ``t1``.  Steps never exceed ``dt`` (default: the ramp time-step rule)
    and land exactly on the snapshot times.
    """
    if method not in ("trotter", "exact_propagator"):
        raise ValueError(f"unknown method {method!r}")
    if dt is None:
        dt = time_step(sched.t_r)
    step = trotter_step if method == "trotter" else propagator_step
    marks = sorted({float(t) for t in (times or []) if t0 <= t <= t1} | {float(t1)})
    out = []
    t = t0
    if marks and marks[0] == t0:
        out.append((t0, psi))
        marks = marks[1:]
    for mark in marks:
        for tk, h in step_times(t, mark, dt):
            psi = step(psi, sched, params, tk, h)
            if renormalize:
                psi = StateVector(psi.basis, psi.amps / psi.norm())
        t = mark
        out.append((t, psi))
    return out


# ---- spectra ----------------------------------------------------------------


def ground_state(s: float, params: ModelParams, lattice: Lattice, k: int = 1,
                 magnetization: int = 0, tol: float = 1e-12):
    """Lowest ``k`` eigenpairs ``[(E_n, StateVector), ...]`` in a sector."""
    if k < 1:
        raise ValueError("k must be >= 1")
    basis = SectorBasis.build(lattice, magnetization)
    H = operators(basis).hamiltonian(s, params)
    if basis.dim <= 600:
        w, v = np.linalg.eigh(H.toarray())
    else:
        v0 = np.random.default_rng(7).standard_normal(basis.dim)
        w, v = spla.eigsh(H, k=min(k, basis.dim - 1), which="SA", tol=tol, v0=v0,
                          ncv=max(2 * k + 1, 30))
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    return [(float(w[i]), StateVector(basis, v[:, i].astype(complex))) for i in range(k)]


def gap(s: float, params: ModelParams, lattice: Lattice, magnetization: int = 0) -> float:
    (e0, _), (e1, _) = ground_state(s, params, lattice, 2, magnetization)
    return e1 - e0


# ---- observables ------------------------------------------------------------


def energy(psi: StateVector, s: float, params: ModelParams) -> float:
    H = operators(psi.basis).hamiltonian(s, params)
    return float(np.vdot(psi.amps, H @ psi.amps).real / np.vdot(psi.amps, psi.amps).real)


def residual(psi: StateVector, E: float, s: float, params: ModelParams) -> float:
    H = operators(psi.basis).hamiltonian(s, params)
    return float(np.linalg.norm(H @ psi.amps - E * psi.amps))


def sz(psi: StateVector, j: int) -> float:
    p = np.abs(psi.amps) ** 2
    return float(np.sum(p * (2 * psi.basis.bit(j) - 1)) / np.sum(p))


def sx(psi: StateVector, j: int) -> float:
    """Zero by charge selection: sigma^x changes the magnetization sector."""
    return 0.0


def flip_corr(psi: StateVector, i: int, j: int) -> float:
    """``<S+_i S-_j + S-_i S+_j> = (<X_i X_j> + <Y_i Y_j>) / 2``."""
    if i == j:
        raise ValueError("flip correlator needs two distinct sites")
    a, b = operators(psi.basis).flip_pairs(i, j)
    # S+_i S-_j maps b (i down, j up) to a
    val = np.vdot(psi.amps[a], psi.amps[b])
    return float(2 * val.real / np.vdot(psi.amps, psi.amps).real)


def measure(psi: StateVector, observable: str, *sites) -> float:
    """Named observables: ``'sz'``, ``'sx'``, ``'sy'``, ``'xx+yy'`` and ``'C'``.

    ``'C'`` is the staggered connected correlator of a pair of sites at lattice
    distance ``R``: ``(-1)^R [<S+S-> + <S-S+>]`` minus the (vanishing)
    disconnected part.
    """
    if observable == "sz":
        return sz(psi, *sites)
    if observable in ("sx", "sy"):
        return sx(psi, *sites)
    if observable == "xx+yy":
        return 2 * flip_corr(psi, *sites)
    if observable == "C":
        i, j = sites
        lat = psi.basis.lattice
        (yi, xi), (yj, xj) = lat.coords(i), lat.coords(j)
        R = abs(yi - yj) + abs(xi - xj)
        return (-1) ** R * (flip_corr(psi, i, j) - sx(psi, i) * sx(psi, j))
    raise ValueError(f"unknown observable {observable!r}")


def row_correlators(psi: StateVector, t_r: float, s: float, t: float, D: int = 0,
                    backend: str = "exact"):
    """Staggered correlator along every row, averaged over pairs at distance R."""
    lat = psi.basis.lattice
    out = []
    for y in range(lat.rows):
        for R in range(1, lat.cols):
            vals = [measure(psi, "C", lat.site(y, x), lat.site(y, x + R))
                    for x in range(lat.cols - R)]
            out.append(CorrRecord(backend, t_r, s, t, R, float(np.mean(vals)), D, y))
    return out


def fidelity(psi: StateVector, phi: StateVector) -> float:
    if psi.basis.magnetization != phi.basis.magnetization:
        return 0.0
    ov = np.vdot(psi.amps, phi.amps)
    return float(abs(ov) ** 2 / (np.vdot(psi.amps, psi.amps).real * np.vdot(phi.amps, phi.amps).real))
