"""Staggered-field XX model on the square lattice, its ramp and Trotter gates.

    H(s) = J(s)/2 sum_<ij> (X_i X_j + Y_i Y_j) + G(s)/2 sum_j h_j Z_j,
    J(s) = s J_r,  G(s) = (1 - s) G_r,  h_j = (-1)^(x+y).

Time is measured in units of 1/J_r internally (``tau = J_r t``); a ramp is
labelled by ``J_r t_r``.  Physical microsecond inputs are converted with
:data:`J_R_PHYSICAL`.

Local basis convention shared by every backend: index 0 is spin down
(Z = -1, charge -1), index 1 is spin up (Z = +1, charge +1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .symtensor import Leg, SymTensor

#: 2 pi x 20 MHz in rad/us; the coupling ramp magnitude of the experiment.
J_R_PHYSICAL = 2 * math.pi * 20.0
#: 2 pi x 30 MHz in rad/us.
G_R_PHYSICAL = 2 * math.pi * 30.0
#: Upper bound on the time step, in microseconds.
DT_MAX_US = 0.001
#: Fraction of the ramp time used as time step for fast ramps.
DT_FRACTION = 0.005
SMOOTH_RATE = 40.0

PHYS = Leg(1, (-1, 1), (1, 1))

SZ = np.diag([-1.0, 1.0])
SP = np.array([[0.0, 0.0], [1.0, 0.0]])
SM = SP.T.copy()
SX = SP + SM
SY = -1j * SP + 1j * SM
ID2 = np.eye(2)


class RampRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Ramp magnitudes in units where ``J_r = 1`` unless built with :meth:`physical`."""

    J_r: float = 1.0
    G_r: float = 1.5

    def __post_init__(self):
        if not (self.J_r > 0 and self.G_r > 0):
            raise ValueError("J_r and G_r must be positive")

    @classmethod
    def physical(cls) -> "ModelParams":
        return cls(J_R_PHYSICAL, G_R_PHYSICAL)


@dataclass(frozen=True)
class Lattice:
    """Finite ``rows x cols`` open-boundary square lattice; site index ``y*cols + x``."""

    rows: int
    cols: int

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def site(self, y: int, x: int) -> int:
        return y * self.cols + x

    def coords(self, j: int):
        return divmod(j, self.cols)

    def stagger(self, j: int) -> int:
        y, x = self.coords(j)
        return 1 if (x + y) % 2 == 0 else -1

    def staggering(self) -> np.ndarray:
        return np.array([self.stagger(j) for j in range(self.n_sites)])

    def bond_groups(self) -> dict:
        """Bonds split into four groups of mutually disjoint pairs."""
        groups = {"h_even": [], "h_odd": [], "v_even": [], "v_odd": []}
        for y in range(self.rows):
            for x in range(self.cols - 1):
                groups["h_even" if x % 2 == 0 else "h_odd"].append(
                    (self.site(y, x), self.site(y, x + 1)))
        for y in range(self.rows - 1):
            for x in range(self.cols):
                groups["v_even" if y % 2 == 0 else "v_odd"].append(
                    (self.site(y, x), self.site(y + 1, x)))
        return {k: v for k, v in groups.items() if v}

    def bonds(self) -> list:
        return [b for g in self.bond_groups().values() for b in g]


#: Bond groups of the two-sublattice infinite lattice, in update order.
INFINITE_BOND_GROUPS = ("h_AB", "h_BA", "v_AB", "v_BA")


@dataclass(frozen=True)
class RampSchedule:
    """Map from time to ramp parameter ``s`` for one ramp of length ``t_r``."""

    t_r: float
    shape: str = "smooth"
    s_c: float = 0.45

    def __post_init__(self):
        if self.t_r <= 0:
            raise ValueError("ramp time must be positive")
        if self.shape not in ("linear", "smooth"):
            raise ValueError(f"unknown ramp shape {self.shape!r}")
        if not 0 < self.s_c < 1:
            raise ValueError("s_c must lie in (0, 1)")

    @property
    def tau_q(self) -> float:
        return self.t_r

    @property
    def t_c(self) -> float:
        return self.s_c * self.t_r

    def s(self, t: float) -> float:
        if self.shape == "linear":
            return t / self.t_r
        return smooth_s(t, self.t_r)

    def t_of_s(self, s: float) -> float:
        """Inverse of :meth:`s`; exact for the linear shape, Newton for the smooth one."""
        if self.shape == "linear" or s == 0.0:
            return s * self.t_r
        if s > self.s(self.t_r):
            raise RampRangeError(f"s={s} is not reached by the smooth ramp")
        u = s
        for _ in range(100):
            e = math.exp(-SMOOTH_RATE * u)
            f = u * (1 - e) - s
            df = 1 - e + SMOOTH_RATE * u * e
            step = f / df
            u -= step
            if abs(step) < 1e-16:
                break
        return u * self.t_r

    def t_end(self) -> float:
        return self.t_r


@dataclass(frozen=True)
class ConstantSchedule:
    """Couplings frozen at ``s`` (used for quench and conservation checks)."""

    s_value: float
    t_r: float = 1.0

    def s(self, t: float) -> float:
        return self.s_value


def smooth_s(t: float, t_r: float) -> float:
    """Ramp parameter with a soft start: ``(t/t_r) * (1 - exp(-40 t / t_r))``."""
    u = t / t_r
    return u * (-math.expm1(-SMOOTH_RATE * u))


def ramp_values(params: ModelParams, s: float):
    """``(J, G)`` at ramp parameter ``s``."""
    if not (0.0 <= s <= 1.0):
        raise RampRangeError(f"ramp parameter s={s} outside [0, 1]")
    return s * params.J_r, (1.0 - s) * params.G_r


def time_step(t_r: float, unit: str = "dimensionless", J_r_phys: float = J_R_PHYSICAL) -> float:
    """``dt = min(0.001 us, 0.005 t_r)`` expressed in ``unit``.

    ``unit='us'`` takes and returns microseconds; ``'dimensionless'`` takes and
    returns ``J_r t``.
    """
    if t_r <= 0:
        raise ValueError("ramp time must be positive")
    if unit == "us":
        return min(DT_MAX_US, DT_FRACTION * t_r)
    if unit == "dimensionless":
        return min(DT_MAX_US * J_r_phys, DT_FRACTION * t_r)
    raise ValueError(f"unknown unit {unit!r}")


def epsilon(sched: RampSchedule, t: float) -> float:
    """Distance from the critical point, ``(t - t_c) / tau_Q`` with ``tau_Q = t_r``."""
    return (t - sched.t_c) / sched.tau_q


# ---- gates ------------------------------------------------------------------


@dataclass(frozen=True)
class Gate:
    sites: tuple
    matrix: np.ndarray = field(repr=False)
    time: float = 0.0

    @property
    def tensor(self) -> SymTensor:
        if len(self.sites) == 2:
            legs = (PHYS, PHYS, PHYS.conj(), PHYS.conj())
            return SymTensor.from_dense(self.matrix.reshape(2, 2, 2, 2), legs)
        return SymTensor.from_dense(self.matrix, (PHYS, PHYS.conj()))


def bond_hamiltonian(J: float) -> np.ndarray:
    """``J/2 (XX + YY) = J (S+S- + S-S+)`` on two sites."""
    return J * (np.kron(SP, SM) + np.kron(SM, SP))


def two_site_gate(J: float, dt: float, sites=(0, 1), time: float = 0.0) -> Gate:
    """``exp(-i dt J/2 (XX+YY))``: identity on aligned pairs, rotation on the flip pair."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    c, s = math.cos(J * dt), math.sin(J * dt)
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = u[2, 1] = -1j * s
    return Gate(tuple(sites), u, time)


def field_gate(G: float, h: int, dt: float, site=0, time: float = 0.0) -> Gate:
    """``exp(-i dt G/2 h Z)`` on one site."""
    if h not in (1, -1):
        raise ValueError(f"invalid staggering h={h}; must be +1 or -1")
    phase = 0.5 * G * h * dt
    return Gate((site,), np.diag([np.exp(1j * phase), np.exp(-1j * phase)]), time)


# ---- Trotter plans ----------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    """One layer of commuting gates: ``kind`` is ``'field'`` or ``'bond'``."""

    kind: str
    group: str
    tau: float


@dataclass(frozen=True)
class TrotterPlan:
    layers: tuple
    dt: float
    J: float
    G: float
    s_mid: float

    def is_palindrome(self) -> bool:
        return self.layers == tuple(reversed(self.layers))

    def reversed(self) -> "TrotterPlan":
        return TrotterPlan(tuple(reversed(self.layers)), self.dt, self.J, self.G, self.s_mid)


def symmetric_layers(groups, dt: float) -> tuple:
    """Second-order palindrome: field, groups forward, groups backward, field."""
    groups = list(groups)
    layers = [Layer("field", "all", dt / 2)]
    for g in groups[:-1]:
        layers.append(Layer("bond", g, dt / 2))
    if groups:
        layers.append(Layer("bond", groups[-1], dt))
    for g in reversed(groups[:-1]):
        layers.append(Layer("bond", g, dt / 2))
    layers.append(Layer("field", "all", dt / 2))
    return tuple(layers)


def trotter_plan(lattice, sched, params: ModelParams, t: float, dt: float) -> TrotterPlan:
    """Second-order step from ``t`` to ``t + dt`` with couplings frozen at mid-step.

    ``lattice`` is a :class:`Lattice` or ``None`` for the infinite two-sublattice
    lattice.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    groups = INFINITE_BOND_GROUPS if lattice is None else tuple(lattice.bond_groups())
    s_mid = sched.s(t + dt / 2)
    J, G = ramp_values(params, min(max(s_mid, 0.0), 1.0))
    return TrotterPlan(symmetric_layers(groups, dt), dt, J, G, s_mid)


def step_times(t0: float, t1: float, dt: float):
    """Equal sub-steps no longer than ``dt`` covering ``[t0, t1]``."""
    if t1 <= t0:
        return []
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    return [(t0 + k * h, h) for k in range(n)]
