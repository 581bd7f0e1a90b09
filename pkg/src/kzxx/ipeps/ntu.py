"""Neighbourhood tensor update with the NN+ cluster.

Every bond is brought into a canonical horizontal frame: site ``X`` on the
left, ``Y`` on the right (vertical bonds are turned a quarter).  Around them
sit six neighbours and four corners::

    C1  N1  N2  C2
    N6  X   Y   N3
    C4  N5  N4  C3

Outer legs of the cluster are traced.  Each corner double is replaced by its
rank-one (SVD_1) factor, which splits the cluster into a top row, a bottom
row and two side matrices.  ``X`` and ``Y`` enter through the isometric parts
of their QR decompositions, so the metric lives on the small reduced legs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import symtensor as st
from ..model import PHYS, field_gate
from ..symtensor import SymTensor
from .state import BONDS, D, IPEPSState, L, P, R, U


class MetricWarning(RuntimeWarning):
    pass


def canonical(bond: str):
    """``(X, Y, turns)``: left/top site, right/bottom site, quarter turns."""
    (X, _), (Y, _) = BONDS[bond]
    return X, Y, (0 if bond.startswith("h") else 1)


def _double(T: SymTensor, traced) -> SymTensor:
    """``T`` against its conjugate over ``p`` and ``traced``: legs (open..., open*...)."""
    axes = [P] + list(traced)
    return st.tensordot(T, T.conj(), (axes, axes))


@dataclass
class CornerFactor:
    """Rank-one cut of a corner double between its two open legs."""

    first: SymTensor
    second: SymTensor
    top: float
    discarded: float


def corner_svd1(c: SymTensor, first, second) -> CornerFactor:
    """``c ~ s u v`` with ``u`` on the ``first`` leg pair and ``s v`` on ``second``.

    Only the neutral sector is considered so the factors stay Hermitian-like
    (ket and bra charges equal).
    """
    first, second = list(first), list(second)
    neutral = {k: b for k, b in c.blocks.items()
               if sum(c.legs[i].sig * k[i] for i in first) == 0}
    c0 = SymTensor(c.legs, neutral, c.n, c.dtype, check=False)
    u, S, v, _ = st.svd(c0, first, second, max_dim=1)
    s1 = float(S[0][0])
    total = c.norm()
    disc = np.sqrt(max(total ** 2 - s1 ** 2, 0.0)) / total
    # fix the phase so the ket-bra trace of u is real positive
    ud = u.drop_leg(2)
    ph = _trace_phase(ud)
    return CornerFactor(ud * ph, v.drop_leg(0) * (s1 / ph), s1, float(disc))


def _trace_phase(m: SymTensor):
    tr = sum(np.trace(b) for k, b in m.blocks.items() if k[0] == k[1])
    if abs(tr) < 1e-300:
        return 1.0
    return np.conj(tr) / abs(tr)


@dataclass
class NTUCluster:
    """Metric of the reduced pair plus the pieces it was built from.

    ``G`` has legs ``(x*, y*, x, y)``: bra legs first.
    """

    G: SymTensor
    QX: SymTensor
    QY: SymTensor
    RX: SymTensor
    RY: SymTensor
    X: str
    Y: str
    turns: int
    corners: list = field(default_factory=list)
    min_eig: float = 0.0
    regularized: bool = False

    def norm2(self, theta: SymTensor) -> float:
        return metric_norm2(self.G, theta)


def metric_norm2(G: SymTensor, theta: SymTensor) -> float:
    """``<theta|G|theta>`` for ``theta`` with legs ``(x, pX, pY, y)``."""
    Gt = st.tensordot(G, theta, ([2, 3], [0, 3]))
    return float(np.real(st.tensordot(theta.conj(), Gt, ([0, 1, 2, 3], [0, 2, 3, 1])).item()))


def _environment(TX: SymTensor, TY: SymTensor):
    """Side matrices, top and bottom rows, and the four corner factors."""
    c1 = corner_svd1(_double(TX, (U, L)), (1, 3), (0, 2))   # (d, r): r->N1, d->N6
    c2 = corner_svd1(_double(TY, (U, R)), (0, 2), (1, 3))   # (l, d): l->N2, d->N3
    c3 = corner_svd1(_double(TY, (D, R)), (1, 3), (0, 2))   # (u, l): l->N4, u->N3
    c4 = corner_svd1(_double(TX, (D, L)), (1, 3), (0, 2))   # (u, r): r->N5, u->N6

    n1 = st.tensordot(_double(TY, (U,)), c1.first, ([0, 3], [0, 1]))   # (d, r, d*, r*)
    n2 = st.tensordot(_double(TX, (U,)), c2.first, ([2, 5], [0, 1]))   # (l, d, l*, d*)
    top = st.tensordot(n1, n2, ([1, 3], [0, 2]))                       # (d1, d1*, d2, d2*)

    n5 = st.tensordot(_double(TY, (D,)), c4.first, ([1, 4], [0, 1]))   # (u, r, u*, r*)
    n4 = st.tensordot(_double(TX, (D,)), c3.first, ([2, 5], [0, 1]))   # (u, l, u*, l*)
    bottom = st.tensordot(n5, n4, ([1, 3], [1, 3]))                    # (u5, u5*, u4, u4*)

    n6 = st.tensordot(_double(TY, (L,)), c1.second, ([0, 3], [0, 1]))  # (d, r, d*, r*)
    left = st.tensordot(n6, c4.second, ([0, 2], [0, 1]))              # (r, r*)
    n3 = st.tensordot(_double(TX, (R,)), c2.second, ([0, 3], [0, 1]))  # (l, d, l*, d*)
    right = st.tensordot(n3, c3.second, ([1, 3], [0, 1]))             # (l, l*)
    return left, right, top, bottom, [c1, c2, c3, c4]


def _reduce(TX: SymTensor, TY: SymTensor, cutoff: float = 1e-12):
    """Isometry on the environment legs times the reduced tensor.

    Rank revealing: a plain QR of a rank-deficient tensor would add isometry
    columns fixed by round-off, and the truncation could then leak into them.
    """
    QX, SX, RX, _ = st.svd(TX, (U, L, D), (P, R), cutoff=cutoff, sU=-1)   # (u, l, d, x), (x, p, r)
    QY, SY, RY, _ = st.svd(TY, (U, D, R), (P, L), cutoff=cutoff, sU=-1)   # (u, d, r, y), (y, p, l)
    RX, RY = st.scale_leg(RX, 0, SX), st.scale_leg(RY, 0, SY)
    return QX, RX, QY, RY.transpose((2, 1, 0))       # RY -> (l, p, y)


def _assemble_metric(QX, QY, left, right, top, bottom) -> SymTensor:
    xx = st.tensordot(QX, left, ([1], [0]))                     # (u, d, x, l*)
    xx = st.tensordot(xx, QX.conj(), ([3], [1]))                # (u, d, x, u*, d*, x*)
    yy = st.tensordot(QY, right, ([2], [0]))                    # (u, d, y, r*)
    yy = st.tensordot(yy, QY.conj(), ([3], [2]))                # (u, d, y, u*, d*, y*)
    g = st.tensordot(xx, top, ([0, 3], [0, 1]))                 # (d, x, d*, x*, d2, d2*)
    g = st.tensordot(g, bottom, ([0, 2], [0, 1]))               # (x, x*, d2, d2*, u4, u4*)
    g = st.tensordot(g, yy, ([2, 3, 4, 5], [0, 3, 1, 4]))       # (x, x*, y, y*)
    return g.transpose((1, 3, 0, 2))


def _regularize(G: SymTensor, tol: float = 1e-10):
    """Hermitian part with negative eigenvalues removed; scaled to unit maximum."""
    w, V = st.eigh(G, (0, 1), (2, 3))
    allw = np.concatenate(list(w.values()))
    wmax = float(np.max(np.abs(allw)))
    if wmax == 0.0:
        raise ValueError("vanishing cluster metric")
    wmin = float(np.min(allw))
    clipped = {q: np.clip(v, 0.0, None) / wmax for q, v in w.items()}
    Gp = st.tensordot(st.scale_leg(V, 2, clipped), V.conj(), ([2], [2]))
    return Gp, wmin / wmax, wmin < -tol


def build_ntu_metric(state: IPEPSState, bond: str) -> NTUCluster:
    X, Y, turns = canonical(bond)
    frame = state.rotated(turns)
    TX, TY = frame[X], frame[Y]
    left, right, top, bottom, corners = _environment(TX, TY)
    QX, RX, QY, RY = _reduce(TX, TY)
    G = _assemble_metric(QX, QY, left, right, top, bottom)
    Gp, lam_min, flagged = _regularize(G)
    return NTUCluster(Gp, QX, QY, RX, RY, X, Y, turns, corners, lam_min, flagged)


# ---- truncation -----------------------------------------------------------------


def gate_tensor(gate) -> SymTensor:
    """Two-site gate as a symmetric tensor with legs ``(pX', pY', pX, pY)``."""
    if isinstance(gate, SymTensor):
        return gate
    if hasattr(gate, "tensor"):
        return gate.tensor.astype(complex)
    u = np.asarray(gate).reshape(2, 2, 2, 2)
    return SymTensor.from_dense(u.astype(complex), (PHYS, PHYS, PHYS.conj(), PHYS.conj()))


def _pair(RX, RY) -> SymTensor:
    return st.tensordot(RX, RY, ([2], [0]))                     # (x, pX, pY, y)


def _solve_x(G, theta, RY, floor):
    t = st.tensordot(G, RY, ([3], [2]))                         # (x*, y*, x, b, pY)
    K = st.tensordot(t, RY.conj(), ([1, 4], [2, 1])).transpose((0, 3, 1, 2))
    rhs = st.tensordot(G, theta, ([2, 3], [0, 3]))              # (x*, y*, pX, pY)
    rhs = st.tensordot(rhs, RY.conj(), ([1, 3], [2, 1]))        # (x*, pX, b*)
    Kinv = st.pinv_hermitian(K, (0, 1), (2, 3), floor)
    return st.tensordot(Kinv, rhs, ([2, 3], [0, 2])).transpose((0, 2, 1))


def _solve_y(G, theta, RX, floor):
    t = st.tensordot(G, RX, ([2], [0]))                         # (x*, y*, y, pX, b)
    K = st.tensordot(t, RX.conj(), ([0, 3], [0, 1])).transpose((0, 3, 1, 2))
    rhs = st.tensordot(G, theta, ([2, 3], [0, 3]))              # (x*, y*, pX, pY)
    rhs = st.tensordot(rhs, RX.conj(), ([0, 2], [0, 1]))        # (y*, pY, b*)
    Kinv = st.pinv_hermitian(K, (0, 1), (2, 3), floor)
    return st.tensordot(Kinv, rhs, ([2, 3], [0, 2])).transpose((1, 2, 0))


def relative_error(G, theta, RX, RY, n_theta=None) -> float:
    n_theta = metric_norm2(G, theta) if n_theta is None else n_theta
    diff = theta - _pair(RX, RY)
    return float(np.sqrt(max(metric_norm2(G, diff), 0.0) / n_theta))


def _split(theta, D_max, nU, sU, cutoff):
    Ut, S, V, err = st.svd(theta, (0, 1), (2, 3), max_dim=D_max, cutoff=cutoff, nU=nU, sU=sU)
    return st.scale_leg(Ut, 2, S, 0.5), st.scale_leg(V, 0, S, 0.5), err


def truncate_pair(cluster: NTUCluster, theta: SymTensor, D_max: int, tol: float = 1e-10,
                  max_iter: int = 100, floor: float = 1e-12, cutoff: float = 1e-14):
    """Best ``RX' RY'`` of bond dimension ``<= D_max`` in the cluster metric.

    Returns ``(RX', RY', delta, iterations)``.
    """
    G = cluster.G
    nU = cluster.RX.n
    sU = cluster.RX.legs[2].sig
    RX, RY, svd_err = _split(theta, D_max, nU, sU, cutoff)
    n_theta = metric_norm2(G, theta)
    if n_theta <= 0.0:
        raise ValueError("gated pair has vanishing metric norm")
    err = relative_error(G, theta, RX, RY, n_theta)
    it = 0
    if svd_err > cutoff:
        best = (err, RX, RY)
        for it in range(1, max_iter + 1):
            RX = _solve_x(G, theta, RY, floor)
            RY = _solve_y(G, theta, RX, floor)
            new = relative_error(G, theta, RX, RY, n_theta)
            if new < best[0]:
                improvement = (best[0] - new) / max(best[0], 1e-300)
                best = (new, RX, RY)
                if improvement < tol:
                    break
            else:
                break
        err, RX, RY = best
        # restore a balanced gauge on the new bond; the product is unchanged
        RX, RY, _ = _split(_pair(RX, RY), D_max, nU, sU, 0.0)
    return RX, RY, err, it


@dataclass
class GateInfo:
    delta: float = 0.0
    iterations: int = 0
    regularized: bool = False
    min_eig: float = 0.0
    bond_dim: int = 0


def apply_gate_ntu(state: IPEPSState, bond: str, gate, D_max: int, info: GateInfo = None,
                   tol: float = 1e-10, max_iter: int = 100, floor: float = 1e-12):
    """Apply a two-site gate on ``bond`` and truncate back to ``D_max``.

    Returns ``(state', delta_i)``; per-gate details go into ``info`` if given.
    """
    if D_max < 1:
        raise ValueError("D_max must be >= 1")
    cl = build_ntu_metric(state, bond)
    g = gate_tensor(gate)
    theta = _pair(cl.RX, cl.RY)                                 # (x, pX, pY, y)
    theta = st.tensordot(g, theta, ([2, 3], [1, 2])).transpose((2, 0, 1, 3))
    RX, RY, delta, it = truncate_pair(cl, theta, D_max, tol, max_iter, floor)
    Xn = st.tensordot(cl.QX, RX, ([3], [0])).transpose((3, 0, 1, 2, 4))
    Yn = st.tensordot(cl.QY, RY, ([3], [2])).transpose((4, 0, 3, 1, 2))
    Xn = Xn / Xn.max_abs()
    Yn = Yn / Yn.max_abs()
    frame = state.rotated(cl.turns).replace(**{cl.X: Xn, cl.Y: Yn})
    new = frame.rotated(-cl.turns)
    if info is not None:
        info.delta = delta
        info.iterations = it
        info.regularized = cl.regularized
        info.min_eig = cl.min_eig
        info.bond_dim = Xn.legs[R].dim
    return new, delta


def apply_field(state: IPEPSState, G: float, tau: float) -> IPEPSState:
    """Exact single-site layer ``exp(-i tau G/2 h Z)`` with ``h_A = +1``, ``h_B = -1``."""
    out = {}
    for X, h in (("A", 1), ("B", -1)):
        g = field_gate(G, h, tau).tensor
        out[X] = st.tensordot(g, state[X], ([1], [0]))
    return IPEPSState(out["A"], out["B"])


@dataclass
class TruncationLedger:
    """Per-gate relative errors ``delta_i`` and their running sum."""

    entries: list = field(default_factory=list)
    flagged: list = field(default_factory=list)

    def add(self, bond: str, delta: float, regularized: bool = False) -> None:
        if delta < 0:
            raise ValueError("negative truncation error")
        i = len(self.entries)
        self.entries.append((i, bond, float(delta)))
        if regularized:
            self.flagged.append(i)

    @property
    def total(self) -> float:
        return float(sum(e[2] for e in self.entries))

    def cumulative(self) -> np.ndarray:
        return np.cumsum([e[2] for e in self.entries]) if self.entries else np.zeros(0)

    def __len__(self):
        return len(self.entries)


__all__ = ["CornerFactor", "GateInfo", "MetricWarning", "NTUCluster", "TruncationLedger",
           "apply_field", "apply_gate_ntu", "build_ntu_metric", "canonical", "corner_svd1",
           "gate_tensor", "metric_norm2", "relative_error", "truncate_pair"]
