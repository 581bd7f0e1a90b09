"""Corner transfer matrix environment of a two-sublattice iPEPS.

Each sublattice ``X`` owns the eight tensors surrounding one of its sites:
corners ``C[k][X]`` (k = top-left, top-right, bottom-right, bottom-left) and
edges ``T[k][X]`` (k = top, right, bottom, left).  All of them list their
legs clockwise around the site, so turning the picture by a quarter is a
relabelling ``k -> k + 1`` and one routine (the left move) serves all four
directions.

Leg orders:
    C_tl (down, right)   T_top   (left, down, right)
    C_tr (left, down)    T_right (up, left, down)
    C_br (up, left)      T_bot   (right, up, left)
    C_bl (right, up)     T_left  (down, right, up)

Double-layer tensors have legs ``(u, l, d, r)`` with ket and bra fused.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import symtensor as st
from ..model import SM, SP, SZ, PHYS, ramp_values
from ..records import CorrRecord
from ..symtensor import SymTensor
from .state import P, IPEPSState, other

SITES = ("A", "B")


class CTMConvergenceError(RuntimeError):
    def __init__(self, msg, metric):
        super().__init__(msg)
        self.metric = metric


def operator(matrix, n: int = 0) -> SymTensor:
    return SymTensor.from_dense(np.asarray(matrix, dtype=complex), (PHYS, PHYS.conj()), n)


SPLUS = operator(SP, 2)
SMINUS = operator(SM, -2)
SIGMA_Z = operator(SZ)


def double_layer(T: SymTensor, op: SymTensor = None) -> SymTensor:
    """``sum_pp' conj(T[p]) op[p, p'] T[p']`` with legs (u, l, d, r) fused ket/bra."""
    ket = T if op is None else st.tensordot(op, T, ([1], [0]))
    d = st.tensordot(ket, T.conj(), ([P], [P]))                # (u,l,d,r,u*,l*,d*,r*)
    return st.fuse_legs(d, [(0, 4), (1, 5), (2, 6), (3, 7)])


def _traced(a: SymTensor, axes) -> SymTensor:
    """Close the given double-layer legs with the ket-bra delta; other legs keep order."""
    keep = [i for i in range(a.ndim) if i not in axes]
    out = a
    for ax in sorted(axes, reverse=True):
        out = st.tensordot(out, st.trace_vector(out.legs[ax], out.dtype), ([ax], [0]))
    assert out.ndim == len(keep)
    return out


def _rot(a: SymTensor) -> SymTensor:
    # quarter turn counter-clockwise: new (u, l, d, r) = old (r, u, l, d)
    return a.transpose((3, 0, 1, 2))


def _unit(t: SymTensor) -> SymTensor:
    m = t.max_abs()
    return t / m if m > 0 else t


@dataclass
class CTMEnv:
    C: list
    T: list
    chi: int
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def copy(self) -> "CTMEnv":
        return CTMEnv([dict(c) for c in self.C], [dict(t) for t in self.T], self.chi,
                      list(self.history), self.iterations, self.converged)

    def rotated(self, turns: int = 1) -> "CTMEnv":
        C, T = self.C, self.T
        for _ in range(turns % 4):
            C = [C[(k + 1) % 4] for k in range(4)]
            T = [T[(k + 1) % 4] for k in range(4)]
        return CTMEnv(C, T, self.chi, self.history, self.iterations, self.converged)

    def spectra(self) -> list:
        out = []
        for k in range(4):
            for X in SITES:
                _, S, _, _ = st.svd(self.C[k][X], (0,), (1,), cutoff=0.0)
                s = np.sort(np.concatenate(list(S.values())))[::-1]
                out.append(s / s.sum())
        return out


def initial_env(doubles: dict, chi: int) -> CTMEnv:
    C = [{}, {}, {}, {}]
    T = [{}, {}, {}, {}]
    for X in SITES:
        a, b = doubles[X], doubles[other(X)]
        C[0][X] = _traced(a, (0, 1))                                # (d, r)
        C[1][X] = _traced(a, (0, 3))                                # (l, d)
        C[2][X] = _traced(a, (2, 3))                                # (u, l)
        C[3][X] = _traced(a, (1, 2)).transpose((1, 0))              # (r, u)
        T[0][X] = _traced(b, (0,))                                  # (l, d, r)
        T[1][X] = _traced(b, (3,))                                  # (u, l, d)
        T[2][X] = _traced(b, (2,)).transpose((2, 0, 1))             # (r, u, l)
        T[3][X] = _traced(b, (1,)).transpose((1, 2, 0))             # (d, r, u)
    for k in range(4):
        for X in SITES:
            C[k][X] = _unit(C[k][X])
            T[k][X] = _unit(T[k][X])
    return CTMEnv(C, T, chi)


# ---- one left move ----------------------------------------------------------------


def _q1(a, C, T, X):
    x = st.tensordot(C[0][X], T[0][X], ([1], [0]))              # (cd, td, tr)
    x = st.tensordot(x, T[3][X], ([0], [2]))                    # (td, tr, ld, lr)
    x = st.tensordot(x, a, ([0, 3], [0, 1]))                    # (tr, ld, d, r)
    return x.transpose((1, 2, 0, 3))                            # (ld, d | tr, r)


def _q2(a, C, T, X):
    x = st.tensordot(T[0][X], C[1][X], ([2], [0]))              # (tl, td, cd)
    x = st.tensordot(x, T[1][X], ([2], [0]))                    # (tl, td, rl, rd)
    x = st.tensordot(x, a, ([1, 2], [0, 3]))                    # (tl, rd, l, d)
    return x.transpose((0, 2, 3, 1))                            # (tl, l | d, rd)


def _q3(a, C, T, X):
    x = st.tensordot(T[1][X], C[2][X], ([2], [0]))              # (ru, rl, cl)
    x = st.tensordot(x, T[2][X], ([2], [0]))                    # (ru, rl, bu, bl)
    x = st.tensordot(x, a, ([1, 2], [3, 2]))                    # (ru, bl, u, l)
    return x.transpose((0, 2, 3, 1))                            # (ru, u | l, bl)


def _q4(a, C, T, X):
    x = st.tensordot(T[2][X], C[3][X], ([2], [0]))              # (br, bu, cu)
    x = st.tensordot(x, T[3][X], ([2], [0]))                    # (br, bu, lr, lu)
    x = st.tensordot(x, a, ([1, 2], [2, 1]))                    # (br, lu, u, r)
    return x.transpose((1, 2, 3, 0))                            # (lu, u | r, br)


def _projectors(a, C, T, chi, cutoff):
    """Projector pairs for the cut below a site of each sublattice in the left column.

    ``P[X]`` (cut legs of the upper half, k) is attached below the cut,
    ``Pt[X]`` (k, cut legs of the lower half) above it.
    """
    q = {f: {X: fn(a[X], C, T, X) for X in SITES}
         for f, fn in (("1", _q1), ("2", _q2), ("3", _q3), ("4", _q4))}
    P, Pt, trunc = {}, {}, 0.0
    for X in SITES:
        Y = other(X)
        upper = st.tensordot(q["1"][X], q["2"][Y], ([2, 3], [0, 1]))   # (ld, d, d', rd')
        lower = st.tensordot(q["4"][Y], q["3"][X], ([2, 3], [2, 3]))   # (lu, u, ru', u')
        M = st.tensordot(lower, upper, ([0, 1], [0, 1]))               # (ru', u', d', rd')
        M = M / M.max_abs()
        W, S, Vh, err = st.svd(M, (0, 1), (2, 3), max_dim=chi, cutoff=cutoff)
        trunc = max(trunc, err)
        P[X] = st.scale_leg(st.tensordot(upper, Vh.conj(), ([2, 3], [1, 2])), 2, S, -0.5)
        Pt[X] = st.scale_leg(st.tensordot(W.conj(), lower, ([0, 1], [2, 3])), 0, S, -0.5)
    return P, Pt, trunc


def left_move(a: dict, env: CTMEnv, cutoff: float = 1e-10) -> CTMEnv:
    C, T = env.C, env.T
    P, Pt, _ = _projectors(a, C, T, env.chi, cutoff)
    newC0, newT3, newC3 = {}, {}, {}
    for X in SITES:
        Y = other(X)
        ct = st.tensordot(C[0][X], T[0][X], ([1], [0]))                 # (cd, td, tr)
        newC0[Y] = _unit(st.tensordot(Pt[Y], ct, ([1, 2], [0, 1])))     # (k, tr)
        ta = st.tensordot(T[3][X], a[X], ([1], [1]))                    # (ld, lu, u, d, r)
        ta = st.tensordot(ta, P[Y], ([1, 2], [0, 1]))                   # (ld, d, r, kup)
        ta = st.tensordot(Pt[X], ta, ([1, 2], [0, 1]))                  # (kdown, r, kup)
        newT3[Y] = _unit(ta)
        cb = st.tensordot(C[3][X], T[2][X], ([0], [2]))                 # (cu, br, bu)
        newC3[Y] = _unit(st.tensordot(cb, P[X], ([0, 2], [0, 1])))      # (br, k)
    C = [newC0, C[1], C[2], newC3]
    T = [T[0], T[1], T[2], newT3]
    return CTMEnv(C, T, env.chi, env.history, env.iterations, env.converged)


def _spectrum_change(old, new) -> float:
    diff = 0.0
    for a, b in zip(old, new):
        n = max(len(a), len(b))
        a = np.pad(a, (0, n - len(a)))
        b = np.pad(b, (0, n - len(b)))
        diff = max(diff, float(np.abs(a - b).sum()))
    return diff


def ctmrg(state: IPEPSState, chi: int, tol: float = 1e-9, max_iter: int = 200,
          env: CTMEnv = None, min_iter: int = 1, raise_on_failure: bool = True) -> CTMEnv:
    """Iterate left moves in all four directions until the corner spectra settle.

    ``env`` warm-starts the iteration (its ``chi`` is replaced).
    """
    doubles = {X: double_layer(state[X]) for X in SITES}
    if env is None or not _compatible(env, doubles):
        env = initial_env(doubles, chi)
    else:
        env = env.copy()
        env.chi = chi
    env.history = []
    env.converged = False
    old = env.spectra()
    for it in range(1, max_iter + 1):
        a = dict(doubles)
        for _ in range(4):
            env = left_move(a, env)
            env = env.rotated(1)
            a = {X: _rot(t) for X, t in a.items()}
        new = env.spectra()
        change = _spectrum_change(old, new)
        old = new
        env.history.append(change)
        env.iterations = it
        if change < tol and it >= min_iter:
            env.converged = True
            return env
    if raise_on_failure:
        raise CTMConvergenceError(f"CTMRG not converged after {max_iter} iterations; "
                                  f"last change {env.history[-1]:.3e}", env.history[-1])
    return env


def _compatible(env: CTMEnv, doubles) -> bool:
    try:
        for X in SITES:
            if env.T[0][X].legs[1] != doubles[X].legs[0].conj():
                return False
            if env.T[3][X].legs[1] != doubles[X].legs[1].conj():
                return False
    except (KeyError, IndexError):
        return False
    return True


# ---- measurements -------------------------------------------------------------------


def _left_edge(env: CTMEnv, X):
    v = st.tensordot(env.C[0][X], env.T[3][X], ([0], [2]))           # (cr, ld, lr)
    return st.tensordot(v, env.C[3][X], ([1], [1]))                  # (top, D, bottom)


def _absorb(v, env: CTMEnv, X, a):
    v = st.tensordot(v, env.T[0][X], ([0], [0]))                      # (D, bot, td, tr)
    v = st.tensordot(v, a, ([0, 2], [1, 0]))                          # (bot, tr, d, r)
    v = st.tensordot(v, env.T[2][X], ([0, 2], [2, 1]))                # (tr, r, br)
    return v


def _right_edge(env: CTMEnv, X):
    v = st.tensordot(env.C[1][X], env.T[1][X], ([1], [0]))           # (cl, rl, rd)
    return st.tensordot(v, env.C[2][X], ([2], [0]))                  # (top, D, bottom)


def _close(v, env, X) -> complex:
    return st.tensordot(v, _right_edge(env, X), ([0, 1, 2], [0, 1, 2])).item() \
        if v.n == 0 else 0.0


def expectation_1site(env: CTMEnv, state: IPEPSState, X: str, op: SymTensor) -> complex:
    a = double_layer(state[X])
    ao = double_layer(state[X], op)
    left = _left_edge(env, X)
    num = _close(_absorb(left, env, X, ao), env, X)
    den = _close(_absorb(left, env, X, a), env, X)
    return num / den


def row_correlations(env: CTMEnv, state: IPEPSState, X: str, R_max: int, op1, op2) -> np.ndarray:
    """``<op1_0 op2_R>`` for R = 1..R_max along a row starting on sublattice ``X``."""
    plain = {Y: double_layer(state[Y]) for Y in SITES}
    v_op = _absorb(_left_edge(env, X), env, X, double_layer(state[X], op1))
    v_id = _absorb(_left_edge(env, X), env, X, plain[X])
    out = []
    Y = X
    for _ in range(R_max):
        Y = other(Y)
        op2d = double_layer(state[Y], op2)
        num = _close(_absorb(v_op, env, Y, op2d), env, Y)
        den = _close(_absorb(v_id, env, Y, plain[Y]), env, Y)
        out.append(num / den)
        scale = v_id.max_abs()
        v_op = _absorb(v_op, env, Y, plain[Y]) / scale
        v_id = _absorb(v_id, env, Y, plain[Y]) / scale
    return np.array(out)


def correlator(env: CTMEnv, state: IPEPSState, R_max: int, t_r: float = 0.0, s: float = 0.0,
               t: float = 0.0, D: int = None) -> list:
    """Staggered connected correlator along a row, averaged over the two sublattices."""
    D = state.D if D is None else D
    vals = []
    for X in SITES:
        one = expectation_1site(env, state, X, SPLUS)
        assert abs(one) < 1e-10, "charged one-point function must vanish"
        c = row_correlations(env, state, X, R_max, SPLUS, SMINUS)
        # <S+ S-> + <S- S+> = 2 Re <S+ S->; the one-point product vanishes by charge
        vals.append(2.0 * c.real - 2.0 * (one * np.conj(one)).real)
    mean = np.mean(vals, axis=0)
    return [CorrRecord("ipeps", float(t_r), float(s), float(t), R,
                       float((-1) ** R * mean[R - 1]), int(D)) for R in range(1, R_max + 1)]


def bond_flips(env: CTMEnv, state: IPEPSState) -> dict:
    """``2 Re <S+_i S-_j>`` on the four bond classes."""
    out = {}
    for X in SITES:
        out["h_" + X + other(X)] = float(2 * row_correlations(env, state, X, 1, SPLUS,
                                                              SMINUS)[0].real)
    rot_env = env.rotated(1)
    rot_state = state.rotated(1)
    for X in SITES:
        # after a counter-clockwise turn the site below X sits to its right
        out["v_" + X + other(X)] = float(2 * row_correlations(rot_env, rot_state, X, 1, SPLUS,
                                                              SMINUS)[0].real)
    return out


def energy_per_site(env: CTMEnv, state: IPEPSState, s: float, params) -> float:
    J, G = ramp_values(params, s)
    flips = bond_flips(env, state)
    zA = expectation_1site(env, state, "A", SIGMA_Z).real
    zB = expectation_1site(env, state, "B", SIGMA_Z).real
    return 0.5 * (J * sum(flips.values()) + 0.5 * G * (zA - zB))
