"""Finite matrix-product states with U(1) charge-carrying virtual legs.

Site tensors have legs ``(left, phys, right)`` with directions ``(+1, +1, -1)``
and zero total charge, so the charge on a right leg is the magnetization
accumulated from the left end of the chain.
"""
from __future__ import annotations

import math

import numpy as np

from .. import symtensor as st
from ..model import PHYS, SM, SP, SZ
from ..symtensor import Leg, SymTensor


def _boundary(sig, q=0):
    return Leg(sig, (int(q),), (1,))


def qr_right(A):
    """``A = Q C`` with ``Q (l, p, b)`` left-isometric and ``C (b, r)``.

    Zero blocks are filled first so that padded bond sectors survive.
    """
    return st.qr(A.filled(), (0, 1), (2,))


def qr_left(A):
    """``A = C Q`` with ``Q (b, p, r)`` right-isometric; returns ``(Q, C)``
    where ``C`` has legs ``(l, b)``."""
    Q, C = st.qr(A.filled(), (1, 2), (0,), sQ=1)
    return Q.transpose((2, 0, 1)), C


def leg_charges(leg: Leg) -> np.ndarray:
    """Charge of every dense index along ``leg``."""
    return np.repeat(np.asarray(leg.charges, dtype=np.int64), leg.dims)


def full_bond_dims(n_sites: int, charge: int = 0) -> list:
    """Largest useful bond sectors ``{q: dim}`` after each site of a chain in
    the sector of total charge ``charge``."""
    out = []
    for k in range(1, n_sites):
        m = n_sites - k
        dims = {}
        for u in range(k + 1):
            q = 2 * u - k
            rest = charge - q
            if (rest + m) % 2 or abs(rest) > m:
                continue
            d = min(math.comb(k, u), math.comb(m, (rest + m) // 2))
            if d:
                dims[q] = d
        out.append(dims)
    return out


class MPSState:
    """Chain of site tensors plus the position of the orthogonality center.

    ``center`` is ``None`` when no canonical form is guaranteed.
    """

    def __init__(self, tensors, center=None):
        self.tensors = list(tensors)
        self.center = center

    # ---- construction -------------------------------------------------------

    @classmethod
    def product(cls, config) -> "MPSState":
        """Product state; ``config[k]`` is the local index (0 down, 1 up)."""
        tensors = []
        q = 0
        for b in config:
            qp = 2 * int(b) - 1
            blk = np.ones((1, 1, 1), dtype=complex)
            legs = (_boundary(1, q), PHYS, _boundary(-1, q + qp))
            tensors.append(SymTensor(legs, {(q, qp, q + qp): blk}, 0, complex))
            q += qp
        return cls(tensors, center=0)

    @classmethod
    def random(cls, n_sites: int, D: int, charge: int = 0, rng=None) -> "MPSState":
        """Random normalized state with bond sectors proportional to the full ones."""
        rng = np.random.default_rng(rng)
        dims = []
        for full in full_bond_dims(n_sites, charge):
            tot = sum(full.values())
            if tot <= D:
                dims.append(dict(full))
                continue
            alloc = {q: max(1, int(d * D / tot)) for q, d in full.items()}
            while sum(alloc.values()) > D:
                q = max(alloc, key=lambda c: (alloc[c], -abs(c)))
                if alloc[q] == 1:
                    del alloc[q]
                else:
                    alloc[q] -= 1
            dims.append(alloc)
        legs = [_boundary(1, 0)] + [Leg.from_dict(d, 1) for d in dims] + [_boundary(1, charge)]
        tensors = []
        for k in range(n_sites):
            t = SymTensor.random((legs[k], PHYS, legs[k + 1].conj()), 0, rng, complex)
            tensors.append(t)
        psi = cls(tensors)
        psi.canonicalize(0)
        psi.normalize()
        return psi

    def copy(self) -> "MPSState":
        return MPSState(list(self.tensors), self.center)

    # ---- structure ----------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def charge(self) -> int:
        return self.tensors[-1].legs[2].charges[0]

    @property
    def bond_dims(self) -> list:
        return [A.legs[2].dim for A in self.tensors[:-1]]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    def bond_sectors(self, k: int) -> dict:
        leg = self.tensors[k].legs[2]
        return dict(zip(leg.charges, leg.dims))

    # ---- gauge --------------------------------------------------------------

    def _shift_right(self, k):
        Q, R = qr_right(self.tensors[k])
        self.tensors[k] = Q
        self.tensors[k + 1] = st.tensordot(R, self.tensors[k + 1], ([1], [0]))

    def _shift_left(self, k):
        Q, R = qr_left(self.tensors[k])
        self.tensors[k] = Q
        self.tensors[k - 1] = st.tensordot(self.tensors[k - 1], R, ([2], [1]))

    def move_center(self, k: int) -> None:
        if self.center is None:
            self.canonicalize(k)
            return
        while self.center < k:
            self._shift_right(self.center)
            self.center += 1
        while self.center > k:
            self._shift_left(self.center)
            self.center -= 1

    def canonicalize(self, center: int = 0) -> None:
        """Bring every tensor left of ``center`` to left-isometric and every
        tensor right of it to right-isometric form."""
        for k in range(center):
            self._shift_right(k)
        for k in range(self.n_sites - 1, center, -1):
            self._shift_left(k)
        self.center = center

    def is_canonical(self, tol: float = 1e-10) -> bool:
        if self.center is None:
            return False
        for k, A in enumerate(self.tensors):
            if k == self.center:
                continue
            if k < self.center:
                g = st.tensordot(A.conj(), A, ([0, 1], [0, 1]))
            else:
                g = st.tensordot(A, A.conj(), ([1, 2], [1, 2]))
            eye = np.eye(g.shape[0])
            if np.abs(g.to_dense() - eye).max(initial=0.0) > tol:
                return False
        return True

    def norm(self) -> float:
        if self.center is not None:
            return self.tensors[self.center].norm()
        return math.sqrt(abs(overlap(self, self)))

    def normalize(self) -> float:
        nrm = self.norm()
        if self.center is None:
            self.tensors[0] = self.tensors[0] / nrm
        else:
            self.tensors[self.center] = self.tensors[self.center] / nrm
        return nrm

    # ---- bond padding -------------------------------------------------------

    def pad_bonds(self, D: int, reference=None, tol: float = 1e-8) -> None:
        """Enlarge every bond to ``min(D, full)`` with zero-weight basis states.

        The represented state is unchanged.  New left-block basis vectors are
        chosen greedily among configurations closest (in spin flips) to
        ``reference``; with ``D`` at or above the full sector dimension the
        bonds become complete and one-site projected evolution is exact.
        """
        n = self.n_sites
        ref = list(reference) if reference is not None else [None] * n
        full = full_bond_dims(n, self.charge)
        self.canonicalize(0)
        lscore = np.zeros(1, dtype=np.int64)
        for k in range(n - 1):
            Q, R = qr_right(self.tensors[k])
            lleg, bleg = Q.legs[0], Q.legs[2]
            qd = Q.to_dense().reshape(lleg.dim * 2, bleg.dim)
            rch = (leg_charges(lleg)[:, None] + leg_charges(PHYS)[None, :]).ravel()
            pflip = np.array([0, 0]) if ref[k] is None else np.array([int(ref[k] != 0), int(ref[k] != 1)])
            rscore = (lscore[:, None] + pflip[None, :]).ravel()
            bch = leg_charges(bleg)
            cols = {q: [qd[:, bch == q][rch == q]] for q in full[k]}
            scores = {q: [np.zeros(int(np.sum(bch == q)), dtype=np.int64)] for q in full[k]}
            count = {q: int(np.sum(bch == q)) for q in full[k]}
            budget = max(D - sum(count.values()), 0)
            cand = sorted((int(rscore[i]), int(rch[i]), i) for i in range(len(rch))
                          if rch[i] in full[k])
            for sc, q, i in cand:
                if budget == 0:
                    break
                if count[q] >= full[k][q]:
                    continue
                rows = np.flatnonzero(rch == q)
                v = np.zeros(len(rows), dtype=complex)
                v[np.searchsorted(rows, i)] = 1.0
                basis = np.hstack(cols[q]) if cols[q] else np.zeros((len(rows), 0))
                for _ in range(2):
                    v = v - basis @ (basis.conj().T @ v)
                nv = np.linalg.norm(v)
                if nv < tol:
                    continue
                cols[q].append((v / nv)[:, None])
                scores[q].append(np.array([sc]))
                count[q] += 1
                budget -= 1
            new_leg = Leg.from_dict({q: c for q, c in count.items() if c}, -1)
            qnew = np.zeros((lleg.dim * 2, new_leg.dim), dtype=complex)
            rd = R.to_dense()
            rnew = np.zeros((new_leg.dim, rd.shape[1]), dtype=complex)
            new_scores = []
            for q in new_leg.charges:
                off = new_leg.offsets[q]
                block = np.hstack(cols[q])
                qnew[np.ix_(np.flatnonzero(rch == q), np.arange(off, off + block.shape[1]))] = block
                old = np.flatnonzero(bch == q)
                rnew[off:off + len(old)] = rd[old]
                new_scores.append(np.concatenate(scores[q]))
            lscore = np.concatenate(new_scores) if new_scores else np.zeros(0, dtype=np.int64)
            Qt = SymTensor.from_dense(qnew.reshape(lleg.dim, 2, new_leg.dim), (lleg, PHYS, new_leg))
            Rt = SymTensor.from_dense(rnew, (new_leg.conj(), R.legs[1]))
            self.tensors[k] = Qt
            self.tensors[k + 1] = st.tensordot(Rt, self.tensors[k + 1], ([1], [0]))
        self.center = n - 1

    # ---- dense view ---------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        """Amplitudes in the full ``2**N`` basis, chain site 0 most significant."""
        v = self.tensors[0].to_dense()[0]
        for A in self.tensors[1:]:
            v = np.tensordot(v, A.to_dense(), axes=([-1], [0]))
        return v.reshape(-1)


# ---- contractions -------------------------------------------------------------


def overlap(bra: MPSState, ket: MPSState) -> complex:
    """``<bra|ket>``."""
    if bra.charge != ket.charge:
        return 0.0
    E = SymTensor((_boundary(-1), _boundary(1)), {(0, 0): np.ones((1, 1))}, 0)
    for a, b in zip(ket.tensors, bra.tensors):
        E = st.tensordot(E, a, ([0], [0]))
        E = st.tensordot(E, b.conj(), ([0, 1], [0, 1]))
    return complex(sum(blk.sum() for blk in E.blocks.values()))


def left_env_start(mpo_tensor) -> SymTensor:
    wl = mpo_tensor.legs[0]
    return SymTensor((_boundary(-1), wl.conj(), _boundary(1)),
                     {(0, wl.charges[0], 0): np.ones((1, 1, 1))}, 0)


def right_env_start(mps: MPSState, mpo_tensor) -> SymTensor:
    q = mps.charge
    wr = mpo_tensor.legs[3]
    return SymTensor((_boundary(1, q), wr.conj(), _boundary(-1, q)),
                     {(q, wr.charges[0], q): np.ones((1, 1, 1))}, 0)


def extend_left(L, A, W) -> SymTensor:
    """Left environment ``(ket, mpo, bra)`` grown by one site."""
    x = st.tensordot(L, A, ([0], [0]))              # (w, l', p, r)
    x = st.tensordot(x, W, ([0, 2], [0, 2]))        # (l', r, p', w)
    return st.tensordot(x, A.conj(), ([0, 2], [0, 1]))


def extend_right(R, A, W) -> SymTensor:
    """Right environment ``(ket, mpo, bra)`` grown by one site."""
    x = st.tensordot(A, R, ([2], [0]))              # (l, p, w, r')
    x = st.tensordot(x, W, ([1, 2], [2, 3]))        # (l, r', w, p')
    return st.tensordot(x, A.conj(), ([1, 3], [2, 1]))


def expectation(mps: MPSState, mpo) -> float:
    """``<psi|H|psi> / <psi|psi>`` for an MPO."""
    L = left_env_start(mpo.tensors[0])
    for A, W in zip(mps.tensors, mpo.tensors):
        L = extend_left(L, A, W)
    val = sum(blk.sum() for blk in L.blocks.values())
    return float(np.real(val)) / mps.norm() ** 2


def mpo_matrix_element(bra: MPSState, mpo, ket: MPSState) -> complex:
    """``<bra|H|ket>`` without normalization."""
    if bra.charge != ket.charge:
        return 0.0
    L = left_env_start(mpo.tensors[0])
    for a, b, W in zip(ket.tensors, bra.tensors, mpo.tensors):
        x = st.tensordot(L, a, ([0], [0]))
        x = st.tensordot(x, W, ([0, 2], [0, 2]))
        L = st.tensordot(x, b.conj(), ([0, 2], [0, 1]))
    return complex(sum(blk.sum() for blk in L.blocks.values()))


# ---- local observables ----------------------------------------------------------


def _op(mat, charge=0) -> SymTensor:
    return SymTensor.from_dense(mat, (PHYS, PHYS.conj()), n=charge)


_SZ, _SP, _SM = _op(SZ), _op(SP, 2), _op(SM, -2)


def _norm_envs(mps: MPSState):
    """Identity transfer environments from the left and from the right."""
    n = mps.n_sites
    left = [None] * (n + 1)
    right = [None] * (n + 1)
    left[0] = SymTensor((_boundary(-1), _boundary(1)), {(0, 0): np.ones((1, 1))}, 0)
    for k, A in enumerate(mps.tensors):
        x = st.tensordot(left[k], A, ([0], [0]))
        left[k + 1] = st.tensordot(x, A.conj(), ([0, 1], [0, 1]))
    q = mps.charge
    right[n] = SymTensor((_boundary(1, q), _boundary(-1, q)), {(q, q): np.ones((1, 1))}, 0)
    for k in range(n - 1, -1, -1):
        A = mps.tensors[k]
        x = st.tensordot(A, right[k + 1], ([2], [0]))
        right[k] = st.tensordot(x, A.conj(), ([1, 2], [1, 2]))
    return left, right


def _close(E, R) -> complex:
    return complex(st.tensordot(E, R, ([0, 1], [0, 1])).item()) if E.n == -R.n else 0j


def _apply_site(E, A, op=None):
    x = st.tensordot(E, A, ([0], [0]))              # (bra l, p, r)
    if op is not None:
        x = st.tensordot(x, op, ([1], [1])).transpose((0, 2, 1))
    return st.tensordot(x, A.conj(), ([0, 1], [0, 1]))


def sz_profile(mps: MPSState) -> np.ndarray:
    left, right = _norm_envs(mps)
    nrm = _close(left[mps.n_sites], right[mps.n_sites]).real
    out = []
    for k, A in enumerate(mps.tensors):
        out.append(_close(_apply_site(left[k], A, _SZ), right[k + 1]).real / nrm)
    return np.array(out)


def sx_expectation(mps: MPSState, k: int) -> float:
    """``<X_k>``; the charged insertion has no allowed closing, so this is 0."""
    left, right = _norm_envs(mps)
    nrm = _close(left[mps.n_sites], right[mps.n_sites]).real
    val = 0j
    for op in (_SP, _SM):
        val += _close(_apply_site(left[k], mps.tensors[k], op), right[k + 1])
    return float(val.real / nrm)


def flip_matrix(mps: MPSState) -> np.ndarray:
    """``F[i, j] = <S+_i S-_j + S-_i S+_j>`` for all chain pairs ``i != j``."""
    n = mps.n_sites
    left, right = _norm_envs(mps)
    nrm = _close(left[n], right[n]).real
    F = np.zeros((n, n))
    for i in range(n - 1):
        E = _apply_site(left[i], mps.tensors[i], _SP)
        for j in range(i + 1, n):
            val = _close(_apply_site(E, mps.tensors[j], _SM), right[j + 1])
            F[i, j] = F[j, i] = 2 * val.real / nrm
            if j < n - 1:
                E = _apply_site(E, mps.tensors[j])
    return F
