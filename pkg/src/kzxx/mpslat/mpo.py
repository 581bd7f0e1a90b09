"""Matrix-product operator of H(s) along the snake."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ID2, PHYS, SM, SP, SZ, ModelParams, ramp_values
from ..symtensor import Leg, SymTensor
from .snake import SnakeMap


@dataclass
class MPOHam:
    """MPO tensors ``W[k]`` with legs ``(w_left, p_out, p_in, w_right)``."""

    tensors: list
    s: float

    @property
    def bond_dims(self) -> list:
        return [W.legs[3].dim for W in self.tensors[:-1]]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    def __len__(self):
        return len(self.tensors)


def _channel_leg(charges, sig):
    counts = {}
    for q in charges:
        counts[q] = counts.get(q, 0) + 1
    return Leg.from_dict(counts, sig)


def _ordered(channels):
    """Dense positions of channels grouped by charge (stable inside a charge)."""
    order = sorted(range(len(channels)), key=lambda c: (channels[c][1], c))
    pos = {channels[c][0]: p for p, c in enumerate(order)}
    return pos, [channels[c][1] for c in order]


def mpo_from_terms(n_sites: int, onsite, hoppings, s: float = 0.0) -> MPOHam:
    """Build an MPO from ``onsite = [(k, 2x2 matrix)]`` and
    ``hoppings = [(i, j, coef)]`` meaning ``coef * (S+_i S-_j + S-_i S+_j)``.

    One channel per open hopping term; the channel layout depends only on the
    term list, not on the coefficients.
    """
    ops_on = [np.zeros((2, 2)) for _ in range(n_sites)]
    for k, m in onsite:
        ops_on[k] = ops_on[k] + m
    terms = []
    for i, j, c in hoppings:
        i, j = min(i, j), max(i, j)
        terms.append((i, j, c, SP, SM, 2))
        terms.append((i, j, c, SM, SP, -2))
    # channels on bond k (between site k and k+1)
    bonds = []
    for k in range(n_sites - 1):
        ch = [("start", 0), ("done", 0)]
        ch += [(("t", t), terms[t][5]) for t in range(len(terms)) if terms[t][0] <= k < terms[t][1]]
        bonds.append(ch)
    tensors = []
    for k in range(n_sites):
        left = [("start", 0)] if k == 0 else bonds[k - 1]
        right = [("done", 0)] if k == n_sites - 1 else bonds[k]
        lpos, lq = _ordered(left)
        rpos, rq = _ordered(right)
        W = np.zeros((len(left), 2, 2, len(right)), dtype=complex)

        def put(a, b, m):
            if a in lpos and b in rpos:
                W[lpos[a], :, :, rpos[b]] += m

        put("start", "start", ID2)
        put("done", "done", ID2)
        put("start", "done", ops_on[k])
        for t, (i, j, c, oa, ob, q) in enumerate(terms):
            if i == k:
                put("start", ("t", t), c * oa)
            elif i < k < j:
                put(("t", t), ("t", t), ID2)
            elif j == k:
                put(("t", t), "done", ob)
        legs = (_channel_leg(lq, 1), PHYS, PHYS.conj(), _channel_leg(rq, -1))
        tensors.append(SymTensor.from_dense(W, legs))
    return MPOHam(tensors, s)


def build_mpo(lattice, s: float, params: ModelParams) -> MPOHam:
    """MPO of ``H(s)`` for ``lattice`` in snake order."""
    snake = SnakeMap(lattice)
    J, G = ramp_values(params, s)
    h = snake.staggering()
    onsite = [(k, 0.5 * G * h[k] * SZ) for k in range(lattice.n_sites)]
    hops = [(i, j, J) for i, j in snake.bond_pairs()]
    return mpo_from_terms(lattice.n_sites, onsite, hops, s)
