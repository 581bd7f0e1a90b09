"""Two-sublattice iPEPS on the infinite square lattice.

Tensors carry legs ``(p, u, l, d, r)``.  ``A`` sits on sites with even
``x + y`` (staggered field ``h = +1``), ``B`` on the odd ones, so every
neighbour of an ``A`` is a ``B``.  Virtual legs of ``A`` point out of ``A``
(``sig = +1``) and the matching legs of ``B`` point in; ``A`` carries charge
``-1`` and ``B`` charge ``+1`` so that a unit cell is neutral.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import symtensor as st
from ..model import PHYS
from ..symtensor import Leg, SymTensor

P, U, L, D, R = range(5)

#: bond id -> ((site, leg), (site, leg)); the first site is left of / above the second
BONDS = {
    "h_AB": (("A", R), ("B", L)),
    "h_BA": (("B", R), ("A", L)),
    "v_AB": (("A", D), ("B", U)),
    "v_BA": (("B", D), ("A", U)),
}

# 90 degree counter-clockwise turn of the picture: new (u, l, d, r) = old (r, u, l, d)
ROT_CCW = (0, 4, 1, 2, 3)
ROT_CW = (0, 2, 3, 4, 1)


def other(X: str) -> str:
    return "B" if X == "A" else "A"


def charge_of(X: str) -> int:
    return -1 if X == "A" else 1


@dataclass
class IPEPSState:
    A: SymTensor
    B: SymTensor

    @classmethod
    def neel(cls, dtype=complex) -> "IPEPSState":
        """Product state with ``A`` down and ``B`` up (ground state at ``J = 0``)."""
        triv = Leg(1, (0,), (1,))
        out = {}
        for X in ("A", "B"):
            q = charge_of(X)
            v = triv if X == "A" else triv.conj()
            legs = (PHYS, v, v, v, v)
            out[X] = SymTensor(legs, {(q, 0, 0, 0, 0): np.ones((1,) * 5, dtype=dtype)}, q)
        return cls(out["A"], out["B"])

    @classmethod
    def random(cls, D: int, rng=None, charges=(-1, 0, 1), dtype=complex) -> "IPEPSState":
        """Random symmetric tensors with ``D`` spread evenly over ``charges``."""
        rng = np.random.default_rng(rng)
        counts = {q: D // len(charges) for q in charges}
        for q in charges[: D % len(charges)]:
            counts[q] += 1
        v = Leg.from_dict({q: d for q, d in counts.items() if d}, 1)
        A = SymTensor.random((PHYS, v, v, v, v), -1, rng, dtype)
        B = SymTensor.random((PHYS,) + (v.conj(),) * 4, 1, rng, dtype)
        return cls(A / A.norm(), B / B.norm())

    def __getitem__(self, X: str) -> SymTensor:
        return self.A if X == "A" else self.B

    def replace(self, **kw) -> "IPEPSState":
        return IPEPSState(kw.get("A", self.A), kw.get("B", self.B))

    def copy(self) -> "IPEPSState":
        return IPEPSState(self.A.copy(), self.B.copy())

    def rotated(self, turns: int = 1) -> "IPEPSState":
        """The same state seen after ``turns`` counter-clockwise quarter turns."""
        A, B = self.A, self.B
        for _ in range(turns % 4):
            A, B = A.transpose(ROT_CCW), B.transpose(ROT_CCW)
        return IPEPSState(A, B)

    def bond_dim(self, bond: str) -> int:
        (X, leg), _ = BONDS[bond]
        return self[X].legs[leg].dim

    @property
    def bond_dims(self) -> dict:
        return {b: self.bond_dim(b) for b in BONDS}

    @property
    def D(self) -> int:
        return max(self.bond_dims.values())

    def check(self):
        """Leg compatibility across every bond and the sublattice charges."""
        for (X, lx), (Y, ly) in BONDS.values():
            if self[X].legs[lx] != self[Y].legs[ly].conj():
                raise st.LegMismatchError(f"bond {X}{lx}-{Y}{ly} legs disagree")
        if self.A.n != -1 or self.B.n != 1:
            raise st.ChargeError("sublattice charges must be A=-1, B=+1")

    def normalized(self) -> "IPEPSState":
        return IPEPSState(self.A / self.A.max_abs(), self.B / self.B.max_abs())


def save_state(state: IPEPSState, path, **meta) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for X in ("A", "B"):
        with open(path / f"{X}.symt", "wb") as f:
            st.save(state[X], f)
    (path / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_state(path):
    path = Path(path)
    tens = {}
    for X in ("A", "B"):
        with open(path / f"{X}.symt", "rb") as f:
            tens[X] = st.load(f)
    meta = json.loads((path / "meta.json").read_text())
    return IPEPSState(tens["A"], tens["B"]), meta
