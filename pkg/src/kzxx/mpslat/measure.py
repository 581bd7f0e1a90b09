"""Correlators and checkpoints of snake MPS."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import symtensor as st
from ..records import CorrRecord
from .mps import MPSState, flip_matrix, sx_expectation
from .snake import SnakeMap


def measure_corr(mps: MPSState, lattice, t_r: float, s: float, t: float, D: int = 0,
                 rows=None, backend: str = "mps") -> list:
    """Staggered connected correlator along lattice rows.

    ``C(R) = (-1)^R [<S+_0 S-_R> + <S-_0 S+_R>]`` averaged over the pairs of
    each row at distance ``R``.  ``rows=None`` emits every row with its label.
    """
    snake = SnakeMap(lattice)
    F = flip_matrix(mps)
    rows = range(lattice.rows) if rows is None else rows
    out = []
    for y in rows:
        chain = [snake.chain_index(y, x) for x in range(lattice.cols)]
        onept = [sx_expectation(mps, c) for c in chain]
        if max(abs(v) for v in onept) > 1e-10:
            raise AssertionError("nonzero <X> in a charge-definite state")
        for R in range(1, lattice.cols):
            vals = [F[chain[x], chain[x + R]] - onept[x] * onept[x + R]
                    for x in range(lattice.cols - R)]
            out.append(CorrRecord(backend, t_r, s, t, R, float((-1) ** R * np.mean(vals)), D, y))
    return out


def central_rows(lattice) -> list:
    """Middle row, or the two middle rows on an even number of rows."""
    r = lattice.rows
    return [r // 2] if r % 2 else [r // 2 - 1, r // 2]


def save_mps(mps: MPSState, path, **meta) -> None:
    """Checkpoint directory: one SymTensor file per site plus ``manifest.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for k, A in enumerate(mps.tensors):
        with open(path / f"site_{k:04d}.symt", "wb") as f:
            st.save(A, f)
    info = {"n_sites": mps.n_sites, "center": mps.center, "bond_dims": mps.bond_dims}
    info.update(meta)
    (path / "manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True))


def load_mps(path):
    """Inverse of :func:`save_mps`; returns ``(mps, manifest dict)``."""
    path = Path(path)
    info = json.loads((path / "manifest.json").read_text())
    tensors = []
    for k in range(info["n_sites"]):
        with open(path / f"site_{k:04d}.symt", "rb") as f:
            tensors.append(st.load(f))
    return MPSState(tensors, info["center"]), info
