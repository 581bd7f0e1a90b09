"""Plain record types exchanged between backends, the store and the analysis."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class CorrRecord:
    """One sample of the staggered connected correlator C(t, R).

    ``row`` is the lattice row the pairs were taken from on finite lattices,
    ``-1`` for the infinite lattice.
    """

    backend: str
    t_r: float
    s: float
    t: float
    R: int
    C: float
    D: int
    row: int = -1

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EnergyRecord:
    t_r: float
    s: float
    E: float
    E_GS: float
    dE_per_site: float
    backend: str = ""
    D: int = 0


@dataclass(frozen=True)
class ErrorRecord:
    """Accumulated truncation error after one Trotter step."""

    t_r: float
    s: float
    delta: float
    D: int
    D_max: int = 0


@dataclass(frozen=True)
class FitRecord:
    t_r: float
    s: float
    xi: float
    xi_err: float
    rmin: int
    rmax: int
    residual: float
    backend: str = ""
    D: int = 0


def columns(cls) -> list:
    return [f.name for f in fields(cls)]
