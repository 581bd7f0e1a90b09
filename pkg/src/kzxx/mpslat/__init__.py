"""Finite-lattice backend: snake MPS, TDVP, DMRG and correlators."""
from .dmrg import ConvergenceWarning, DMRGResult, dmrg_ground, excitation_energy, ground_energy
from .measure import central_rows, load_mps, measure_corr, save_mps
from .mpo import MPOHam, build_mpo, mpo_from_terms
from .mps import MPSState, expectation, flip_matrix, full_bond_dims, overlap, sz_profile
from .snake import SnakeMap
from .tdvp import TDVPResult, tdvp_evolve


def neel_mps(lattice) -> MPSState:
    """Neel product state in snake order (spin down where the field is +1)."""
    snake = SnakeMap(lattice)
    return MPSState.product([1 if h == -1 else 0 for h in snake.staggering()])


__all__ = [
    "ConvergenceWarning", "DMRGResult", "MPOHam", "MPSState", "SnakeMap", "TDVPResult",
    "build_mpo", "central_rows", "dmrg_ground", "excitation_energy", "expectation",
    "flip_matrix", "full_bond_dims", "ground_energy", "load_mps", "measure_corr",
    "mpo_from_terms", "neel_mps", "overlap", "save_mps", "sz_profile", "tdvp_evolve",
]
