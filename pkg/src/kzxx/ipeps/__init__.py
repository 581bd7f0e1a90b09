"""Infinite-lattice backend: two-sublattice iPEPS, NTU time evolution, CTMRG measurements."""
from .ctm import (CTMConvergenceError, CTMEnv, bond_flips, correlator, ctmrg, energy_per_site,
                  expectation_1site)
from .evolve import Measurement, RampResult, evolve_ramp, trotter_step
from .ntu import (GateInfo, NTUCluster, TruncationLedger, apply_field, apply_gate_ntu,
                  build_ntu_metric, metric_norm2)
from .state import BONDS, IPEPSState, load_state, save_state
