import numpy as np
import pytest

from kzxx import exact
from kzxx.model import ConstantSchedule, Lattice, ModelParams, RampSchedule
from kzxx.mpslat import (MPSState, SnakeMap, build_mpo, dmrg_ground, excitation_energy,
                         expectation, load_mps, measure_corr, neel_mps, save_mps, tdvp_evolve)
from kzxx.mpslat.mps import flip_matrix, full_bond_dims, mpo_matrix_element, overlap, sz_profile

from conftest import chain_to_sites
from test_exact import dense_hamiltonian


def padded_neel(lat, D):
    psi = neel_mps(lat)
    psi.pad_bonds(D)
    return psi


def exact_in_chain(psi_exact, snake):
    """Full exact state reordered to chain order."""
    n = snake.lattice.n_sites
    full = psi_exact.to_full().reshape([2] * n)
    return np.transpose(full, [snake.site_of_chain(c) for c in range(n)]).reshape(-1)


class TestSnake:
    @pytest.mark.parametrize("rows,cols", [(2, 3), (3, 4), (4, 4)])
    def test_bijection_and_bonds(self, rows, cols):
        lat = Lattice(rows, cols)
        sn = SnakeMap(lat)
        assert sorted(sn.chain_of_site(j) for j in range(lat.n_sites)) == list(range(lat.n_sites))
        for c in range(lat.n_sites):
            assert sn.chain_of_site(sn.site_of_chain(c)) == c
        pairs = sn.bond_pairs()
        assert len(pairs) == len(set(pairs)) == len(lat.bonds())
        assert max(j - i for i, j in pairs) <= 2 * cols - 1

    def test_horizontal_neighbours(self):
        lat = Lattice(3, 4)
        sn = SnakeMap(lat)
        for y in range(3):
            for x in range(3):
                assert abs(sn.chain_index(y, x) - sn.chain_index(y, x + 1)) == 1


class TestMPO:
    def test_neel_energy(self, params):
        lat = Lattice(2, 3)
        assert expectation(neel_mps(lat), build_mpo(lat, 0.0, params)) == pytest.approx(-4.5)

    def test_dense_operator(self, params):
        lat = Lattice(2, 3)
        sn = SnakeMap(lat)
        mpo = build_mpo(lat, 0.37, params)
        W = mpo.tensors[0].to_dense()[0]
        for T in mpo.tensors[1:]:
            W = np.tensordot(W, T.to_dense(), axes=([-1], [0]))
        n = lat.n_sites
        W = W[..., 0]
        # axes (p0, q0, p1, q1, ...) -> operator on chain order
        W = W.reshape([2, 2] * n).transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
        Hc = W.reshape(2 ** n, 2 ** n)
        Hs = dense_hamiltonian(lat, 0.37, params)
        perm = [sn.site_of_chain(c) for c in range(n)]
        Hs = Hs.reshape([2] * 2 * n).transpose(perm + [p + n for p in perm]).reshape(2 ** n, 2 ** n)
        assert np.abs(Hc - Hs).max() < 1e-12

    def test_random_product_matches_exact(self, params, rng):
        lat = Lattice(2, 3)
        sn = SnakeMap(lat)
        for _ in range(3):
            cfg = rng.integers(0, 2, size=6)
            mps = MPSState.product(cfg)
            basis = exact.SectorBasis.build(lat, int(np.sum(2 * cfg - 1)))
            bits = sum(int(cfg[sn.chain_of_site(j)]) << j for j in range(6))
            psi = exact.basis_state(basis, bits)
            for s in (0.2, 0.8):
                assert expectation(mps, build_mpo(lat, s, params)) == pytest.approx(
                    exact.energy(psi, s, params), abs=1e-10)

    def test_bond_dimension_independent_of_s(self, params):
        lat = Lattice(3, 3)
        dims = {tuple(build_mpo(lat, s, params).bond_dims) for s in (0.0, 0.5, 1.0)}
        assert len(dims) == 1 and max(dims.pop()) <= 2 * (3 + 1) + 2

    def test_hermitian(self, params):
        lat = Lattice(2, 3)
        mpo = build_mpo(lat, 0.6, params)
        a = MPSState.random(6, 4, 0, rng=1)
        b = MPSState.random(6, 4, 0, rng=2)
        x = mpo_matrix_element(a, mpo, b)
        y = mpo_matrix_element(b, mpo, a)
        assert abs(x - np.conj(y)) < 1e-10


class TestMPSState:
    def test_canonical_forms(self):
        psi = MPSState.random(8, 6, 0, rng=3)
        for c in (0, 3, 7):
            psi.move_center(c)
            assert psi.is_canonical()
        assert psi.norm() == pytest.approx(1.0)

    def test_padding_keeps_state(self):
        lat = Lattice(2, 4)
        psi = neel_mps(lat)
        before = psi.to_dense()
        psi.pad_bonds(32)
        assert np.allclose(psi.to_dense(), before)
        assert psi.bond_dims == [sum(f.values()) for f in full_bond_dims(8, 0)]
        assert psi.is_canonical()

    def test_capped_padding(self):
        psi = neel_mps(Lattice(4, 4))
        psi.pad_bonds(10)
        assert psi.max_bond_dim == 10

    def test_overlap_and_dense(self):
        a = MPSState.random(6, 4, 0, rng=5)
        b = MPSState.random(6, 4, 0, rng=6)
        assert overlap(a, b) == pytest.approx(np.vdot(a.to_dense(), b.to_dense()), abs=1e-12)

    def test_charge(self):
        lat = Lattice(2, 3)
        assert neel_mps(lat).charge == 0
        assert MPSState.product([1, 1, 0]).charge == 1


class TestDMRG:
    def test_dense_oracle(self, params):
        lat = Lattice(2, 2)
        res = dmrg_ground(lat, 0.7, 4, params)
        ref = exact.ground_state(0.7, params, lat)[0][0]
        assert res.energy == pytest.approx(ref, abs=1e-8) and res.converged

    def test_field_only(self, params):
        lat = Lattice(2, 3)
        res = dmrg_ground(lat, 0.0, 4, params)
        assert res.energy == pytest.approx(-6 * params.G_r / 2, abs=1e-10)
        assert np.allclose(sz_profile(res.state), [-h for h in SnakeMap(lat).staggering()])

    def test_variational_in_D(self, params):
        lat = Lattice(2, 4)
        energies = [dmrg_ground(lat, 0.6, D, params).energy for D in (2, 4, 8, 16)]
        assert all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))
        assert energies[-1] == pytest.approx(exact.ground_state(0.6, params, lat)[0][0], abs=1e-8)

    def test_monotone_sweeps(self, params):
        res = dmrg_ground(Lattice(3, 3), 0.5, 6, params, charge=1)
        h = res.history
        assert all(b <= a + 1e-10 for a, b in zip(h, h[1:]))


class TestTDVP:
    def test_matches_exact_on_small_lattice(self, params):
        lat = Lattice(2, 3)
        sn = SnakeMap(lat)
        sched = RampSchedule(2.0)
        res = tdvp_evolve(padded_neel(lat, 8), sched, params, lat, 0, 2.0, 8, times=[0.9])
        ref = exact.evolve(exact.neel_state(lat), sched, params, 0, 2.0, "exact_propagator",
                           times=[0.9])
        for (t, mps), (_, psi) in zip(res.trajectory, ref):
            szm = sz_profile(mps)
            for j in range(6):
                assert szm[sn.chain_of_site(j)] == pytest.approx(exact.sz(psi, j), abs=1e-6)
            F = flip_matrix(mps)
            for i, j in lat.bonds():
                assert F[sn.chain_of_site(i), sn.chain_of_site(j)] == pytest.approx(
                    exact.flip_corr(psi, i, j), abs=1e-6)
        assert res.one_site_steps > 0 and res.two_site_steps == 0

    def test_time_step_halving(self, params):
        lat = Lattice(2, 3)
        sn = SnakeMap(lat)
        sched = RampSchedule(1.0, "linear")
        ref = exact.evolve(exact.neel_state(lat), sched, params, 0, 1.0, "exact_propagator",
                           dt=0.002)[-1][1]
        target = exact_in_chain(ref, sn)
        errs = []
        for dt in (0.1, 0.05):
            mps = tdvp_evolve(padded_neel(lat, 8), sched, params, lat, 0, 1.0, 8,
                              dt=dt).trajectory[-1][1]
            errs.append(np.linalg.norm(mps.to_dense() - target))
        assert 3.0 < errs[0] / errs[1] < 5.0

    def test_frozen_hamiltonian_conserves_energy(self, params):
        lat = Lattice(2, 4)
        psi = dmrg_ground(lat, 0.2, 4, params).state
        mpo = build_mpo(lat, 0.7, params)
        E0 = expectation(psi, mpo)
        res = tdvp_evolve(psi, ConstantSchedule(0.7), params, lat, 0, 2.0, 4, scheme="one-site",
                          dt=0.02, times=list(np.linspace(0.2, 2.0, 10)))
        for _, mps in res.trajectory:
            assert abs(expectation(mps, mpo) - E0) < 1e-8
            assert abs(mps.norm() - 1) < 1e-8

    def test_two_site_growth_then_switch(self, params):
        lat = Lattice(2, 3)
        res = tdvp_evolve(neel_mps(lat), RampSchedule(2.0), params, lat, 0, 1.0, 4,
                          scheme="auto", dt=0.05)
        assert res.two_site_steps > 0 and res.one_site_steps > 0
        assert res.switch_time is not None and res.saturated

    def test_bad_scheme(self, params):
        lat = Lattice(1, 2)
        with pytest.raises(ValueError):
            tdvp_evolve(neel_mps(lat), RampSchedule(1.0), params, lat, 0, 1, 2, scheme="rk4")


class TestExcitationEnergy:
    def test_ground_state_zero(self, params):
        lat = Lattice(2, 3)
        res = dmrg_ground(lat, 0.5, 8, params)
        assert abs(excitation_energy(res.state, lat, 0.5, params, D_ref=8)) < 1e-8

    def test_sudden_quench(self, params):
        lat = Lattice(2, 3)
        s = 0.6
        dE = excitation_energy(neel_mps(lat), lat, s, params, D_ref=8)
        psi = exact.neel_state(lat)
        ref = (exact.energy(psi, s, params) - exact.ground_state(s, params, lat)[0][0]) / 6
        assert dE == pytest.approx(ref, abs=1e-9)


class TestCorrelators:
    def test_neel_zero(self):
        lat = Lattice(2, 4)
        assert all(r.C == 0.0 for r in measure_corr(neel_mps(lat), lat, 1.0, 0.0, 0.0))

    def test_matches_exact_mid_ramp(self, params):
        lat = Lattice(2, 4)
        sched = RampSchedule(2.0, "linear")
        mps = tdvp_evolve(padded_neel(lat, 16), sched, params, lat, 0, 1.0, 16).trajectory[-1][1]
        psi = exact.evolve(exact.neel_state(lat), sched, params, 0, 1.0,
                           "exact_propagator")[-1][1]
        ours = measure_corr(mps, lat, 2.0, 0.5, 1.0, 16)
        ref = exact.row_correlators(psi, 2.0, 0.5, 1.0)
        assert len(ours) == len(ref) == 6
        for a, b in zip(ours, ref):
            assert (a.row, a.R) == (b.row, b.R)
            assert a.C == pytest.approx(b.C, abs=1e-6)
            assert isinstance(a.C, float)


def test_checkpoint_round_trip(tmp_path):
    psi = MPSState.random(5, 4, 1, rng=9)
    save_mps(psi, tmp_path / "ck", t=0.5)
    back, info = load_mps(tmp_path / "ck")
    assert info["t"] == 0.5 and back.center == psi.center
    assert np.allclose(back.to_dense(), psi.to_dense())


def test_dmrg_rejects_impossible_charge(params):
    with pytest.raises(ValueError):
        dmrg_ground(Lattice(3, 3), 0.5, 4, params, charge=0)
