import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from kzxx import symtensor as st
from kzxx.symtensor import ChargeError, Leg, LegMismatchError, SymTensor


def rand_leg(rng, sig, max_sectors=3, max_dim=2):
    ns = rng.integers(1, max_sectors + 1)
    charges = sorted(rng.choice(np.arange(-3, 4), size=ns, replace=False).tolist())
    dims = rng.integers(1, max_dim + 1, size=ns).tolist()
    return Leg(sig, tuple(charges), tuple(dims))


def dense_charge(legs, n):
    """Dense mask of entries allowed by the selection rule."""
    grids = np.meshgrid(*[np.repeat(l.charges, l.dims) * l.sig for l in legs], indexing="ij")
    return sum(grids) == n


class TestLeg:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Leg(1, (1, 0), (1, 1))

    def test_rejects_zero_degeneracy(self):
        with pytest.raises(ValueError):
            Leg(1, (0,), (0,))

    def test_dim_is_sum(self):
        assert Leg(1, (-1, 2), (3, 4)).dim == 7

    def test_fuse_counts(self):
        a = Leg(1, (0, 1), (1, 1))
        f = Leg.fuse([a, a])
        assert dict(zip(f.charges, f.dims)) == {0: 1, 1: 2, 2: 1}


class TestConstruction:
    def test_selection_rule_rejects_illegal_block(self):
        leg = Leg(1, (0, 1), (1, 1))
        with pytest.raises(ChargeError):
            SymTensor((leg, leg.conj()), {(0, 1): np.ones((1, 1))}, 0)

    def test_from_dense_rejects_stray_weight(self):
        leg = Leg(1, (0, 1), (1, 1))
        with pytest.raises(ChargeError):
            SymTensor.from_dense(np.ones((2, 2)), (leg, leg.conj()))

    def test_dense_round_trip(self, rng):
        legs = (rand_leg(rng, 1), rand_leg(rng, -1), rand_leg(rng, 1))
        t = SymTensor.random(legs, 0, rng)
        assert np.array_equal(SymTensor.from_dense(t.to_dense(), legs).to_dense(), t.to_dense())

    def test_norm_matches_dense(self, rng):
        legs = (rand_leg(rng, 1), rand_leg(rng, -1))
        t = SymTensor.random(legs, 0, rng, complex)
        assert t.norm() == pytest.approx(np.linalg.norm(t.to_dense()), rel=1e-14)

    def test_shape_mismatch(self):
        leg = Leg(1, (0,), (2,))
        with pytest.raises(ChargeError):
            SymTensor((leg, leg.conj()), {(0, 0): np.ones((2, 3))}, 0)


class TestContract:
    def test_identity_leaves_tensor(self, rng):
        legs = (rand_leg(rng, 1), rand_leg(rng, -1))
        t = SymTensor.random(legs, 0, rng)
        e = SymTensor.eye(legs[0])
        out = st.tensordot(e, t, ([1], [0]))
        assert set(out.blocks) == set(t.blocks)
        assert np.array_equal(out.to_dense(), t.to_dense())

    def test_normalized_state(self, rng):
        legs = (Leg(1, (-1, 1), (2, 3)), Leg(1, (-1, 1), (1, 1)))
        psi = SymTensor.random(legs, 0, rng, complex)
        psi = psi / psi.norm()
        val = st.tensordot(psi.conj(), psi, ([0, 1], [0, 1])).item()
        assert abs(val - 1) < 1e-12

    def test_mismatch_names_legs(self):
        a = SymTensor.zeros((Leg(1, (0,), (2,)),))
        b = SymTensor.zeros((Leg(1, (0,), (2,)),))
        with pytest.raises(LegMismatchError, match="leg 0"):
            st.tensordot(a, b, ([0], [0]))

    def test_dense_oracle(self, rng):
        for _ in range(20):
            l1, l2, l3 = rand_leg(rng, 1), rand_leg(rng, -1), rand_leg(rng, 1)
            a = SymTensor.random((l1, l2), int(rng.integers(-2, 3)), rng)
            b = SymTensor.random((l2.conj(), l3), int(rng.integers(-2, 3)), rng)
            c = st.tensordot(a, b, ([1], [0]))
            assert c.n == a.n + b.n
            ref = np.tensordot(a.to_dense(), b.to_dense(), ([1], [0]))
            assert np.allclose(c.to_dense(), ref, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=hst.integers(0, 10**6), n_a=hst.integers(-2, 2), n_b=hst.integers(-2, 2))
def test_contraction_commutes_with_expansion(seed, n_a, n_b):
    rng = np.random.default_rng(seed)
    l1, l2, l3, l4 = (rand_leg(rng, s, 3, 2) for s in (1, -1, 1, -1))
    a = SymTensor.random((l1, l2, l3), n_a, rng, complex)
    b = SymTensor.random((l3.conj(), l4, l2.conj()), n_b, rng)
    c = st.tensordot(a, b, ([1, 2], [2, 0]))
    ref = np.tensordot(a.to_dense(), b.to_dense(), ([1, 2], [2, 0]))
    assert np.allclose(c.to_dense(), ref, atol=1e-12)
    for key in c.blocks:
        assert sum(l.sig * q for l, q in zip(c.legs, key)) == c.n


@settings(max_examples=30, deadline=None)
@given(seed=hst.integers(0, 10**6))
def test_stored_blocks_obey_selection(seed):
    rng = np.random.default_rng(seed)
    legs = tuple(rand_leg(rng, s) for s in (1, 1, -1))
    n = int(rng.integers(-2, 3))
    t = SymTensor.random(legs, n, rng)
    d = t.to_dense()
    assert np.all(d[~dense_charge(legs, n)] == 0)
    # mutating a forbidden entry is caught on conversion
    bad = ~dense_charge(legs, n)
    if bad.any():
        d[np.argwhere(bad)[0].tolist()[0], np.argwhere(bad)[0].tolist()[1], np.argwhere(bad)[0].tolist()[2]] = 1.0
        with pytest.raises(ChargeError):
            SymTensor.from_dense(d, legs, n)


class TestFusion:
    def test_round_trip(self, rng):
        legs = tuple(rand_leg(rng, s) for s in (1, -1, 1, -1))
        t = SymTensor.random(legs, 1, rng)
        f = st.fuse_legs(t, [(0, 1), (2, 3)])
        back = st.split_legs(f)
        assert back.legs == t.legs
        assert set(back.blocks) == set(t.blocks)
        for k in t.blocks:
            assert np.array_equal(back.blocks[k], t.blocks[k])

    def test_single_group_unchanged(self, rng):
        legs = tuple(rand_leg(rng, s) for s in (1, -1))
        t = SymTensor.random(legs, 0, rng)
        f = st.fuse_legs(t, [(0,), (1,)])
        assert f.legs == t.legs and np.array_equal(f.to_dense(), t.to_dense())

    def test_fused_sectors(self):
        a = Leg(1, (0, 1), (1, 1))
        t = SymTensor.zeros((a, a, Leg(-1, (0, 1, 2), (1, 2, 1))), 0)
        f = st.fuse_legs(t, [(0, 1), (2,)])
        assert dict(zip(f.legs[0].charges, f.legs[0].dims)) == {0: 1, 1: 2, 2: 1}

    def test_fuse_matches_reshape_of_dense(self, rng):
        legs = tuple(rand_leg(rng, s) for s in (1, 1, -1))
        t = SymTensor.random(legs, 0, rng)
        f = st.fuse_legs(t, [(0, 1), (2,)])
        # fused dense is a row permutation of the reshaped dense
        d = t.to_dense().reshape(-1, legs[2].dim)
        fd = f.to_dense()
        assert sorted(map(tuple, np.round(d, 12))) == sorted(map(tuple, np.round(fd, 12)))


class TestSVD:
    def test_rank_one(self):
        leg = Leg(1, (0,), (3,))
        v = np.array([1.0, 2.0, 3.0])
        t = SymTensor.from_dense(np.outer(v, v), (leg, leg.conj()))
        U, S, V, err = st.svd(t, [0], [1])
        assert sum(len(s) for s in S.values()) == 1 and err < 1e-15

    def test_identity_truncation(self):
        leg = Leg(1, (0,), (4,))
        t = SymTensor.from_dense(np.eye(4), (leg, leg.conj()))
        _, S, _, err = st.svd(t, [0], [1], max_dim=2)
        assert sum(len(s) for s in S.values()) == 2
        assert err == pytest.approx(np.sqrt(0.5), abs=1e-14)

    def test_identity_tie_break_prefers_low_charge(self):
        leg = Leg(1, (-1, 0, 1), (1, 1, 1))
        _, S, _, err = st.svd(SymTensor.eye(leg), [0], [1], max_dim=2)
        assert sorted(S) == [-1, 0]
        assert err == pytest.approx(np.sqrt(1 / 3), abs=1e-14)

    def test_values_match_dense(self, rng):
        legs = tuple(rand_leg(rng, s, 3, 3) for s in (1, -1, 1))
        t = SymTensor.random(legs, 0, rng)
        _, S, _, err = st.svd(t, [0, 1], [2])
        ref = np.linalg.svd(t.to_dense().reshape(legs[0].dim * legs[1].dim, -1), compute_uv=False)
        ours = np.sort(np.concatenate(list(S.values())))[::-1]
        ref = ref[ref > 1e-14 * ref[0]]
        assert np.allclose(ours, ref, atol=1e-10)
        assert err < 1e-13

    def test_zero_tensor(self):
        leg = Leg(1, (0,), (2,))
        with pytest.raises(ValueError, match="cannot factor zero tensor"):
            st.svd(SymTensor.zeros((leg, leg.conj())), [0], [1])

    def test_reported_error_matches_reconstruction(self, rng):
        for _ in range(10):
            legs = tuple(rand_leg(rng, s, 3, 3) for s in (1, -1, 1, -1))
            t = SymTensor.random(legs, 0, rng, complex)
            if not t.blocks:
                continue
            U, S, V, err = st.svd(t, [0, 1], [2, 3], max_dim=3)
            rec = st.tensordot(st.scale_leg(U, 2, S), V, ([2], [0]))
            diff = np.linalg.norm(rec.to_dense() - t.to_dense()) / t.norm()
            assert abs(diff - err) < 1e-12

    def test_sorted_descending(self, rng):
        legs = tuple(rand_leg(rng, s, 3, 3) for s in (1, -1, 1))
        _, S, _, _ = st.svd(SymTensor.random(legs, 0, rng), [0], [1, 2])
        for v in S.values():
            assert np.all(np.diff(v) <= 0) and np.all(v >= 0)


class TestFactorizations:
    def test_qr_reconstructs(self, rng):
        legs = tuple(rand_leg(rng, s, 3, 3) for s in (1, 1, -1))
        t = SymTensor.random(legs, 0, rng)
        Q, R = st.qr(t, [0, 1], [2])
        assert np.allclose(st.tensordot(Q, R, ([2], [0])).to_dense(), t.to_dense())
        g = st.tensordot(Q.conj(), Q, ([0, 1], [0, 1])).to_dense()
        assert np.allclose(g, np.eye(g.shape[0]))

    def test_pinv_floor(self):
        leg = Leg(1, (0,), (3,))
        m = np.diag([1.0, 1e-14, 2.0])
        p = st.pinv_hermitian(SymTensor.from_dense(m, (leg, leg.conj())), [0], [1])
        assert np.allclose(p.to_dense(), np.diag([1.0, 0.0, 0.5]))

    def test_eigh(self, rng):
        leg = Leg(1, (-1, 1), (2, 2))
        a = SymTensor.random((leg, leg.conj()), 0, rng).to_dense()
        hd = a + a.T
        h = SymTensor.from_dense(hd, (leg, leg.conj()))
        w, V = st.eigh(h, [0], [1])
        assert np.allclose(np.sort(np.concatenate(list(w.values()))), np.linalg.eigvalsh(hd))


class TestSerialization:
    @pytest.mark.parametrize("dtype", [np.float64, np.complex128])
    def test_round_trip(self, rng, dtype):
        a = Leg(1, (0, 1), (1, 2))
        f = Leg.fuse([a, a.conj()])
        t = SymTensor.random((f, rand_leg(rng, -1), a), 1, rng, dtype)
        back = st.from_bytes(st.to_bytes(t))
        assert back.legs == t.legs and back.n == t.n and back.dtype == t.dtype
        assert np.array_equal(back.to_dense(), t.to_dense())

    def test_file_round_trip(self, rng):
        t = SymTensor.random((rand_leg(rng, 1), rand_leg(rng, -1)), 0, rng)
        buf = io.BytesIO()
        st.save(t, buf)
        buf.seek(0)
        assert np.array_equal(st.load(buf).to_dense(), t.to_dense())

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            st.from_bytes(b"NOPE" + bytes(20))

    def test_little_endian_header(self):
        t = SymTensor.scalar(2.0)
        raw = st.to_bytes(t)
        assert raw[:4] == b"SYMT" and raw[4:6] == (1).to_bytes(2, "little")


def test_trace_vector_closes_double_leg():
    ket = Leg(1, (-1, 1), (2, 1))
    fused = Leg.fuse([ket, ket.conj()])
    tv = st.trace_vector(fused)
    assert np.allclose(st.split_legs(tv).to_dense(), np.eye(ket.dim))
