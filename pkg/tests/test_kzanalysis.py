import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from kzxx.kzanalysis import (FitError, KZConfig, NoSignal, collapse, collapse_critical,
                             collapse_edges, collapse_xi_of_t, fit_power_law, fit_xi, kz_scales)
from kzxx.records import CorrRecord


def synthetic(R, C, t_r=2.0, s=0.45):
    return [CorrRecord("ipeps", t_r, s, s * t_r, int(r), float(c), 4) for r, c in zip(R, C)]


class TestScales:
    def test_prefactor_at_unit_ramp(self):
        assert kz_scales(1.0).t_hat == pytest.approx(0.36, abs=1e-15)
        assert kz_scales(1.0).xi_hat == 1.0

    def test_exponents(self):
        cfg = KZConfig()
        assert abs(cfg.t_exponent - 0.67 / 1.67) < 1e-12
        assert cfg.xi_exponent == pytest.approx(0.40180, abs=5e-6)
        # 1 - exponent = 1/(1+z nu)
        assert abs(1 - cfg.xi_exponent - 1 / (1 + cfg.nu)) < 1e-12

    @given(hs.floats(0.1, 1e3))
    def test_t_hat_over_xi_hat_is_constant_when_exponents_agree(self, t_r):
        cfg = KZConfig(znu_t=KZConfig().nu)
        sc = kz_scales(t_r, cfg)
        assert sc.t_hat / sc.xi_hat ** cfg.z == pytest.approx(0.36, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            kz_scales(0.0)


class TestFitXi:
    def test_exact_exponential(self):
        R = np.arange(1, 9)
        f = fit_xi(synthetic(R, np.exp(-R / 2)))
        assert f.xi == pytest.approx(2.0, abs=1e-10)
        assert f.xi_err < 1e-10 and f.residual < 1e-10
        assert (f.rmin, f.rmax) == (2, 8)

    def test_power_prefactor_is_reported_not_corrected(self):
        R = np.arange(1, 9)
        f = fit_xi(synthetic(R, np.exp(-R / 3) / R))
        assert abs(f.xi - 3) > 0.1
        assert f.residual > 1e-3

    def test_no_signal(self):
        with pytest.raises(NoSignal):
            fit_xi(synthetic(range(1, 9), np.zeros(8)))

    def test_window_stops_at_floor_and_counts_negatives(self):
        R = np.arange(1, 13)
        C = np.exp(-R / 1.5)
        C[4] = -1e-3
        C[9:] = 1e-12
        f = fit_xi((R, C))
        assert f.rmax == 9 and f.n_excluded == 1 and f.n_points == 7
        assert f.xi == pytest.approx(1.5, rel=1e-10)

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_xi((np.arange(1, 4), np.exp(-np.arange(1, 4.0))))

    def test_duplicate_rows_averaged(self):
        R = np.arange(1, 7)
        recs = synthetic(R, np.exp(-R)) + synthetic(R, np.exp(-R))
        assert fit_xi(recs).xi == pytest.approx(1.0)

    @settings(max_examples=40)
    @given(hs.floats(0.5, 6.0), hs.floats(1e-3, 1e3), hs.integers(0, 5))
    def test_scale_and_shift_covariance(self, xi, c, a):
        rng = np.random.default_rng(1)
        R = np.arange(1, 11)
        C = np.exp(-R / xi) * (1 + 0.05 * rng.standard_normal(R.size))
        base = fit_xi((R, C), floor=0)
        scaled = fit_xi((R, c * C), floor=0)
        shifted = fit_xi((R + a, C), rmin=2 + a, floor=0)
        assert scaled.xi == pytest.approx(base.xi, rel=1e-9)
        assert shifted.xi == pytest.approx(base.xi, rel=1e-9)


def _scaled_curves(xi_hats, F, n=8, eta=0.0381):
    """Curves whose rescaled abscissae coincide: R = k * xi_hat / min(xi_hat)."""
    cfg = KZConfig()
    out = {}
    base = min(xi_hats)
    for xh in xi_hats:
        t_r = xh ** (1 / cfg.xi_exponent)
        R = np.arange(1, n + 1) * xh / base
        out[t_r] = (R, F(R / xh) / xh ** (1 + eta))
    return out


class TestCollapse:
    def test_identical_curves(self):
        x = np.linspace(0, 3, 7)
        assert collapse({1: (x, np.exp(-x)), 2: (x, np.exp(-x))}).residual == 0

    def test_synthetic_scaling_function(self):
        res = collapse_critical(_scaled_curves([2.0, 4.0], lambda x: np.exp(-x)))
        assert res.residual < 1e-8

    def test_interpolation_error_on_staggered_grids(self):
        # same scaling function but abscissae that do not coincide
        cfg = KZConfig()
        curves = {}
        for xh in (2.0, 3.0):
            R = np.arange(1, 12)
            curves[xh ** (1 / cfg.xi_exponent)] = (R, np.exp(-R / xh) / xh ** (1 + cfg.eta))
        r = collapse_critical(curves).residual
        assert 0 < r < 1e-3

    def test_wrong_exponent_spoils_collapse(self):
        curves = _scaled_curves([2.0, 4.0], lambda x: np.exp(-x))
        assert collapse_critical(curves, eta=0.5).residual > 1e-4

    def test_symmetric_and_relabel_invariant(self):
        rng = np.random.default_rng(3)
        curves = {k: (np.sort(rng.uniform(0, 4, 6)), rng.uniform(size=6)) for k in (1, 2, 3)}
        a = collapse(curves).residual
        b = collapse({10 - k: v for k, v in curves.items()}).residual
        assert a == pytest.approx(b, rel=1e-14)
        pa = collapse({1: curves[1], 2: curves[2]}).residual
        pb = collapse({1: curves[2], 2: curves[1]}).residual
        assert pa == pytest.approx(pb, rel=1e-14)
        assert a >= 0

    def test_rescaling_collapsed_data_keeps_residual(self):
        curves = _scaled_curves([2.0, 4.0], lambda x: np.exp(-x) * (1 + x))
        res = collapse_critical(curves)
        # with nu = 0 every xi_hat is 1, so collapsing the scaled curves again is the identity
        again = collapse_critical(res.curves, KZConfig(nu=0.0))
        assert abs(again.residual - res.residual) < 1e-10

    def test_no_overlap_is_skipped(self):
        r = collapse({1: (np.array([0.0, 1.0]), np.zeros(2)), 2: (np.array([2.0, 3.0]), np.ones(2))})
        assert math.isnan(r.residual) and r.pairs == {}


class TestXiOfT:
    def g(self, u):
        return 1.2 + 0.3 * np.tanh(u)

    def curves(self, trs, s_c=0.45):
        out = {}
        for t_r in trs:
            sc = kz_scales(t_r)
            t = s_c * t_r + sc.t_hat * np.linspace(-1.5, 1.5, 13)
            out[t_r] = (t, sc.xi_hat * self.g((t - s_c * t_r) / sc.t_hat))
        return out

    def test_single_curve(self):
        assert collapse_xi_of_t(self.curves([4.0])).residual == 0

    def test_synthetic(self):
        assert collapse_xi_of_t(self.curves([2.0, 8.0])).residual < 1e-8

    def test_window_restriction_does_not_grow_residual(self):
        c = self.curves([2.0, 8.0])
        c[8.0] = (c[8.0][0], c[8.0][1] * (1 + 0.05 * np.linspace(-1, 1, 13) ** 2))
        wide = collapse_xi_of_t(c, window=(-1.5, 1.5)).residual
        narrow = collapse_xi_of_t(c, window=(-0.5, 0.5)).residual
        assert narrow <= wide


def test_edges_branches_separate():
    minus = _scaled_curves([2.0, 4.0], lambda x: np.exp(-2 * x))
    plus = _scaled_curves([2.0, 4.0], lambda x: np.exp(-x))
    e = collapse_edges(minus, plus)
    assert e.minus.residual < 1e-8 and e.plus.residual < 1e-8
    assert e.between > max(e.minus.residual, e.plus.residual)


class TestPowerLaw:
    def test_exact(self):
        x = np.array([1.0, 2, 4, 8])
        f = fit_power_law(x, 3 * x ** 2)
        assert f.exponent == pytest.approx(2.0, abs=1e-12)
        assert f.prefactor == pytest.approx(3.0, rel=1e-12)

    def test_noisy(self):
        rng = np.random.default_rng(7)
        x = np.geomspace(1, 100, 12)
        f = fit_power_law(x, x ** 0.4 * (1 + 0.01 * rng.standard_normal(x.size)))
        assert abs(f.exponent - 0.4) < 0.02

    def test_error_grows_with_shorter_range(self):
        rng = np.random.default_rng(11)
        errs = []
        for decades in (2, 1):
            e = []
            for _ in range(50):
                x = np.geomspace(1, 10 ** decades, 10)
                e.append(fit_power_law(x, x ** 0.4 * np.exp(0.05 * rng.standard_normal(10))).exponent_err)
            errs.append(np.mean(e))
        assert errs[1] > errs[0]

    @given(hs.floats(1e-3, 1e3))
    def test_units_change(self, c):
        x = np.array([1.0, 3, 7, 20])
        y = np.array([2.0, 5, 9, 31])
        assert fit_power_law(c * x, y).exponent == pytest.approx(fit_power_law(x, y).exponent, rel=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(FitError):
            fit_power_law([1, 2], [1, 0])
