"""Kibble-Zurek analysis: correlation-length fits, KZ scales, scaling collapses, power laws."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .records import CorrRecord

NU = 0.67169
ETA = 0.03810


class FitError(ValueError):
    pass


class NoSignal(FitError):
    """Every correlator sample is below the fit floor."""


@dataclass(frozen=True)
class KZConfig:
    z: float = 1.0
    nu: float = NU
    eta: float = ETA
    znu_t: float = 0.67          # z*nu used in the t-hat exponent
    prefactor_t: float = 0.36
    prefactor_xi: float = 1.0

    @property
    def t_exponent(self) -> float:
        return self.znu_t / (1 + self.znu_t)

    @property
    def xi_exponent(self) -> float:
        return self.nu / (1 + self.z * self.nu)


@dataclass(frozen=True)
class KZScales:
    t_r: float
    t_hat: float
    xi_hat: float
    config: KZConfig


def kz_scales(t_r: float, config: KZConfig = None) -> KZScales:
    """KZ time and length for a ramp of duration ``t_r`` (both in units of ``1/J_r``, lattice units)."""
    if not t_r > 0:
        raise ValueError("t_r must be positive")
    cfg = config or KZConfig()
    return KZScales(t_r, cfg.prefactor_t * t_r ** cfg.t_exponent,
                    cfg.prefactor_xi * t_r ** cfg.xi_exponent, cfg)


# ---- correlation length ---------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    xi: float
    xi_err: float
    rmin: int
    rmax: int
    residual: float
    n_points: int
    n_excluded: int = 0
    t_r: float = float("nan")
    s: float = float("nan")


def _weighted_line(x, y, w):
    """Weighted least squares ``y = a + b x``; returns (a, b, cov, residual norm)."""
    A = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    r = (y - A @ coef) * sw
    chi2 = float(r @ r)
    dof = len(x) - 2
    cov = np.linalg.inv((A * w[:, None]).T @ A) * (chi2 / dof if dof > 0 else 0.0)
    return coef[0], coef[1], cov, math.sqrt(chi2)


def correlator_curve(records, row=None):
    """(R, C) arrays from records at one time; duplicates at equal R are averaged."""
    acc = {}
    for r in records:
        if row is not None and r.row != row:
            continue
        acc.setdefault(int(r.R), []).append(float(r.C))
    R = np.array(sorted(acc), dtype=float)
    return R, np.array([np.mean(acc[int(k)]) for k in R])


def fit_xi(records, rmin: int = 2, rmax: int = None, floor: float = 1e-8, sigma=None,
           row=None) -> FitResult:
    """Exponential fit ``C ~ exp(-R/xi)`` by weighted linear regression of ``log C`` on ``R``.

    ``records`` is a list of :class:`CorrRecord` at a single time, or an
    ``(R, C)`` pair of arrays.  The window runs from ``rmin`` to the largest
    ``R`` with ``C > floor`` (or ``rmax``).  Non-positive values inside the
    window are dropped and counted in ``n_excluded``.  ``sigma`` (absolute
    errors on ``C``) sets the weights; uniform otherwise.
    """
    t_r = s = float("nan")
    if isinstance(records, tuple):
        R, C = (np.asarray(a, dtype=float) for a in records)
    else:
        records = list(records)
        if records:
            t_r, s = records[0].t_r, records[0].s
        R, C = correlator_curve(records, row)
    order = np.argsort(R)
    R, C = R[order], C[order]
    sig = None if sigma is None else np.asarray(sigma, dtype=float)[order]
    above = R[C > floor]
    if above.size == 0:
        raise NoSignal("no correlator value above the fit floor")
    hi = above.max() if rmax is None else min(rmax, above.max())
    inside = (R >= rmin) & (R <= hi)
    good = inside & (C > 0)
    n_excl = int(np.sum(inside & ~good))
    if good.sum() < 3:
        raise FitError(f"need at least 3 usable points in [{rmin}, {hi:g}], got {good.sum()}")
    x, y = R[good], np.log(C[good])
    w = np.ones_like(x) if sig is None else (C[good] / sig[good]) ** 2
    _, b, cov, res = _weighted_line(x, y, w)
    if b >= 0:
        raise FitError("correlator does not decay inside the fit window")
    xi = -1.0 / b
    return FitResult(xi, math.sqrt(max(cov[1, 1], 0.0)) * xi * xi, int(x[0]), int(x[-1]), res,
                     int(good.sum()), n_excl, t_r, s)


# ---- collapses ------------------------------------------------------------


@dataclass
class CollapseResult:
    curves: dict                           # key -> (x, y) after rescaling
    residual: float
    pairs: dict = field(default_factory=dict)   # (key_a, key_b) -> mean squared distance
    exponents: dict = field(default_factory=dict)


def pair_distance(a, b):
    """Mean squared vertical distance on the overlap of two curves, or ``None``.

    Both curves are interpolated piecewise-linearly onto the union of their
    abscissae inside the mutual overlap; nothing is extrapolated.
    """
    (xa, ya), (xb, yb) = a, b
    lo, hi = max(xa.min(), xb.min()), min(xa.max(), xb.max())
    if hi < lo:
        return None
    grid = np.union1d(xa[(xa >= lo) & (xa <= hi)], xb[(xb >= lo) & (xb <= hi)])
    return float(np.mean((np.interp(grid, xa, ya) - np.interp(grid, xb, yb)) ** 2))


def _sorted(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    o = np.argsort(x)
    return x[o], y[o]


def collapse(curves: dict, window=None) -> CollapseResult:
    """Pairwise residual of already-rescaled curves ``{key: (x, y)}``.

    With ``window=(lo, hi)`` only points with ``lo <= x <= hi`` take part.
    Pairs without overlap are skipped; with no overlapping pair at all the
    residual is 0 for a single curve and NaN otherwise.
    """
    cs = {}
    for k, (x, y) in curves.items():
        x, y = _sorted(x, y)
        if window is not None:
            keep = (x >= window[0]) & (x <= window[1])
            x, y = x[keep], y[keep]
        if x.size:
            cs[k] = (x, y)
    pairs = {}
    for ka, kb in itertools.combinations(sorted(cs), 2):
        d = pair_distance(cs[ka], cs[kb])
        if d is not None:
            pairs[(ka, kb)] = d
    if pairs:
        res = float(np.mean(list(pairs.values())))
    else:
        res = 0.0 if len(cs) <= 1 else float("nan")
    return CollapseResult(cs, res, pairs)


def collapse_critical(curves: dict, config: KZConfig = None, eta: float = None) -> CollapseResult:
    """Collapse ``{t_r: (R, C)}`` as ``(R / xi_hat, xi_hat^(1+eta) C)``."""
    cfg = config or KZConfig()
    eta = cfg.eta if eta is None else eta
    scaled = {}
    for t_r, (R, C) in curves.items():
        xh = kz_scales(t_r, cfg).xi_hat
        scaled[t_r] = (np.asarray(R, dtype=float) / xh, xh ** (1 + eta) * np.asarray(C, dtype=float))
    out = collapse(scaled)
    out.exponents = {"eta": eta, "xi_exponent": cfg.xi_exponent}
    return out


def collapse_xi_of_t(curves: dict, config: KZConfig = None, s_c: float = 0.45,
                     window=(-1.0, 1.0)) -> CollapseResult:
    """Collapse ``{t_r: (t, xi)}`` as ``((t - t_c) / t_hat, xi / xi_hat)`` with ``t_c = s_c t_r``."""
    cfg = config or KZConfig()
    scaled = {}
    for t_r, (t, xi) in curves.items():
        sc = kz_scales(t_r, cfg)
        scaled[t_r] = ((np.asarray(t, dtype=float) - s_c * t_r) / sc.t_hat,
                       np.asarray(xi, dtype=float) / sc.xi_hat)
    out = collapse(scaled, window)
    out.exponents = {"t_exponent": cfg.t_exponent, "xi_exponent": cfg.xi_exponent}
    return out


@dataclass
class EdgeCollapse:
    minus: CollapseResult
    plus: CollapseResult
    between: float              # mean distance between the two branches


def collapse_edges(minus: dict, plus: dict, config: KZConfig = None,
                   eta: float = None) -> EdgeCollapse:
    """Separate collapses of ``C(t_c - t_hat, R)`` and ``C(t_c + t_hat, R)``."""
    m = collapse_critical(minus, config, eta)
    p = collapse_critical(plus, config, eta)
    d = [pair_distance(m.curves[k], p.curves[k2]) for k in m.curves for k2 in p.curves]
    d = [v for v in d if v is not None]
    return EdgeCollapse(m, p, float(np.mean(d)) if d else float("nan"))


# ---- power laws -----------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    exponent_err: float
    prefactor: float
    x_range: tuple
    residual: float


def fit_power_law(x, y) -> PowerLawFit:
    """``y = a x^b`` by linear regression on log-log axes."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise FitError("need at least two matched points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("power-law fit needs strictly positive data")
    a, b, cov, res = _weighted_line(np.log(x), np.log(y), np.ones_like(x))
    return PowerLawFit(float(b), math.sqrt(max(cov[1, 1], 0.0)), float(math.exp(a)),
                       (float(x.min()), float(x.max())), res)


def records_by_time(records, t_r=None):
    """Group correlator records as ``{(t_r, s): [records]}``."""
    out = {}
    for r in records:
        if t_r is not None and r.t_r != t_r:
            continue
        out.setdefault((r.t_r, r.s), []).append(r)
    return out


__all__ = ["CollapseResult", "CorrRecord", "EdgeCollapse", "FitError", "FitResult", "KZConfig",
           "KZScales", "NoSignal", "PowerLawFit", "collapse", "collapse_critical",
           "collapse_edges", "collapse_xi_of_t", "correlator_curve", "fit_power_law", "fit_xi",
           "kz_scales", "pair_distance", "records_by_time"]
