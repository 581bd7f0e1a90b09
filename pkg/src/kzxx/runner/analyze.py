"""Store -> fits, collapses and exponents (``fit.csv``, ``analysis/``)."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..kzanalysis import (FitError, collapse_critical, collapse_edges, collapse_xi_of_t,
                          correlator_curve, fit_power_law, fit_xi, kz_scales)
from ..model import RampSchedule
from ..records import FitRecord
from .store import Store

S_TOL = 1e-9


def central(rows: int) -> list:
    if rows <= 0:
        return [-1]
    return [rows // 2] if rows % 2 else [rows // 2 - 1, rows // 2]


def ramp_settings(store: Store) -> dict:
    """``s_c`` and ramp shape of the most recent run in the store."""
    out = {"s_c": 0.45, "shape": "smooth"}
    for run in store.manifest().get("runs", []):
        ramp = (run.get("config") or {}).get("ramp", {}) or {}
        out["s_c"] = float(ramp.get("s_c", out["s_c"]))
        out["shape"] = ramp.get("shape", out["shape"])
    return out


def series(records) -> dict:
    """``{(backend, D): {t_r: {s: [records]}}}`` with finite lattices cut to the central rows."""
    by_series = defaultdict(list)
    for r in records:
        by_series[(r.backend, r.D)].append(r)
    out = {}
    for key, recs in sorted(by_series.items()):
        keep = central(max(r.row for r in recs) + 1)
        tab = defaultdict(lambda: defaultdict(list))
        for r in recs:
            if r.row in keep:
                tab[r.t_r][r.s].append(r)
        out[key] = {t: dict(sorted(v.items())) for t, v in sorted(tab.items())}
    return out


def match_s(table: dict, s: float):
    for k in table:
        if abs(k - s) < S_TOL:
            return k
    return None


def window_rmin(recs) -> int:
    """R_min = 2 unless that leaves fewer than three distances (narrow lattices)."""
    return 2 if max(r.R for r in recs) >= 4 else 1


def fits(records) -> list:
    out = []
    for (backend, D), tab in series(records).items():
        for t_r, by_s in tab.items():
            for s, recs in by_s.items():
                try:
                    f = fit_xi(recs, rmin=window_rmin(recs))
                except FitError:
                    continue
                out.append(FitRecord(t_r, s, f.xi, f.xi_err, f.rmin, f.rmax, f.residual, backend, D))
    return out


def curves_at(tab: dict, s: float) -> dict:
    """``{t_r: (R, C)}`` at ramp parameter ``s`` for every ramp that measured it."""
    out = {}
    for t_r, by_s in tab.items():
        k = match_s(by_s, s)
        if k is not None:
            out[t_r] = correlator_curve(by_s[k])
    return out


def edge_curves(tab: dict, s_c: float, shape: str):
    minus, plus = {}, {}
    for t_r, by_s in tab.items():
        sched = RampSchedule(t_r, shape, s_c)
        th = kz_scales(t_r).t_hat
        for t, dest in ((sched.t_c - th, minus), (sched.t_c + th, plus)):
            if 0 < t < t_r:
                k = match_s(by_s, sched.s(t))
                if k is not None:
                    dest[t_r] = correlator_curve(by_s[k])
    return minus, plus


def xi_curves(fit_records, backend, D) -> dict:
    """``{t_r: (s array, xi array)}``."""
    tab = defaultdict(list)
    for f in fit_records:
        if f.backend == backend and f.D == D:
            tab[f.t_r].append((f.s, f.xi))
    return {t: tuple(np.array(v) for v in zip(*sorted(pts))) for t, pts in sorted(tab.items())}


def _num(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def analyze(root) -> dict:
    """Recompute every derived table of a store; returns the JSON summary."""
    store = Store(root)
    ramp = ramp_settings(store)
    s_c, shape = ramp["s_c"], ramp["shape"]
    corr = store.read("corr")
    fit_records = fits(corr)
    store.write("fit", fit_records)
    rows = []
    summary = {"s_c": s_c, "series": []}
    for (backend, D), tab in series(corr).items():
        entry = {"backend": backend, "D": D, "t_r": sorted(tab)}
        all_s = sorted({s for by_s in tab.values() for s in by_s})
        for s in all_s:
            curves = curves_at(tab, s)
            if len(curves) >= 2:
                c = collapse_critical(curves)
                rows.append([backend, D, "critical", repr(s), repr(c.residual), len(curves)])
                entry.setdefault("collapse_critical", {})[repr(s)] = c.residual
        xis = xi_curves(fit_records, backend, D)
        t_curves = {t: (np.array([RampSchedule(t, shape, s_c).t_of_s(s) for s in ss]), xi)
                    for t, (ss, xi) in xis.items()}
        if len(t_curves) >= 2:
            c = collapse_xi_of_t(t_curves, s_c=s_c)
            rows.append([backend, D, "xi_of_t", "", repr(c.residual), len(t_curves)])
        minus, plus = edge_curves(tab, s_c, shape)
        if len(minus) >= 2 and len(plus) >= 2:
            e = collapse_edges(minus, plus)
            rows.append([backend, D, "edge_minus", "", repr(e.minus.residual), len(minus)])
            rows.append([backend, D, "edge_plus", "", repr(e.plus.residual), len(plus)])
            rows.append([backend, D, "edge_between", "", repr(e.between), len(minus)])
        xc = [(t, xi[np.argmin(abs(ss - s_c))]) for t, (ss, xi) in xis.items()
              if np.min(abs(ss - s_c)) < S_TOL]
        if len(xc) >= 2:
            p = fit_power_law(*zip(*xc))
            entry["xi_tc_exponent"] = [p.exponent, _num(p.exponent_err)]
        entry["xi_tc"] = {repr(t): x for t, x in xc}
        summary["series"].append(entry)
    energy = defaultdict(dict)
    for e in store.read("energy"):
        energy[(e.backend, e.D)].setdefault(e.s, {})[e.t_r] = e.dE_per_site
    for (backend, D), by_s in sorted(energy.items()):
        s_top = max(by_s, key=lambda s: (len(by_s[s]), s))
        pts = sorted((t, dE) for t, dE in by_s[s_top].items() if dE > 0)
        info = {"backend": backend, "D": D, "s": s_top, "dE": {repr(t): v for t, v in pts}}
        if len(pts) >= 2:
            info["slope_all"] = fit_power_law(*zip(*pts)).exponent
            info["slope_slowest"] = fit_power_law(*zip(*pts[-2:])).exponent
        summary.setdefault("energy", []).append(info)
    adir = Path(root) / "analysis"
    adir.mkdir(parents=True, exist_ok=True)
    with open(adir / "collapse.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["backend", "D", "kind", "s", "residual", "n_curves"])
        w.writerows(rows)
    summary["n_fits"] = len(fit_records)
    (adir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary
