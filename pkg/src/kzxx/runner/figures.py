"""Static figures from a store; every SVG comes with the CSV it was drawn from."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..kzanalysis import KZConfig, kz_scales  # noqa: E402
from ..model import RampSchedule  # noqa: E402
from .analyze import curves_at, edge_curves, fits, ramp_settings, series, xi_curves  # noqa: E402
from .store import Store  # noqa: E402

FIGURES = ("error", "collapse_sc", "xi_scaling", "collapse_edges", "xi_finite", "energy_finite")

plt.rcParams["svg.hashsalt"] = "kzxx"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _save(fig, path):
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _error(store, ctx):
    rows = [[e.D_max, e.t_r, e.s, e.delta] for e in store.read("error")]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by = defaultdict(list)
    for D, t_r, s, d in rows:
        by[(D, t_r)].append((s, d))
    for (D, t_r), pts in sorted(by.items()):
        s, d = zip(*pts)
        ax.plot(s, d, label=f"D={D}, $J_rt_r$={t_r:g}")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xlabel("s")
    ax.set_ylabel(r"$\delta$")
    ax.legend(fontsize=7)
    return fig, ["D_max", "t_r", "s", "delta"], rows


def _collapse_sc(store, ctx):
    rows = []
    eta = KZConfig().eta
    for (backend, D), tab in ctx["series"].items():
        for s in sorted({s for by_s in tab.values() for s in by_s}):
            for t_r, (R, C) in curves_at(tab, s).items():
                xh = kz_scales(t_r).xi_hat
                rows += [[backend, D, s, t_r, r / xh, xh ** (1 + eta) * c] for r, c in zip(R, C)]
    if not rows:
        return None
    svals = sorted({r[2] for r in rows})
    fig, axes = plt.subplots(1, len(svals), figsize=(3.2 * len(svals), 3.2), squeeze=False)
    for ax, s in zip(axes[0], svals):
        by = defaultdict(list)
        for b, D, s2, t_r, x, y in rows:
            if s2 == s:
                by[(b, D, t_r)].append((x, y))
        for (b, D, t_r), pts in sorted(by.items()):
            x, y = zip(*pts)
            ax.semilogy(x, np.maximum(y, 1e-12), "o-", ms=3, label=f"{b} D={D} {t_r:g}")
        ax.set_title(f"s = {s:g}")
        ax.set_xlabel(r"$R/\hat\xi$")
    axes[0][0].set_ylabel(r"$\hat\xi^{1+\eta}C$")
    axes[0][0].legend(fontsize=6)
    return fig, ["backend", "D", "s", "t_r", "R_scaled", "C_scaled"], rows


def _xi_scaling(store, ctx):
    rows = []
    for (backend, D), _ in ctx["series"].items():
        if backend != "ipeps":
            continue
        for t_r, (ss, xi) in xi_curves(ctx["fits"], backend, D).items():
            sched = RampSchedule(t_r, ctx["shape"], ctx["s_c"])
            sc = kz_scales(t_r)
            for s, x in zip(ss, xi):
                rows.append([backend, D, t_r, s, (sched.t_of_s(s) - sched.t_c) / sc.t_hat,
                             x / sc.xi_hat, x])
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by = defaultdict(list)
    for b, D, t_r, s, u, v, _ in rows:
        by[(D, t_r)].append((u, v))
    for (D, t_r), pts in sorted(by.items()):
        u, v = zip(*pts)
        ax.plot(u, v, "o-", ms=3, label=f"D={D}, {t_r:g}")
    ax.axvspan(-1, 1, color="0.9")
    ax.set_xlabel(r"$(t-t_c)/\hat t$")
    ax.set_ylabel(r"$\xi/\hat\xi$")
    ax.legend(fontsize=7)
    return fig, ["backend", "D", "t_r", "s", "t_scaled", "xi_scaled", "xi"], rows


def _collapse_edges(store, ctx):
    rows = []
    eta = KZConfig().eta
    for (backend, D), tab in ctx["series"].items():
        minus, plus = edge_curves(tab, ctx["s_c"], ctx["shape"])
        for branch, curves in (("-", minus), ("+", plus)):
            for t_r, (R, C) in curves.items():
                xh = kz_scales(t_r).xi_hat
                rows += [[backend, D, branch, t_r, r / xh, xh ** (1 + eta) * c] for r, c in zip(R, C)]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by = defaultdict(list)
    for b, D, br, t_r, x, y in rows:
        by[(br, D, t_r)].append((x, y))
    for (br, D, t_r), pts in sorted(by.items()):
        x, y = zip(*pts)
        ax.semilogy(x, np.maximum(y, 1e-12), "o-" if br == "-" else "s--", ms=3,
                    label=f"$t_c{br}\\hat t$, D={D}, {t_r:g}")
    ax.set_xlabel(r"$R/\hat\xi$")
    ax.set_ylabel(r"$\hat\xi^{1+\eta}C$")
    ax.legend(fontsize=6)
    return fig, ["backend", "D", "branch", "t_r", "R_scaled", "C_scaled"], rows


def _xi_finite(store, ctx):
    rows = []
    for (backend, D), _ in ctx["series"].items():
        if backend == "ipeps":
            continue
        for t_r, (ss, xi) in xi_curves(ctx["fits"], backend, D).items():
            rows += [[backend, D, t_r, s, x] for s, x in zip(ss, xi)]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by = defaultdict(list)
    for b, D, t_r, s, x in rows:
        by[(b, D, t_r)].append((s, x))
    for (b, D, t_r), pts in sorted(by.items()):
        s, x = zip(*pts)
        ax.plot(s, x, "o-", ms=3, label=f"{b} D={D}, {t_r:g}")
    ax.axvline(ctx["s_c"], color="0.6", lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel(r"$\xi$")
    ax.legend(fontsize=7)
    return fig, ["backend", "D", "t_r", "s", "xi"], rows


def _energy_finite(store, ctx):
    rows = [[e.backend, e.D, e.s, e.t_r, e.dE_per_site] for e in store.read("energy")
            if e.dE_per_site > 0]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by = defaultdict(list)
    for b, D, s, t_r, dE in rows:
        by[(b, D, s)].append((t_r, dE))
    for (b, D, s), pts in sorted(by.items()):
        t, dE = zip(*sorted(pts))
        ax.loglog(t, dE, "o-", ms=3, label=f"{b} D={D}, s={s:g}")
    t = np.array(sorted({r[3] for r in rows}))
    ref = max(r[4] for r in rows)
    for p, style in ((-1.2, ":"), (-2.0, "--")):
        ax.loglog(t, ref * (t / t[0]) ** p, "k" + style, lw=0.8, label=f"slope {p:g}")
    ax.set_xlabel(r"$J_r t_r$")
    ax.set_ylabel(r"$\Delta E$ per site")
    ax.legend(fontsize=6)
    return fig, ["backend", "D", "s", "t_r", "dE_per_site"], rows


_EMITTERS = {"error": _error, "collapse_sc": _collapse_sc, "xi_scaling": _xi_scaling,
             "collapse_edges": _collapse_edges, "xi_finite": _xi_finite,
             "energy_finite": _energy_finite}


def emit_figures(root, which=FIGURES, out_dir=None) -> list:
    """Write ``<name>.svg`` and ``<name>.csv`` for each requested figure that has data."""
    which = list(which or [])
    unknown = [w for w in which if w not in _EMITTERS]
    if unknown:
        raise ValueError(f"unknown figure(s): {', '.join(unknown)}")
    if not which:
        return []
    store = Store(root)
    out_dir = Path(out_dir) if out_dir else Path(root) / "figures"
    corr = store.read("corr")
    ctx = dict(ramp_settings(store), series=series(corr), fits=fits(corr))
    written = []
    for name in which:
        made = _EMITTERS[name](store, ctx)
        if made is None:
            continue
        fig, header, rows = made
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / f"{name}.csv", header, rows)
        _save(fig, out_dir / f"{name}.svg")
        written += [out_dir / f"{name}.csv", out_dir / f"{name}.svg"]
    return written
