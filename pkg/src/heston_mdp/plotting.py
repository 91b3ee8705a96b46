"""Static report figures written next to the JSON/CSV outputs (Agg backend)."""

from __future__ import annotations

from pathlib import Path as FsPath

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = [
    "plot_path",
    "plot_rate_grid",
    "plot_clt",
    "plot_cgf",
    "plot_ergodic",
    "plot_mdp",
    "plot_result",
]

_PNG_META = {"Software": None}


def _figure(ncols=1, width=5.0, height=3.8):
    fig = Figure(figsize=(width * ncols, height))
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, k + 1) for k in range(ncols)]
    return fig, axes


def _save(fig, dest) -> FsPath:
    dest = FsPath(dest)
    fig.tight_layout()
    fig.savefig(dest, dpi=110, metadata=_PNG_META)
    return dest


def plot_path(path, dest) -> FsPath:
    fig, (ax1, ax2) = _figure(2)
    ax1.plot(path.times, path.x, lw=0.6)
    ax1.set_xlabel("t")
    ax1.set_ylabel("X_t")
    ax2.plot(path.times, path.y, lw=0.6, color="tab:orange")
    ax2.set_xlabel("t")
    ax2.set_ylabel("Y_t")
    return _save(fig, dest)


def plot_rate_grid(x, y, values, dest, labels=("alpha", "beta"), title="") -> FsPath:
    fig, (ax,) = _figure(1)
    v = np.where(np.isfinite(values), values, np.nan)
    cs = ax.contourf(x, y, v, levels=20)
    fig.colorbar(cs, ax=ax)
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    if title:
        ax.set_title(title)
    return _save(fig, dest)


def plot_clt(result, dest) -> FsPath:
    rec = result.records[0]
    emp = np.asarray(rec["covariance"])
    fig, axes = _figure(3, width=3.6)
    mats = (emp, np.asarray(rec["target_gamma_inv"]), np.asarray(rec["target_sandwich"]))
    titles = ("empirical", "4 Gamma^-1", "4 R (x) Sigma^-1")
    lim = max(float(np.max(np.abs(m))) for m in mats)
    names = ["a", "b", "c", "d"]
    for ax, m, t in zip(axes, mats, titles):
        im = ax.imshow(m, cmap="RdBu_r", vmin=-lim, vmax=lim)
        ax.set_title(t)
        ax.set_xticks(range(4), names)
        ax.set_yticks(range(4), names)
        for i in range(4):
            for j in range(4):
                ax.text(j, i, f"{m[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=axes[-1])
    return _save(fig, dest)


def plot_cgf(result, dest) -> FsPath:
    fig, (ax,) = _figure(1)
    per_u = {}
    for r in result.records:
        per_u.setdefault(r["u_index"], []).append(r)
    for k, recs in sorted(per_u.items()):
        t = [r["T"] for r in recs]
        line = ax.errorbar(
            t,
            [r["estimate"] for r in recs],
            yerr=[3 * r["se"] for r in recs],
            marker="o",
            capsize=3,
            label=f"u={np.round(recs[0]['u'], 3).tolist()}",
        )
        ax.axhline(recs[0]["limit"], ls="--", color=line[0].get_color(), lw=0.8)
    ax.set_xlabel("T")
    ax.set_ylabel("L_T(u)")
    ax.legend(fontsize=7)
    return _save(fig, dest)


def plot_ergodic(result, dest) -> FsPath:
    traj = result.summary["trajectory"]
    limits = result.summary["limits"]
    fig, axes = _figure(4, width=3.2)
    t = np.asarray(traj["t"])
    for ax, name in zip(axes, limits):
        ax.plot(t, np.asarray(traj[name], dtype=float), lw=0.8)
        lim = limits[name]
        ax.axhline(lim, color="k", ls="--", lw=0.8)
        ax.axhspan(0.95 * lim, 1.05 * lim, color="0.9")
        ax.set_title(name)
        ax.set_xlabel("t")
    return _save(fig, dest)


def plot_mdp(result, dest) -> FsPath:
    fig, axes = _figure(2)
    for ax, est in zip(axes, ("cir", "full")):
        radii = sorted({r["radius"] for r in result.records if r["estimator"] == est})
        for rad in radii:
            recs = [r for r in result.records if r["estimator"] == est and r["radius"] == rad]
            t = np.array([r["T"] for r in recs])
            vals = np.array([np.nan if r["log_rate"] is None else r["log_rate"] for r in recs])
            ses = np.array([np.nan if r["log_rate_se"] is None else r["log_rate_se"] for r in recs])
            line = ax.errorbar(t, vals, yerr=3 * ses, marker="o", capsize=3, label=f"naive r={rad:g}")
            color = line[0].get_color()
            if est == "cir" and "is_log_rate" in recs[0]:
                iv = np.array([np.nan if r["is_log_rate"] is None else r["is_log_rate"] for r in recs])
                ax.plot(t, iv, marker="x", ls=":", color=color, label=f"IS r={rad:g}")
            ax.axhline(recs[0]["theory_log_rate"], ls="--", color=color, lw=0.8)
        ax.set_title("(a_hat, b_hat)" if est == "cir" else "theta_hat")
        ax.set_xlabel("T")
        ax.set_ylabel("log(p) / lambda_T")
        ax.legend(fontsize=7)
    return _save(fig, dest)


_PLOTTERS = {
    "clt-check": plot_clt,
    "cgf-check": plot_cgf,
    "ergodic-check": plot_ergodic,
    "mdp-experiment": plot_mdp,
}


def plot_result(result, out_dir=None) -> FsPath:
    out = FsPath(out_dir if out_dir is not None else result.config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    return _PLOTTERS[result.experiment](result, out / f"{result.experiment.replace('-', '_')}.png")
