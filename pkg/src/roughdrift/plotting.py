"""Figures for suite reports, rendered straight from their JSON form."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_moment_fit(table, fit, path, target=None, title=None):
    """Log-log moments with error bars and the fitted power law."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        lags = np.asarray(table["lags"])
        est = np.asarray(table["estimates"])
        se = np.asarray(table["std_errors"])
        ax.errorbar(lags, est, yerr=1.96 * se, fmt="o", ms=3, capsize=2, label=f"m={table['m']:g}")
        xs = np.geomspace(lags.min(), lags.max(), 50)
        ax.plot(xs, np.exp(fit["intercept"]) * xs ** fit["slope"], "-", lw=1, label=f"slope {fit['slope']:.3f}")
        if target is not None:
            ax.plot(xs, est[-1] * (xs / lags[-1]) ** target, "--", lw=1, color="0.4", label=f"target {target:.2f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("lag t - s")
        ax.set_ylabel(f"L^m norm of {table.get('quantity', 'K')} increment")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_sewing(report, path):
    """Largest conditional and L^m defects per dyadic scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        lv = report["level_table"]
        L = np.array([r["length"] for r in lv])
        ax.loglog(L, [r["max_defect"] for r in lv], "o-", ms=3, label="max |E^u defect|")
        ax.loglog(L, [r["lm_defect"] for r in lv], "s-", ms=3, label="L^m defect")
        ax.set_xlabel("t - s")
        ax.set_ylabel("defect")
        ax.set_title(f"alpha1={report['alpha1']:.2f}  beta1={report['beta1']:.2f}  L^m slope={report['lm_slope']:.2f}")
        ax.legend()
        return _save(fig, path)


def plot_tightness(report, path):
    """Exceedance against M, one curve per mollification level."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        M = np.asarray(report["M_grid"])
        for eps, p in zip(report["epsilons"], report["exceedance_prob"]):
            p = np.asarray(p)
            pos = p > 0
            ax.plot(M[pos], p[pos], "o-", ms=2, lw=1, label=f"eps={eps:.2g}")
        ax.axvline(report["uniformity_M"], color="0.5", ls=":", lw=1)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("M")
        ax.set_ylabel("exceedance probability")
        ax.legend(fontsize=6, ncol=2)
        return _save(fig, path)


def plot_stability(report, path):
    """The three stability terms along the diagonal."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eps = np.asarray(report["epsilons"])
        for key in ("a1", "a2"):
            ax.loglog(eps, report[key], "o-", ms=3, label=key.upper())
        ax.invert_xaxis()
        ax.set_xlabel("mollification scale")
        ax.set_ylabel("mean sup-norm")
        ax.set_title(f"KS {report['ks_statistic']:.4f} (critical {report['ks_critical']:.4f})")
        ax.legend()
        return _save(fig, path)
