"""Figures written next to the CSV/JSON output.

matplotlib is imported lazily with the Agg backend so that the library and
the plain-text CLI paths never need it.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("figure output needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(plt, ncols=1, width=6.0):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return plt.subplots(1, ncols, figsize=(width, width * golden / max(1, ncols - 0.6)), squeeze=False)


def plot_capital_paths(paths: Mapping[str, np.ndarray], dt: float, out: str | Path, labels=None) -> Path:
    """Log capital over time for Investor, the index and chosen speculators."""
    plt = _pyplot()
    with plt.rc_context(STYLE):
        fig, axes = _figure(plt)
        ax = axes[0, 0]
        for name in labels or paths:
            path = paths[name]
            t = dt * np.arange(1, path.size + 1)
            ax.plot(t, np.log(path), lw=0.8, label=name)
        ax.set_xlabel("time")
        ax.set_ylabel("log capital")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out, dpi=150)
        plt.close(fig)
    return Path(out)


def plot_sweep(rows: Sequence[dict], out: str | Path) -> Path:
    """Bound at optimal epsilon, |capm residual| and max|m_n| against dt."""
    plt = _pyplot()
    dt = np.array([r["dt"] for r in rows])
    with plt.rc_context(STYLE):
        fig, axes = _figure(plt, ncols=2, width=7.0)
        left, right = axes[0]
        left.loglog(dt, [r["bound_opt"] for r in rows], "o-", label="upper bound (optimal eps)")
        left.loglog(dt, [max(r["abs_capm_residual"], 1e-300) for r in rows], "s--", label="|capm residual|")
        left.set_xlabel("dt")
        left.legend(frameon=False)
        right.loglog(dt, [r["max_abs_m"] for r in rows], "o-", label="max |m_n|")
        right.loglog(dt, rows[0]["max_abs_m"] * np.sqrt(dt / dt[0]), ":", color="grey", label="sqrt(dt) slope")
        right.set_xlabel("dt")
        right.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out, dpi=150)
        plt.close(fig)
    return Path(out)


def plot_verify(trials, out: str | Path) -> Path:
    """Histogram of the per-trial minimum slack of both witness bounds."""
    plt = _pyplot()
    upper = np.array([t.min_upper_slack for t in trials])
    lower = np.array([t.min_lower_slack for t in trials])
    with plt.rc_context(STYLE):
        fig, axes = _figure(plt)
        ax = axes[0, 0]
        bins = 40
        for data, name in ((upper, "upper slack"), (lower, "lower slack")):
            data = data[np.isfinite(data)]
            if data.size:
                ax.hist(data, bins=bins, histtype="step", label=name)
        ax.axvline(0.0, color="k", lw=0.6)
        ax.set_xlabel("bound minus residual (min over epsilon, alpha)")
        ax.set_ylabel("trials")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(out, dpi=150)
        plt.close(fig)
    return Path(out)
