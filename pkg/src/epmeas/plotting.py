"""Figures for report runs. Uses the non-interactive Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG output byte-stable across runs
_PNG_META = {"Software": None}


def save_fig(fig, path: str) -> str:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_pressure(curve, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    a = curve.alpha_grid
    ax.plot(a, curve.best_upper, label="upper bound")
    if curve.has_lower:
        ax.plot(a, curve.best_lower, label="lower bound")
        ax.fill_between(a, curve.best_lower, curve.best_upper, alpha=0.2)
    ax.set_xlabel("alpha")
    ax.set_ylabel("e(alpha)")
    ax.legend()
    ax.set_title("Entropic pressure brackets")
    return save_fig(fig, path)


def plot_rate_function(rate, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rate.s_grid, rate.I, label="I(s)")
    ax.fill_between(rate.s_grid, rate.I_lo, rate.I_hi, alpha=0.2, label="bracket")
    ax.set_xlabel("s")
    ax.set_ylabel("I(s)")
    ax.legend()
    ax.set_title(f"Rate function ({rate.scope})")
    return save_fig(fig, path)


def plot_ep(bounds, path: str, mc=None) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(bounds.T_values, bounds.rates, "o-", label="E[sigma_T]/T")
    ax.plot(bounds.T_values, np.maximum.accumulate(bounds.lower_bounds), "s--", label="certified lower bound")
    if bounds.ceiling is not None:
        ax.axhline(bounds.ceiling, color="k", lw=0.8, label="ceiling")
    if mc is not None:
        ax.axhspan(mc.ci_low, mc.ci_high, color="C2", alpha=0.2, label=f"Monte Carlo T={mc.T}")
    ax.set_xlabel("T")
    ax.set_ylabel("entropy production rate")
    ax.legend()
    return save_fig(fig, path)


def plot_exponents(chernoff, stein, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(chernoff.T_values, chernoff.rates, "o-", label="(1/T) log c_T")
    ax.plot(chernoff.T_values, chernoff.bound, ":", label="(e_T(1/2) - log 2)/T")
    ax.plot(stein.T_values, stein.rates, "s-", label="(1/T) log s_T")
    if chernoff.target is not None:
        ax.axhline(chernoff.target, color="C0", lw=0.8)
    if stein.target is not None:
        ax.axhline(stein.target, color="C2", lw=0.8)
    ax.set_xlabel("T")
    ax.legend()
    return save_fig(fig, path)


def plot_sigma_law(law, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.vlines(law.s, 0, law.mass_p, label="P")
    ax.plot(law.s, law.mass_p_hat, "o", ms=3, label="P_hat")
    ax.set_xlabel("sigma_T / T")
    ax.set_ylabel("mass")
    ax.legend()
    ax.set_title(f"Law of sigma_T/T, T={law.T}")
    return save_fig(fig, path)
