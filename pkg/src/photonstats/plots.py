"""Render analysis figures to files next to the CSV/JSON output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import blinking_model, lifetime_model

_NS = 1e-3  # ps -> ns for axes


def _shade_windows(ax, peaks, color, alpha=0.25):
    for center in peaks.centers:
        lo = (center - peaks.window // 2) * _NS
        ax.axvspan(lo, lo + peaks.window * _NS, color=color, alpha=alpha, lw=0)


def save_correlation_figure(hist, peaks, path, title="Coincidence histogram"):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.step(hist.left_edges() * _NS, hist.counts, where="post", lw=0.8, color="C0")
    _shade_windows(ax, peaks.side(), "C3")
    center = peaks.centers == 0
    if center.any():
        _shade_windows(
            ax,
            type(peaks)(peaks.centers[center], peaks.areas[center],
                        peaks.errors[center], peaks.window),
            "C2",
        )
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("coincidences")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_hom_figure(hist_par, hist_orth, peaks_par, peaks_orth, path,
                    title="Two-photon interference"):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for hist, peaks, label, color in (
        (hist_orth, peaks_orth, "orthogonal", "C0"),
        (hist_par, peaks_par, "parallel", "C2"),
    ):
        side = peaks.innermost_side()
        norm = max(side.areas.mean(), 1.0)
        ax.step(hist.left_edges() * _NS, hist.counts / norm, where="post",
                lw=0.8, color=color, label=label)
    _shade_windows(ax, peaks_par.innermost_side(), "C3", alpha=0.15)
    ax.axvspan(-peaks_par.window / 2 * _NS, peaks_par.window / 2 * _NS,
               color="C1", alpha=0.2, lw=0)
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("normalized coincidences")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_blinking_figure(peaks, fit, path, title="Peak areas vs delay"):
    side = peaks.side()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.errorbar(side.centers * _NS, side.areas, yerr=side.errors, fmt=".",
                ms=4, lw=0.8, color="C0", label="peak areas")
    grid = np.linspace(side.centers.min(), side.centers.max(), 600)
    ax.plot(grid * _NS, blinking_model(grid, fit.a0, fit.a, fit.tau_b), "C3",
            label=(f"fit: strength {fit.a:.3g}, "
                   f"timescale {fit.tau_b * _NS:.3g} ns"))
    ax.set_xlabel("delay (ns)")
    ax.set_ylabel("peak area")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_lifetime_figure(hist, fit, path, title="Decay histogram"):
    x = hist.centers()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.semilogy(x * _NS, np.maximum(hist.counts, 0.5), ".", ms=3, color="C0",
                label="counts")
    model = lifetime_model(x, fit.amplitude, fit.t0, fit.t1,
                           fit.irf_sigma or 0.0, fit.background)
    ax.semilogy(x * _NS, np.maximum(model, 0.5), "C3",
                label=f"fit: t1 = {fit.t1:.4g} ps")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
