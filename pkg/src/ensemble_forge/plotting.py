"""Figure rendering for the report-producing CLI verbs.

Rendering is always an optional add-on next to the delimited output: every
figure is built from exactly the rows written to disk, uses the headless Agg
backend, and strips volatile PNG metadata so reruns reproduce the same file.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_figure",
    "render_curve",
    "render_fit_reports",
    "render_permissibility",
    "render_trace_histogram",
]

_FIGSIZE = (6.4, 4.2)


def save_figure(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def render_curve(x, y, path, xlabel: str, ylabel: str, title: str, logy: bool = True) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(x, y, lw=1.5)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    save_figure(fig, path)


def render_fit_reports(reports: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    dts = [r.get("delta_t") or 0 for r in reports]
    if all(r["model"] == "beta_prime" for r in reports):
        ax.errorbar(dts, [r["N"] for r in reports], yerr=[r["stderr_N"] for r in reports],
                    fmt="s", label="N")
        ax.errorbar(dts, [r["L"] for r in reports], yerr=[r["stderr_L"] for r in reports],
                    fmt="o", label="L")
    else:
        ax.plot(dts, [r.get("N", np.nan) for r in reports], "s", label="N")
    ax.set_xlabel("return horizon (trading days)")
    ax.set_ylabel("fitted parameter")
    ax.legend()
    ax.grid(True, alpha=0.3)
    save_figure(fig, path)


def render_permissibility(s_grid, u_values, verdict: str, path) -> None:
    s = np.asarray(s_grid)
    u = np.asarray(u_values)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(s, u, lw=1.0)
    ax.axhline(0.0, color="k", lw=0.8)
    neg = u < 0
    if np.any(neg):
        ax.plot(s[neg], u[neg], "r.", ms=2, label="negative values")
        ax.legend()
    ax.set_xscale("log")
    ax.set_xlabel("normalized trace s")
    ax.set_ylabel("u(s)")
    ax.set_title(f"trace density: {verdict}")
    ax.grid(True, alpha=0.3)
    save_figure(fig, path)


def render_trace_histogram(bin_edges, counts, path) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    widths = np.diff(bin_edges)
    ax.bar(bin_edges[:-1], counts, width=widths, align="edge", alpha=0.7)
    ax.set_xlabel("trace / K")
    ax.set_ylabel("density")
    ax.grid(True, alpha=0.3)
    save_figure(fig, path)
