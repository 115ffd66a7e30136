"""Figure rendering for solve and probe reports.

All renderers write PNG files next to the delimited output; they never
affect the numerical artifacts.  Figures use the Agg backend so they work
headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import GridFunction

__all__ = [
    "render_solution",
    "render_residual_profile",
    "render_mode_diagnostics",
    "render_probe_summary",
    "render_comparison",
]


def _ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)


def _heat_slice(gf: GridFunction):
    grid = gf.grid
    vals = np.asarray(gf.values)
    while vals.ndim > 2:
        vals = vals[vals.shape[0] // 2]
    x = grid.tangential_coords()
    y = grid.vertical_coords()
    return x, y, vals


def render_solution(gf: GridFunction, out_dir, stem: str = "solution") -> str:
    """Heat map of the solution field (middle tangential slice for d > 2)."""
    _ensure_dir(out_dir)
    x, y, vals = _heat_slice(gf)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    mesh = ax.pcolormesh(x, y, vals.T, shading="nearest", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label="u")
    ax.set_xlabel("x1")
    ax.set_ylabel("x_d")
    ax.set_title(stem)
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_residual_profile(residual: GridFunction, out_dir,
                            stem: str = "residual") -> str:
    """Per-layer sup of the residual against the vertical coordinate."""
    _ensure_dir(out_dir)
    grid = residual.grid
    vals = np.asarray(residual.values)
    layer_sup = np.max(np.abs(vals.reshape(-1, vals.shape[-1])), axis=0)
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    ax.semilogy(grid.vertical_coords(), np.maximum(layer_sup, 1e-300), "o-", ms=3)
    ax.set_xlabel("x_d")
    ax.set_ylabel("sup |A u - f| per layer")
    ax.grid(True, which="both", alpha=0.3)
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_mode_diagnostics(diagnostics: list, out_dir,
                            stem: str = "modes") -> str | None:
    """Per-mode ODE residuals and forcing magnitudes against |xi|."""
    if not diagnostics:
        return None
    _ensure_dir(out_dir)
    xi_abs = [float(np.linalg.norm(d["xi"])) for d in diagnostics]
    res = [max(d["ode_residual_rel"], 1e-300) for d in diagnostics]
    fsup = [max(d["f_sup"], 1e-300) for d in diagnostics]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.semilogy(xi_abs, res, "o")
    ax1.set_xlabel("|xi|")
    ax1.set_ylabel("ODE residual (rel)")
    ax1.grid(True, which="both", alpha=0.3)
    ax2.semilogy(xi_abs, fsup, "s", color="tab:orange")
    ax2.set_xlabel("|xi|")
    ax2.set_ylabel("sup |f~(xi; .)|")
    ax2.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_probe_summary(reports: list, out_dir, stem: str = "probes") -> str | None:
    """Pass/fail bar chart with the headline quotient per probe."""
    if not reports:
        return None
    _ensure_dir(out_dir)
    names, values, colors = [], [], []
    for i, rep in enumerate(reports):
        names.append(f"{rep['name']}#{i}")
        measured = rep.get("measured", {})
        val = measured.get("quotient")
        if val is None:
            val = measured.get("u_sup", 1.0 if rep["passed"] else 0.0)
        values.append(val)
        colors.append("tab:green" if rep["passed"] else "tab:red")
    fig, ax = plt.subplots(figsize=(max(5.0, 0.7 * len(names) + 2), 3.8))
    ax.bar(range(len(names)), values, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("headline measurement")
    ax.set_title("probe outcomes (green = pass)")
    fig.tight_layout()
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_comparison(layer_sups_a_minus_b: np.ndarray, vertical_coords: np.ndarray,
                      out_dir, stem: str = "comparison") -> str:
    _ensure_dir(out_dir)
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    ax.semilogy(vertical_coords, np.maximum(layer_sups_a_minus_b, 1e-300), "o-", ms=3)
    ax.set_xlabel("x_d")
    ax.set_ylabel("sup |u_a - u_b| per layer")
    ax.grid(True, which="both", alpha=0.3)
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
