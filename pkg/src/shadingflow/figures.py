"""Matplotlib figures for the CLI report path.

Every subcommand can render a PNG next to its delimited output.  These are
presentation helpers only; the SVG/CSV/JSON writers remain the primary
machine-readable interfaces.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .flow import FlowField  # noqa: E402
from .imaging import RasterImage  # noqa: E402
from .solvers import Curve1DSolution, PatchSolutionSet  # noqa: E402

__all__ = [
    "save_raster_figure",
    "save_flow_figure",
    "save_sweep_figure",
    "save_solutions_figure",
    "save_curve1d_figure",
]


def save_raster_figure(img: RasterImage, path: str, title: str = "rendered intensity") -> None:
    fig, ax = plt.subplots(figsize=(5, 4.2))
    half_w = (img.width - 1) / 2.0 * img.spacing
    half_h = (img.height - 1) / 2.0 * img.spacing
    im = ax.imshow(img.values, cmap="gray", origin="upper",
                   extent=[-half_w, half_w, -half_h, half_h])
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_flow_figure(field: FlowField, path: str) -> None:
    """Isophote-direction quiver over the intensity image."""
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    X, Y = np.meshgrid(field.xs, field.ys)
    ax.imshow(field.I, cmap="gray", origin="upper",
              extent=[field.xs.min(), field.xs.max(), field.ys.min(), field.ys.max()])
    ok = ~field.mask
    vx, vy = -field.U[:, :, 1], field.U[:, :, 0]
    ax.quiver(X[ok], Y[ok], vx[ok], vy[ok], color="#2d72d9",
              headwidth=1, headlength=0, headaxislength=0,
              pivot="mid", scale=1.2 / max(abs(field.xs[1] - field.xs[0]), 1e-12),
              scale_units="xy", width=0.003)
    ax.set_title("isophote flow")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_sweep_figure(a_values, b_values, counts, path: str) -> None:
    """Root count per tangent-plane cell."""
    a_values = np.asarray(a_values, float)
    b_values = np.asarray(b_values, float)
    counts = np.asarray(counts).reshape(len(b_values), len(a_values))
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.pcolormesh(a_values, b_values, counts, cmap="viridis", shading="nearest")
    fig.colorbar(im, ax=ax, label="real solutions")
    ax.set_xlabel("tangent slope a")
    ax.set_ylabel("tangent slope b")
    ax.set_title("solution count over tangent planes")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_solutions_figure(solset: PatchSolutionSet, path: str, extent: float = 1.0) -> None:
    """Gallery of the recovered patches as small surface plots."""
    n = max(len(solset.solutions), 1)
    cols = min(n, 4)
    rows = (n + cols - 1) // cols
    fig = plt.figure(figsize=(3.2 * cols, 2.9 * rows))
    t = np.linspace(-extent / 2, extent / 2, 41)
    X, Y = np.meshgrid(t, t)
    for i, sol in enumerate(solset.solutions):
        ax = fig.add_subplot(rows, cols, i + 1, projection="3d")
        p = sol.patch
        Z = p.a * X + p.b * Y + p.c * X ** 2 + p.d * X * Y + p.e * Y ** 2
        ax.plot_surface(X, Y, Z, cmap="viridis", linewidth=0, antialiased=True)
        ax.set_title(sol.classification, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_zticks([])
    if not solset.solutions:
        ax = fig.add_subplot(1, 1, 1)
        ax.text(0.5, 0.5, "no solutions", ha="center", va="center")
        ax.set_axis_off()
    fig.suptitle(f"tangent plane a={solset.tangent_plane[0]:.3g}, "
                 f"b={solset.tangent_plane[1]:.3g}")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_curve1d_figure(solution: Curve1DSolution, path: str,
                        truth=None, intensity=None) -> None:
    """Recovered profile, optional ground truth, and the intensity data."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(solution.xs, solution.f, color="#2a9d2a", lw=2.2, label="recovered f")
    if truth is not None:
        ax.plot(solution.xs, [truth(x) for x in solution.xs],
                color="#1f4aa8", lw=1.0, ls="--", label="true profile")
    if intensity is not None:
        ax.plot(solution.xs, [intensity.jet(x)[0] for x in solution.xs],
                color="#c23b3b", lw=1.0, label="intensity")
    ax.set_xlabel("x")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"profile reconstruction (max residual {solution.max_residual:.2e})")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
