"""Figures written by the ``report`` command.

The qualitative panel uses a fixed pixel layout so its size is predictable:
``PANEL_COLUMNS`` tiles of ``TILE`` px per row, ``GUTTER`` px between and
around tiles, and a ``HEADER`` px title band on top::

    width  = 3 * TILE + 4 * GUTTER
    height = HEADER + n * (TILE + GUTTER)
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402

TILE = 256
GUTTER = 8
HEADER = 28
DPI = 100
PANEL_COLUMNS = ("Image", "Ground truth", "Predicted")

RC = {
    "font.size": 10,
    "font.family": "sans-serif",
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.facecolor": "white",
}


def panel_size(n_rows: int) -> tuple[int, int]:
    return 3 * TILE + 4 * GUTTER, HEADER + n_rows * (TILE + GUTTER)


def _new_figure(width_px: int, height_px: int) -> Figure:
    # a quarter pixel of slack stops float truncation from dropping a row
    fig = Figure(figsize=((width_px + 0.25) / DPI, (height_px + 0.25) / DPI), dpi=DPI)
    FigureCanvasAgg(fig)
    return fig


def render_panel(rows, path) -> tuple[int, int]:
    """Save an image | ground truth | prediction grid.

    ``rows`` is a sequence of ``(id, image HxWx3 in [0,1], gt HxW, pred HxW)``.
    Returns the (width, height) of the written PNG in pixels.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("panel needs at least one row")
    w, h = panel_size(len(rows))
    with matplotlib.rc_context(RC):
        fig = _new_figure(w, h)
        fig.patch.set_facecolor("white")
        for c, title in enumerate(PANEL_COLUMNS):
            cx = GUTTER + c * (TILE + GUTTER) + TILE / 2
            fig.text(cx / w, 1 - (HEADER / 2) / h, title, ha="center", va="center")
        for r, (id_, image, gt, pred) in enumerate(rows):
            top = HEADER + r * (TILE + GUTTER)
            for c, tile in enumerate((image, gt, pred)):
                left = GUTTER + c * (TILE + GUTTER)
                ax = fig.add_axes([left / w, 1 - (top + TILE) / h, TILE / w, TILE / h])
                if tile.ndim == 2:
                    ax.imshow(tile, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
                else:
                    ax.imshow(np.clip(tile, 0, 1), interpolation="nearest")
                ax.set_axis_off()
            ax = fig.axes[-3]
            ax.text(4, 14, id_, color="white", fontsize=8,
                    bbox=dict(facecolor="black", alpha=0.5, pad=1, linewidth=0))
        fig.savefig(path, dpi=DPI)
    return w, h


def render_loss_curves(log_path, path) -> None:
    """Plot per-step generator and discriminator losses from ``train_log.csv``."""
    with open(log_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{log_path} has no rows")
    step = np.array([int(r["step"]) for r in rows])
    cols = {k: np.array([float(r[k]) for r in rows])
            for k in ("g_adv", "g_l1", "d_real", "d_fake", "d_total")}
    with matplotlib.rc_context(RC):
        fig = _new_figure(900, 350)
        ax1, ax2 = fig.subplots(1, 2)
        ax1.plot(step, cols["g_adv"], lw=1, label="adversarial")
        ax1.plot(step, cols["g_l1"], lw=1, label="L1 (unweighted)")
        ax1.set_title("Generator")
        ax1.set_xlabel("step")
        ax1.legend()
        ax2.plot(step, cols["d_real"], lw=1, label="real")
        ax2.plot(step, cols["d_fake"], lw=1, label="fake")
        ax2.plot(step, cols["d_total"], lw=1, color="k", label="total")
        ax2.set_title("Discriminator")
        ax2.set_xlabel("step")
        ax2.legend()
        fig.tight_layout()
        fig.savefig(Path(path), dpi=DPI)
