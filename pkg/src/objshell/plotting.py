"""Figure panels for shells and grasp maps (written straight to files)."""

from __future__ import annotations

from typing import Optional

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from objshell.geometry import ObjectShell
from objshell.grasp import GraspMaps

PANEL_STYLE = {
    "font.size": 8,
    "axes.titlesize": 9,
}


def _masked(img: np.ndarray, mask: np.ndarray) -> np.ma.MaskedArray:
    return np.ma.masked_array(img, mask=~mask)


def _crop(mask: np.ndarray, pad: int = 8):
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return slice(None), slice(None)
    h, w = mask.shape
    return (
        slice(max(rows.min() - pad, 0), min(rows.max() + pad + 1, h)),
        slice(max(cols.min() - pad, 0), min(cols.max() + pad + 1, w)),
    )


def shell_figure(shell: ObjectShell, maps: GraspMaps, title: Optional[str] = None) -> Figure:
    """2x2 panel: entry depth, exit depth, feasibility, quality (cropped to the mask)."""
    mask = shell.mask
    crop = _crop(mask)
    fig = Figure(figsize=(6.4, 5.2), dpi=100)
    FigureCanvasAgg(fig)
    axs = fig.subplots(2, 2)
    depth_lo = shell.entry.data[mask].min() if mask.any() else 0.0
    depth_hi = shell.exit.data[mask].max() if mask.any() else 1.0
    panels = [
        ("entry depth [m]", shell.entry.data, "viridis", depth_lo, depth_hi),
        ("exit depth [m]", shell.exit.data, "viridis", depth_lo, depth_hi),
        ("feasibility", maps.feasibility.astype(float), "gray", 0.0, 1.0),
        ("quality", maps.quality, "magma", 0.0, 1.0),
    ]
    for ax, (name, img, cmap, lo, hi) in zip(axs.flat, panels):
        im = ax.imshow(_masked(img, mask)[crop], cmap=cmap, vmin=lo, vmax=hi, interpolation="nearest")
        ax.set_title(name)
        ax.set_facecolor("0.8")  # pixels outside the mask
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def save_shell_figure(path, shell: ObjectShell, maps: GraspMaps, title: Optional[str] = None) -> None:
    with matplotlib.rc_context(PANEL_STYLE):
        fig = shell_figure(shell, maps, title)
        # no software/date metadata so reruns give identical bytes
        fig.savefig(path, format="png", metadata={"Software": None})
