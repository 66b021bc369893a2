#!/usr/bin/env python3
"""
SVG figures: chord diagrams of connectivity graphs, wavelet power maps and
top-view source maps.

Figures are written with a fixed SVG hash salt and no date metadata so
reruns produce identical files.
"""

from pathlib import Path
from typing import Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
from matplotlib.cm import ScalarMappable
from matplotlib.colors import Normalize
from matplotlib.patches import PathPatch
from matplotlib.path import Path as MplPath
import numpy as np
import seaborn as sns

from ..connectivity import ConnectivityGraph
from ..headmodel import SourceSpace
from ..wmem import WaveletDecomposition, power_grid

# Color palettes
CAT_PALETTE = sns.color_palette('colorblind')
SEQ_PALETTE = sns.cubehelix_palette(100, start=0.5, rot=-0.75)
CHORD_CMAP = 'coolwarm'  # blue (weak) -> red (strong)
GRAY = [0.5, 0.5, 0.5]

FIGSIZE = (4, 4)
SVG_HASH_SALT = "sourceloc"


def prettify_ax(ax):
    """Make axes more pleasant to look at"""
    for i, spine in enumerate(ax.spines.values()):
        if i == 3 or i == 1:  # top and right
            spine.set_visible(False)
    ax.tick_params(direction='out', length=3, color='k')
    ax.set_axisbelow(True)


def simple_ax(figsize=FIGSIZE, **kwargs):
    """Shortcut to make and 'prettify' a simple figure with 1 axis"""
    fig = plt.figure(figsize=figsize)
    ax = fig.add_subplot(111, **kwargs)
    prettify_ax(ax)
    return fig, ax


def set_pub_plot_context(context="paper"):
    """Set publication-quality plot context"""
    sns.set_theme(style="white", context=context)


def save_svg(fig, path: Path) -> Path:
    """Save a figure as a reproducible SVG and close it."""
    path = Path(path).with_suffix(".svg")
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'path'}):
        fig.savefig(path, format='svg', bbox_inches='tight', transparent=True, metadata={'Date': None})
    plt.close(fig)
    return path


# =============================================================================
# Figures
# =============================================================================

def plot_chord_diagram(g: ConnectivityGraph, title: str = "", output_path: Optional[Path] = None):
    """
    Vertices on a circle, edges as curves through the centre coloured by peak |r|.
    """
    fig, ax = simple_ax(figsize=FIGSIZE)
    ax.set_aspect('equal')
    ax.axis('off')

    v = g.n_vertices
    angles = np.pi / 2 - 2 * np.pi * np.arange(v) / v
    xy = np.column_stack([np.cos(angles), np.sin(angles)])
    cmap = plt.get_cmap(CHORD_CMAP)
    norm = Normalize(vmin=0.0, vmax=1.0)

    # weakest first so strong edges are drawn on top
    for i, j in sorted(g.edges, key=lambda e: g.correlations[e[0], e[1]]):
        r = float(g.correlations[i, j])
        path = MplPath([xy[i], 0.15 * (xy[i] + xy[j]), xy[j]],
                       [MplPath.MOVETO, MplPath.CURVE3, MplPath.CURVE3])
        ax.add_patch(PathPatch(path, facecolor='none', edgecolor=cmap(norm(r)), linewidth=0.5 + 2.0 * r, alpha=0.9))

    ax.scatter(xy[:, 0], xy[:, 1], s=60, color=CAT_PALETTE[0], edgecolors='white', linewidth=0.5, zorder=3)
    for k, label in enumerate(g.labels):
        ax.annotate(label, 1.12 * xy[k], ha='center', va='center', fontsize=7)
    ax.set_xlim(-1.3, 1.3)
    ax.set_ylim(-1.3, 1.3)

    cbar = plt.colorbar(ScalarMappable(norm=norm, cmap=cmap), ax=ax, shrink=0.7)
    cbar.set_label('Peak |cross-correlation|', fontsize=8)
    ax.set_title(title or f'e={g.n_edges}, v={g.n_vertices}, p={g.subgraph_count}',
                 fontsize=10, fontweight='bold', pad=8)

    if output_path:
        return save_svg(fig, output_path)
    return fig


def plot_power_map(dec: WaveletDecomposition, title: str = "Multiresolution power",
                   output_path: Optional[Path] = None):
    """Scale x time heat map of the mean squared wavelet coefficient."""
    grid = power_grid(dec)
    fig, ax = simple_ax(figsize=(6, 3))
    extent = (dec.box_time(1, 0), dec.box_time(1, grid.shape[1] - 1), dec.n_scales + 0.5, 0.5)
    im = ax.imshow(np.log10(grid + np.finfo(float).tiny), aspect='auto', extent=extent,
                   cmap=sns.color_palette("rocket", as_cmap=True), interpolation='nearest')
    ax.set_yticks(list(dec.scales))
    ax.set_yticklabels([f"{dec.band(j)[0]:.3g}-{dec.band(j)[1]:.3g}" for j in dec.scales], fontsize=7)
    ax.axvline(x=0.0, color=GRAY, linestyle='--', linewidth=1)
    ax.set_xlabel('Time from pulse (s)', fontsize=9)
    ax.set_ylabel('Band (Hz)', fontsize=9)
    ax.set_title(title, fontsize=10, fontweight='bold', pad=8)
    cbar = plt.colorbar(im, ax=ax, shrink=0.8)
    cbar.set_label('log10 power', fontsize=8)

    if output_path:
        return save_svg(fig, output_path)
    return fig


def plot_source_map(space: SourceSpace, values: np.ndarray, title: str = "",
                    highlight: Optional[Sequence[int]] = None, output_path: Optional[Path] = None):
    """
    Top view of the source space coloured by ``values`` (upper sources only).

    Args:
        space: Source space
        values: Per-source scalar (already thresholded for display)
        highlight: Source indices outlined in black (scout centres, true sources)
    """
    values = np.asarray(values, dtype=float)
    upper = np.flatnonzero(space.positions[:, 2] >= 0)
    fig, ax = simple_ax(figsize=FIGSIZE)
    ax.set_aspect('equal')
    vmax = float(np.max(np.abs(values[upper]))) if upper.size and np.any(values[upper]) else 1.0
    sc = ax.scatter(space.positions[upper, 0], space.positions[upper, 1], c=np.abs(values[upper]),
                    cmap=sns.color_palette("rocket_r", as_cmap=True), vmin=0.0, vmax=vmax,
                    s=40, edgecolors='white', linewidth=0.3)
    if highlight is not None:
        marks = [h for h in highlight if h in set(upper.tolist())]
        ax.scatter(space.positions[marks, 0], space.positions[marks, 1], s=70,
                   facecolors='none', edgecolors='k', linewidth=1.0)
    ax.set_xlabel('x (m, left - right)', fontsize=9)
    ax.set_ylabel('y (m)', fontsize=9)
    ax.set_title(title, fontsize=10, fontweight='bold', pad=8)
    cbar = plt.colorbar(sc, ax=ax, shrink=0.8)
    cbar.set_label('Integrated |activity|', fontsize=8)

    if output_path:
        return save_svg(fig, output_path)
    return fig
