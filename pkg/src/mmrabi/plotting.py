"""Static figure rendering over the CSV data (SVG by default)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.4,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "legend.frameon": False,
    "svg.hashsalt": "mmrabi",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path


def line_plot(path, x, series: dict, xlabel="", ylabel="", title=None, styles=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            kw = (styles or {}).get(label, {})
            ax.plot(x, y, label=label, **kw)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        return _save(fig, path)


def heatmap(path, x, t, values, xlabel="x / L", ylabel=r"$t\,\omega_c/2\pi$", sqrt=True,
            cbar_label="amplitude", title=None):
    """Space-time map; ``sqrt`` plots the square root of the (non-negative) values."""
    z = np.sqrt(np.clip(values, 0.0, None)) if sqrt else values
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        mesh = ax.pcolormesh(x, np.asarray(t) / (2 * np.pi), z, shading="auto", cmap="inferno",
                             rasterized=True)
        fig.colorbar(mesh, ax=ax, label=("sqrt " if sqrt else "") + cbar_label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def contour(path, g_grid, t, values, xlabel=r"$t\,\omega_c/2\pi$", ylabel=r"$g/\omega_c$",
            mark=None, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        cs = ax.contourf(np.asarray(t) / (2 * np.pi), g_grid, values, levels=20, cmap="viridis")
        fig.colorbar(cs, ax=ax, label="population")
        if mark is not None:
            ax.axhline(mark, color="w", ls="--", lw=1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def scatter_paths(path, paths: dict, xlabel="Re", ylabel="Im", title=None):
    """Closed curves such as phase-space trajectories; ``paths`` maps label -> (x, y, kwargs)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for label, (x, y, kw) in paths.items():
            ax.plot(x, y, **kw)
        ax.set_aspect("equal")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, path)
