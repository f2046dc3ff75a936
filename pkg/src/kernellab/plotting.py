"""PNG figures from the ``plot_<figure>__<series>.tsv`` files of a run directory."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

# figures whose y-values span many decades
_LOG_Y = {"eigenfunctions", "wkb_remainder", "log_sobolev"}
_LOG_X = {"wkb_remainder", "log_sobolev", "ground_state_ratio"}


def series_files(directory) -> dict:
    """``{figure: [(series, path), ...]}`` sorted by name."""
    groups = defaultdict(list)
    for path in sorted(Path(directory).glob("plot_*__*.tsv")):
        figure, series = path.stem[len("plot_"):].split("__", 1)
        groups[figure].append((series, path))
    return dict(groups)


def load_series(path):
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def render_figures(directory) -> list:
    """Render one PNG per figure group; returns the written paths."""
    groups = series_files(directory)
    if not groups:
        return []
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for figure, items in groups.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for series, path in items:
            x, y = load_series(path)
            if figure in _LOG_Y:
                y = np.abs(y)
            ax.plot(x, y, label=series)
        if figure in _LOG_Y:
            ax.set_yscale("log")
        if figure in _LOG_X:
            ax.set_xscale("log")
        ax.set_title(figure.replace("_", " "))
        if len(items) <= 12:
            ax.legend(fontsize="small")
        fig.tight_layout()
        target = Path(directory) / f"{figure}.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written
