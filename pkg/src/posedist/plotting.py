"""Polar visualization of a reflection/revolution distribution.

One curve per reflection hypothesis on a shared polar axis: reflection 0
as a solid red line, reflection 1 as a dashed green line, radius equal to
each bin's probability. Written as SVG.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scoring import PoseDistribution

_STYLES = (
    {"color": "tab:red", "linestyle": "-", "label": "reflection 0"},
    {"color": "tab:green", "linestyle": "--", "label": "reflection 1"},
)


def plot_distribution(dist: PoseDistribution, path, title: str | None = None) -> None:
    """Render the two reflection rows as polar curves and save as SVG."""
    rows = dist.rows()
    n = dist.n_revolution
    theta = np.radians(np.arange(n + 1) * 360.0 / n)  # close the loop
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"}, figsize=(5, 5))
    for i in range(rows.shape[0]):
        style = _STYLES[i % len(_STYLES)]
        r = np.append(rows[i], rows[i][0])
        ax.plot(theta, r, linewidth=1.2, **style)
    ax.set_rlabel_position(90)
    ax.tick_params(labelsize=7)
    ax.legend(loc="upper right", bbox_to_anchor=(1.25, 1.1), fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
