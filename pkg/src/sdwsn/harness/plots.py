"""Static SVG charts (matplotlib, deterministic output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "sdwsn"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(Path(path), format="svg", metadata={"Date": None})
    plt.close(fig)


def bar_chart(path, labels, values, ylabel="MSE", title=""):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(values)), values, color=["#3465a4", "#cc0000", "#73d216", "#f57900"][: len(values)])
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)


def line_chart(path, series: dict, xlabel: str, ylabel: str, title="", logy=False):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, (x, y) in series.items():
        ax.plot(x, y, label=name, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)
