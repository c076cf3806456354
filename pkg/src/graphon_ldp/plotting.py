"""SVG line plots regenerated from result tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({"svg.hashsalt": "graphon-ldp", "font.size": 10})


def line_plot(path, x, series: dict, xlabel: str, ylabel: str, title: str = "", logx=False, logy=False, hline=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o", lw=1.2, ms=4, label=label)
    if hline is not None:
        ax.axhline(hline[0], color="0.4", ls="--", lw=1, label=hline[1])
    if logx:
        ax.set_xscale("log", base=2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_rows(path, rows: list[dict], x: str, ys: list[str], **kw):
    xs = [r[x] for r in rows]
    line_plot(path, xs, {y: [r[y] for r in rows] for y in ys}, xlabel=x, ylabel=kw.pop("ylabel", ", ".join(ys)), **kw)


def plot_trajectory(path, traj, max_nodes: int = 64):
    """Node states against time, thinned to at most ``max_nodes`` curves."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    step = max(1, traj.n // max_nodes)
    ax.plot(traj.times, traj.states[:, ::step], lw=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("u_i(t)")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
