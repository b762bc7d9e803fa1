"""Matplotlib renderings of experiment CSV data.

Every figure is a view of numbers that are also written to CSV; nothing here
computes new quantities apart from the log-scale floor.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LOG_FLOOR = 1e-300

# Fixed salt and no timestamp so that SVG output is reproducible.
plt.rcParams["svg.hashsalt"] = "sqrk"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path, image_format):
    """Write ``fig`` to ``path`` plus the format's extension (stems may contain dots)."""
    path = Path(path)
    path = path.with_name(path.name + "." + image_format)
    meta = {"Date": None} if image_format in ("svg", "pdf") else {}
    fig.savefig(path, format=image_format, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def _floor(y):
    return np.maximum(np.asarray(y, dtype=float), LOG_FLOOR)


def plot_error_vs_time(results, path, image_format="svg", title=None):
    """Per-trial error clouds against elapsed time, mean curve on top.

    Trial curves are drawn translucent so that overlapping trials read darker.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for idx, res in enumerate(results):
        c = colors[idx % len(colors)]
        alpha = max(0.08, min(0.4, 2.0 / max(len(res.traces), 1)))
        for tr in res.traces:
            if len(tr):
                ax.plot(tr.elapsed, _floor(tr.sq_error), color=c, alpha=alpha, lw=0.8)
        if res.n_iters:
            ax.plot(res.mean_time[1:], _floor(res.mean_curve[1:]), color=c, lw=1.8, label=res.label)
    ax.set_yscale("log")
    ax.set_xlabel("wall-clock time (s)")
    ax.set_ylabel(r"$\|x_k - x^*\|^2$")
    if title:
        ax.set_title(title)
    if any(r.n_iters for r in results):
        ax.legend(fontsize=8)
    return _save(fig, path, image_format)


def plot_error_vs_iter(results, path, image_format="svg", title=None):
    """Mean error per configuration against iteration; dotted bound where ``r < 1``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for idx, res in enumerate(results):
        c = colors[idx % len(colors)]
        k = np.arange(res.n_iters + 1)
        ax.plot(k, _floor(res.mean_curve), color=c, lw=1.6, label=res.label)
        if res.bound is not None:
            ax.plot(k, _floor(res.bound), color=c, ls=":", lw=1.4, label=f"{res.label} bound")
    ax.set_yscale("log")
    ax.set_xlabel("iteration k")
    ax.set_ylabel(r"mean $\|x_k - x^*\|^2$")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path, image_format)


def plot_experiment(results, out_dir, image_format="svg", title=None):
    out_dir = Path(out_dir)
    return [
        plot_error_vs_time(results, out_dir / "error_vs_time", image_format, title),
        plot_error_vs_iter(results, out_dir / "error_vs_iter", image_format, title),
    ]


def plot_heatmap(heatmap, path, image_format="svg"):
    """T/F grid with ``q`` on the horizontal axis and ``alpha`` on the vertical one."""
    sat = heatmap.satisfied.T
    fig, ax = plt.subplots(figsize=(0.5 * sat.shape[1] + 2, 0.5 * sat.shape[0] + 1.5))
    ax.imshow(sat.astype(float), cmap="RdYlGn", vmin=0, vmax=1, origin="lower", aspect="auto")
    for (j, i), v in np.ndenumerate(sat):
        ax.text(i, j, "T" if v else "F", ha="center", va="center", fontsize=8)
    ax.set_xticks(range(heatmap.q_grid.size), [f"{q:.3g}" for q in heatmap.q_grid], rotation=45)
    ax.set_yticks(range(heatmap.alpha_grid.size), [f"{a:.3g}" for a in heatmap.alpha_grid])
    ax.set_xlabel("q")
    ax.set_ylabel(r"$\alpha$")
    ax.set_title(f"beta = {heatmap.beta:g}")
    return _save(fig, path, image_format)


def write_gnuplot(results, out_dir, title=None):
    """Gnuplot script over the ``mean_<label>.csv`` files, as an alternative to the figures."""
    out_dir = Path(out_dir)
    lines = [
        "set datafile separator ','",
        "set logscale y",
        "set key autotitle columnhead",
        "set xlabel 'iteration k'",
        "set ylabel 'mean squared error'",
        "set terminal svg size 640,420",
        "set output 'error_vs_iter_gnuplot.svg'",
    ]
    if title:
        lines.append(f"set title '{title}'")
    series = []
    for res in results:
        f = f"mean_{res.label}.csv"
        series.append(f"'{f}' using 1:2 with lines title '{res.label}'")
        if res.bound is not None:
            series.append(f"'{f}' using 1:3 with lines dt 3 title '{res.label} bound'")
    lines.append("plot " + ", \\\n     ".join(series))
    path = out_dir / "error_vs_iter.gp"
    path.write_text("\n".join(lines) + "\n")
    return path
