"""Multi-trial experiment runner with CSV output and rate-bound overlays.

Files written per solver configuration ``<label>``:

``trace_<label>.csv``
    ``trial, iter, time_s, sq_error, gamma, accepted, accepted_corrupt,
    selected_row, selected_corrupt, event`` with one row per trial and
    iteration (iterations start at 1; ``event`` is empty unless events were
    classified).
``mean_<label>.csv``
    ``iter, mean_sq_error, bound_or_empty, mean_time_s`` for iterations
    ``0..N``; row 0 holds the initial error.

plus ``summary.csv`` with one row per configuration.  Floats are written with
``repr`` so that identical runs give byte-identical files apart from timings.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linalg import derive_seed, sigma_max, sigma_min_rows
from .problems import CorruptedSystem
from .solvers import EVENT_NAMES, IterateTrace, SolverConfig, solve
from .theory import (RateParams, RateReport, bound_curve, estimate_sigma_aqb_min,
                     estimate_sigma_from_trace, rate_r)

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["trial", "iter", "time_s", "sq_error", "gamma", "accepted", "accepted_corrupt",
                 "selected_row", "selected_corrupt", "event"]
MEAN_COLUMNS = ["iter", "mean_sq_error", "bound_or_empty", "mean_time_s"]
SUMMARY_COLUMNS = ["label", "variant", "alpha", "q", "lam", "trials", "iters", "sigma_source",
                   "sigma_max", "sigma_estimate", "r_G", "r_C_tilde", "r", "cond_sampling",
                   "cond_quantile", "cond_rate", "cond_rate_equiv", "is_convergent", "bound_plotted",
                   "initial_sq_error", "final_mean_sq_error", "time_p10_s", "time_p50_s",
                   "time_p90_s", "freq_E1", "freq_E2", "freq_E3"]
SIGMA_SOURCES = ("trace", "sampled")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


@dataclass
class ConfigResult:
    """All trials of one solver configuration plus its rate certificate."""

    config: SolverConfig
    traces: list[IterateTrace]
    sigma_source: str | None = None
    sigma_max: float | None = None
    sigma_estimate: float | None = None
    report: RateReport | None = None
    rk_rate: float | None = None
    bound: np.ndarray | None = field(default=None, repr=False)

    @property
    def label(self):
        return self.config.label()

    @property
    def n_iters(self):
        return self.config.max_iters

    @property
    def curves(self) -> np.ndarray:
        """Per-trial squared errors, shape ``(trials, N + 1)`` including iteration 0."""
        return np.array([np.concatenate(([t.initial_sq_error], t.sq_error)) for t in self.traces])

    @property
    def times(self) -> np.ndarray:
        return np.array([np.concatenate(([0.0], t.elapsed)) for t in self.traces])

    @property
    def mean_curve(self) -> np.ndarray:
        return self.curves.mean(axis=0)

    @property
    def mean_time(self) -> np.ndarray:
        return self.times.mean(axis=0)

    @property
    def initial_sq_error(self) -> float:
        return float(np.mean([t.initial_sq_error for t in self.traces]))

    @property
    def rate(self):
        if self.report is not None:
            return self.report.r
        return self.rk_rate

    def event_frequencies(self):
        total = sum(len(t) for t in self.traces)
        counts = {"E1": 0, "E2": 0, "E3": 0}
        classified = False
        for t in self.traces:
            if t.config is not None and t.config.classify_events:
                classified = True
                for k, v in t.event_counts().items():
                    counts[k] += v
        if not classified or total == 0:
            return {k: None for k in counts}
        return {k: v / total for k, v in counts.items()}


def trial_configs(config: SolverConfig, trials: int):
    """Per-trial configurations with seeds split from ``config.seed`` by trial index."""
    return [replace(config, seed=derive_seed(config.seed, t)) for t in range(trials)]


def _solve_trace(args):
    system, cfg = args
    return solve(system, cfg)[1]


def run_trials(system: CorruptedSystem, config: SolverConfig, trials: int, workers: int = 1):
    """Independent trials of one configuration; results do not depend on ``workers``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfgs = trial_configs(config, trials)
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_solve_trace, [(system, c) for c in cfgs]))
    return [solve(system, c)[1] for c in cfgs]


def rk_rate(system: CorruptedSystem) -> float:
    """Classical RK contraction factor ``1 - sigma_min(A)^2 / ||A||_F^2``."""
    smin = sigma_min_rows(system.A, np.arange(system.m))
    return 1.0 - smin ** 2 / float(np.sum(system.A ** 2))


def certify(result: ConfigResult, system: CorruptedSystem, sigma_source="trace",
            num_samples=100, seed=0, sig_max=None) -> ConfigResult:
    """Attach the rate report and, when the rate is below 1, the bound curve."""
    cfg = result.config
    if cfg.variant == "RK":
        if system.n_corrupt == 0:
            result.rk_rate = rk_rate(system)
    elif cfg.screened:
        if sigma_source not in SIGMA_SOURCES:
            raise ValueError(f"unknown sigma source {sigma_source!r}")
        result.sigma_source = sigma_source
        result.sigma_max = sigma_max(system.A) if sig_max is None else sig_max
        has_steps = any(len(t) for t in result.traces)
        if cfg.alpha * cfg.q > system.beta and (has_steps or sigma_source == "sampled"):
            if sigma_source == "trace":
                est = estimate_sigma_from_trace(system.A, result.traces, system.corrupt_support)
            else:
                est = estimate_sigma_aqb_min(system.A, cfg.alpha, cfg.q, system.beta, num_samples, rng=seed)
            result.sigma_estimate = est
            result.report = rate_r(RateParams(system.m, cfg.alpha, cfg.q, system.beta,
                                              result.sigma_max, est))
    r = result.rate
    if r is not None and (result.report is None or result.report.is_convergent):
        result.bound = bound_curve(r, result.initial_sq_error, result.n_iters)
    return result


def write_trace_csv(result: ConfigResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t_idx, tr in enumerate(result.traces):
            events = tr.config is not None and tr.config.classify_events
            for k in range(len(tr)):
                w.writerow([
                    t_idx, k + 1, fmt(float(tr.elapsed[k])), fmt(float(tr.sq_error[k])),
                    fmt(float(tr.gamma[k])), int(tr.accepted_count[k]),
                    int(tr.accepted_corrupted_count[k]), int(tr.selected_row[k]),
                    int(tr.selected_corrupted[k]), EVENT_NAMES[int(tr.event[k])] if events else "",
                ])


def write_mean_csv(result: ConfigResult, path) -> None:
    mean = result.mean_curve
    mtime = result.mean_time
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEAN_COLUMNS)
        for k in range(mean.size):
            b = result.bound[k] if result.bound is not None else None
            w.writerow([k, fmt(float(mean[k])), fmt(b), fmt(float(mtime[k]))])


def summary_row(result: ConfigResult) -> dict:
    cfg = result.config
    rep = result.report
    totals = np.array([t.elapsed[-1] if len(t) else 0.0 for t in result.traces])
    freqs = result.event_frequencies()
    row = {
        "label": result.label, "variant": cfg.variant,
        "alpha": cfg.alpha if cfg.variant != "RK" else None,
        "q": cfg.q if cfg.variant != "RK" else None,
        "lam": cfg.lam if cfg.variant == "SSQRK" else None,
        "trials": len(result.traces), "iters": cfg.max_iters,
        "sigma_source": result.sigma_source, "sigma_max": result.sigma_max,
        "sigma_estimate": result.sigma_estimate,
        "r_G": rep.r_G if rep else None, "r_C_tilde": rep.r_C_tilde if rep else None,
        "r": result.rate,
        "cond_sampling": rep.cond_sampling if rep else None,
        "cond_quantile": rep.cond_quantile if rep else None,
        "cond_rate": rep.cond_rate if rep else None,
        "cond_rate_equiv": rep.cond_rate_equiv if rep else None,
        "is_convergent": rep.is_convergent if rep else None,
        "bound_plotted": result.bound is not None,
        "initial_sq_error": result.initial_sq_error,
        "final_mean_sq_error": float(result.mean_curve[-1]),
        "time_p10_s": float(np.percentile(totals, 10)),
        "time_p50_s": float(np.percentile(totals, 50)),
        "time_p90_s": float(np.percentile(totals, 90)),
        "freq_E1": freqs["E1"], "freq_E2": freqs["E2"], "freq_E3": freqs["E3"],
    }
    return row


def write_summary_csv(rows, path, extra_columns=()) -> None:
    cols = list(extra_columns) + SUMMARY_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in cols])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_experiment(system: CorruptedSystem, configs, trials=10, output_dir=None,
                   bound_overlay=True, sigma_source="trace", num_samples=100, workers=1,
                   seed=0, plot=True, image_format="svg", gnuplot=False, title=None):
    """Run every configuration for ``trials`` trials and write CSVs and figures.

    With ``sigma_source='trace'`` the per-iteration accepted-set singular values
    are recorded automatically for screened variants.  Results completed before
    a failure are still written.
    """
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    sig_max = None
    results = []
    try:
        for cfg in configs:
            if bound_overlay and sigma_source == "trace" and cfg.screened and not cfg.record_sigma_trace:
                cfg = replace(cfg, record_sigma_trace=True)
            log.info("running %s: %d trials x %d iterations", cfg.label(), trials, cfg.max_iters)
            res = ConfigResult(cfg, run_trials(system, cfg, trials, workers))
            if bound_overlay:
                if cfg.screened and sig_max is None:
                    sig_max = sigma_max(system.A)
                certify(res, system, sigma_source, num_samples, seed, sig_max)
            results.append(res)
            if out is not None:
                write_trace_csv(res, out / f"trace_{res.label}.csv")
                write_mean_csv(res, out / f"mean_{res.label}.csv")
    finally:
        if out is not None and results:
            write_summary_csv([summary_row(r) for r in results], out / "summary.csv")
    if out is not None and plot:
        from . import plotting
        plotting.plot_experiment(results, out, image_format=image_format, title=title)
        if gnuplot:
            plotting.write_gnuplot(results, out, title=title)
    return results


def spikes(curve, window=100, factor=10.0) -> np.ndarray:
    """Iterations ``k >= window`` where ``curve[k]`` exceeds ``factor`` times the
    median of the preceding ``window`` values."""
    curve = np.asarray(curve, dtype=float)
    if curve.size <= window:
        return np.zeros(0, dtype=np.int64)
    trailing = np.median(np.lib.stride_tricks.sliding_window_view(curve[:-1], window), axis=1)
    return np.flatnonzero(curve[window:] > factor * trailing) + window
