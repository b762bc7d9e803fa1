import numpy as np
import pytest

from sqrk.experiments import (MEAN_COLUMNS, TRACE_COLUMNS, ConfigResult, certify, read_csv, rk_rate,
                              run_experiment, run_trials, spikes, trial_configs)
from sqrk.errors import EmptyAcceptedSetError
from sqrk.problems import system_from_arrays
from sqrk.solvers import SolverConfig


def test_trial_seeds_distinct():
    seeds = [c.seed for c in trial_configs(SolverConfig(seed=3), 5)]
    assert len(set(seeds)) == 5


def test_run_trials_rejects_zero(small_system):
    with pytest.raises(ValueError):
        run_trials(small_system, SolverConfig(max_iters=1), 0)


def test_workers_do_not_change_results(small_system):
    cfg = SolverConfig("SQRK", q=0.8, alpha=0.5, max_iters=50, seed=4)
    seq = run_trials(small_system, cfg, 3, workers=1)
    par = run_trials(small_system, cfg, 3, workers=2)
    for a, b in zip(seq, par):
        assert np.array_equal(a.sq_error, b.sq_error)
        assert np.array_equal(a.selected_row, b.selected_row)


def test_mean_curve_and_cloud_envelope(small_system):
    res = ConfigResult(SolverConfig("SQRK", q=0.8, max_iters=100),
                       run_trials(small_system, SolverConfig("SQRK", q=0.8, max_iters=100), 4))
    c = res.curves
    assert c.shape == (4, 101)
    assert np.all(res.mean_curve >= c.min(axis=0) - 1e-15)
    assert np.all(res.mean_curve <= c.max(axis=0) + 1e-15)


def test_csv_outputs(tmp_path, small_system):
    cfgs = [SolverConfig("SQRK", q=0.8, alpha=a, max_iters=40, seed=1) for a in (1.0, 0.5)]
    results = run_experiment(small_system, cfgs, trials=3, output_dir=tmp_path, plot=False)
    for res in results:
        trace = read_csv(tmp_path / f"trace_{res.label}.csv")
        mean = read_csv(tmp_path / f"mean_{res.label}.csv")
        assert list(trace[0]) == TRACE_COLUMNS and len(trace) == 3 * 40
        assert list(mean[0]) == MEAN_COLUMNS and len(mean) == 41
        for k in range(1, 41):
            vals = [float(r["sq_error"]) for r in trace if int(r["iter"]) == k]
            assert abs(np.mean(vals) - float(mean[k]["mean_sq_error"])) <= 1e-12 * max(1.0, np.mean(vals))
        if res.bound is not None:
            r = res.rate
            for k in (0, 10, 40):
                assert float(mean[k]["bound_or_empty"]) == pytest.approx(r ** k * res.initial_sq_error,
                                                                         rel=1e-12)
        else:
            assert all(row["bound_or_empty"] == "" for row in mean)
    assert len(read_csv(tmp_path / "summary.csv")) == 2


def test_header_only_trace(tmp_path, small_system):
    run_experiment(small_system, [SolverConfig("SQRK", max_iters=0)], trials=1, output_dir=tmp_path,
                   plot=False)
    text = (tmp_path / "trace_sqrk_a1_q0.9.csv").read_text().splitlines()
    assert text == [",".join(TRACE_COLUMNS)]


def test_rk_certificate_on_clean_system(clean_system):
    res = ConfigResult(SolverConfig("RK", max_iters=10), run_trials(clean_system, SolverConfig("RK", max_iters=10), 1))
    certify(res, clean_system)
    sv = np.linalg.svd(clean_system.A, compute_uv=False)
    assert res.rate == pytest.approx(1 - sv[-1] ** 2 / clean_system.m, rel=1e-10)
    assert res.bound is not None and res.bound.size == 11
    assert rk_rate(clean_system) == res.rate


def test_sampled_sigma_source(small_system):
    cfg = SolverConfig("SQRK", q=0.8, alpha=1.0, max_iters=20)
    res = ConfigResult(cfg, run_trials(small_system, cfg, 1))
    certify(res, small_system, sigma_source="sampled", num_samples=5)
    assert res.sigma_source == "sampled" and res.sigma_estimate > 0
    with pytest.raises(ValueError):
        certify(ConfigResult(cfg, res.traces), small_system, sigma_source="nope")


def test_plots_written(tmp_path, small_system):
    cfgs = [SolverConfig("SQRK", q=0.8, max_iters=20)]
    run_experiment(small_system, cfgs, trials=2, output_dir=tmp_path, gnuplot=True)
    for name in ("error_vs_time.svg", "error_vs_iter.svg", "error_vs_iter.gp"):
        assert (tmp_path / name).stat().st_size > 0


def test_svg_deterministic(tmp_path, small_system):
    cfgs = [SolverConfig("SQRK", q=0.8, max_iters=20)]
    run_experiment(small_system, cfgs, trials=2, output_dir=tmp_path / "a", bound_overlay=False)
    run_experiment(small_system, cfgs, trials=2, output_dir=tmp_path / "b", bound_overlay=False)
    a = (tmp_path / "a" / "error_vs_iter.svg").read_bytes()
    b = (tmp_path / "b" / "error_vs_iter.svg").read_bytes()
    assert a == b


def test_partial_results_flushed(tmp_path):
    # four identical rows: every residual ties, so the strict rule can never accept
    tie = system_from_arrays(np.ones((4, 1)), [1.0])
    bad = SolverConfig("SQRK", q=0.5, max_iters=3, threshold_mode="strict", max_retries=0)
    with pytest.raises(EmptyAcceptedSetError):
        run_experiment(tie, [SolverConfig("SQRK", q=0.5, max_iters=3), bad], trials=1,
                       output_dir=tmp_path, plot=False, bound_overlay=False)
    rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 1 and rows[0]["label"] == "sqrk_a1_q0.5"


def test_spikes():
    curve = np.ones(300)
    curve[150] = 11.0
    np.testing.assert_array_equal(spikes(curve), [150])
    assert spikes(np.ones(50)).size == 0
