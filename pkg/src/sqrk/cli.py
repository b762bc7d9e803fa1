"""``sqrk`` command line: generate systems, run experiments, check hypotheses.

Every subcommand accepts ``--config FILE``, an INI file whose ``[sqrk]`` section
and ``[<subcommand>]`` section hold ``key = value`` pairs named like the long
flags (``sigma-samples = 50``).  Flags given on the command line win.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalError, SqrkError
from .experiments import run_experiment, spikes, summary_row, write_summary_csv
from .linalg import sigma_max
from .problems import GenSpec, gen_gaussian_system, load_system, save_system, write_system_csv
from .solvers import SolverConfig
from .theory import RateParams, estimate_sigma_aqb_min, hypothesis_heatmap, rate_r

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
OUTPUT_ENV = "SQRK_OUTPUT_DIR"
DESK = {"m": 5000, "n": 50}
FULL = {"m": 50000, "n": 100}
Q_MODES = ("min", "median", "second-largest")

log = logging.getLogger("sqrk")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def float_list(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def default_output_dir():
    return os.environ.get(OUTPUT_ENV, "sqrk_out")


def add_common(p):
    p.add_argument("--config", help="INI file with default flag values")
    p.add_argument("-v", "--verbose", action="store_true")


def add_system_flags(p, beta=None):
    g = p.add_argument_group("system")
    g.add_argument("--system", help="load a saved system instead of generating one")
    g.add_argument("--m", type=int, help="equations (desk preset 5000, full 50000)")
    g.add_argument("--n", type=int, help="unknowns (desk preset 50, full 100)")
    g.add_argument("--full-scale", action="store_true", help="use m=50000, n=100")
    g.add_argument("--beta", type=float, default=beta, help="corruption rate")
    g.add_argument("--magnitude", type=float, default=10.0, help="value of each corrupted entry")
    g.add_argument("--signed", action="store_true", help="random signs on corrupted entries")
    g.add_argument("--seed", type=int, default=1, help="system seed")
    g.add_argument("--x-star", choices=("zero", "gaussian"), default="gaussian",
                   help="planted solution (zero reproduces b = 0)")


def add_run_flags(p, iters=1000):
    g = p.add_argument_group("run")
    g.add_argument("--trials", type=int, default=10)
    g.add_argument("--iters", type=int, default=iters)
    g.add_argument("--solver-seed", type=int, default=0)
    g.add_argument("--x0", choices=("zero", "gaussian-unit"), default="zero")
    g.add_argument("--threshold-mode", choices=("inclusive", "strict"), default="inclusive")
    g.add_argument("--workers", type=int, default=1, help="processes for concurrent trials")
    g.add_argument("--output-dir", default=None, help=f"default ${OUTPUT_ENV} or ./sqrk_out")
    g.add_argument("--format", dest="image_format", choices=("svg", "png", "pdf"), default="svg")
    g.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    g.add_argument("--no-plots", action="store_true")


def add_bound_flags(p):
    g = p.add_argument_group("bounds")
    g.add_argument("--no-bound", action="store_true", help="skip the rate certificate overlay")
    g.add_argument("--sigma-source", choices=("trace", "sampled"), default="trace")
    g.add_argument("--sigma-samples", type=int, default=100)


def build_parser():
    parser = Parser(prog="sqrk", description="Generate corrupted systems, run quantile Kaczmarz experiments, check hypotheses.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("gen", help="generate and save a corrupted Gaussian system")
    add_common(p)
    add_system_flags(p, beta=1e-3)
    p.add_argument("--out", help="binary system file (default <output-dir>/system.bin)")
    p.add_argument("--csv", help="also write a CSV matrix dump")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="multi-trial solver runs with bound overlay")
    add_common(p)
    add_system_flags(p, beta=1e-3)
    add_run_flags(p)
    add_bound_flags(p)
    p.add_argument("--variant", choices=("RK", "QRK", "SQRK", "SSQRK"), default="SQRK")
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--alphas", type=float_list, default=[1.0, 0.5, 0.15])
    p.add_argument("--lam", type=int, default=11)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("heatmap", help="(q, alpha) pairs satisfying the convergence hypotheses")
    add_common(p)
    add_system_flags(p)
    p.add_argument("--betas", type=float_list, default=[1e-5, 1e-4, 1e-3, 1e-2])
    p.add_argument("--q-grid", type=float_list, default=[round(0.05 + 0.1 * i, 2) for i in range(10)])
    p.add_argument("--alpha-grid", type=float_list, default=[round(0.1 * (i + 1), 2) for i in range(10)])
    p.add_argument("--samples", type=int, default=100, help="random subsets per cell")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--format", dest="image_format", choices=("svg", "png", "pdf"), default="svg")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("vary-q", help="sweep q for several sampling rates")
    add_common(p)
    add_system_flags(p, beta=1e-3)
    add_run_flags(p)
    add_bound_flags(p)
    p.add_argument("--alphas", type=float_list, default=[1.0, 0.5, 0.15])
    p.add_argument("--qs", type=float_list, default=[0.5, 0.7, 0.9])
    p.set_defaults(func=cmd_vary_q)

    p = sub.add_parser("small-sample", help="constant-size sample variant with event logging")
    add_common(p)
    add_system_flags(p, beta=0.02)
    add_run_flags(p, iters=5000)
    p.add_argument("--lambdas", type=int_list, default=[3, 11, 51])
    p.add_argument("--q-modes", type=lambda s: [t.strip() for t in s.split(",") if t.strip()],
                   default=list(Q_MODES), help="subset of min,median,second-largest")
    p.add_argument("--q-prime", type=float, default=0.5, help="full-residual quantile for events")
    p.add_argument("--no-events", action="store_true", help="skip E1/E2/E3 classification")
    p.set_defaults(func=cmd_small_sample)

    p = sub.add_parser("rate", help="print the rate report for given parameters")
    add_common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float, required=False, default=1.0)
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--sigma-min", type=float, help="estimate of the subset singular value")
    p.add_argument("--system", help="derive m, beta and both singular values from a system file")
    p.add_argument("--sigma-samples", type=int, default=100)
    p.add_argument("--sample-seed", type=int, default=0)
    p.set_defaults(func=cmd_rate)
    return parser


def apply_config_file(parser, argv):
    """Re-parse ``argv`` with defaults taken from the ``--config`` INI file, if any."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise OSError(f"cannot read config file {known.config}")
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    values = dict(cp["sqrk"]) if cp.has_section("sqrk") else {}
    if cp.has_section(args.command):
        values.update(cp[args.command])
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest == "format":
            dest = "image_format"
        act = actions.get(dest)
        if act is None:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if act.nargs == 0:
            defaults[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            defaults[dest] = act.type(raw) if act.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def system_from_args(args):
    if getattr(args, "system", None):
        return load_system(args.system)
    preset = FULL if args.full_scale else DESK
    spec = GenSpec(
        m=args.m or preset["m"], n=args.n or preset["n"],
        beta=args.beta if args.beta is not None else 0.0,
        corruption_magnitude=args.magnitude, x_star_policy=args.x_star, seed=args.seed,
        signed=args.signed,
    )
    return gen_gaussian_system(spec)


def output_dir(args):
    return Path(args.output_dir or default_output_dir())


def cmd_gen(args):
    system = system_from_args(args)
    out = Path(args.out) if args.out else output_dir(args) / "system.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_system(system, out)
    if args.csv:
        write_system_csv(system, args.csv)
    print(f"m={system.m} n={system.n} corrupted={system.n_corrupt} seed={system.seed} file={out}")
    return EXIT_OK


def solver_common(args):
    return dict(max_iters=args.iters, seed=args.solver_seed, x0_policy=args.x0,
                threshold_mode=args.threshold_mode)


def experiment_kwargs(args):
    return dict(trials=args.trials, bound_overlay=not getattr(args, "no_bound", True),
                sigma_source=getattr(args, "sigma_source", "trace"),
                num_samples=getattr(args, "sigma_samples", 100), workers=args.workers,
                seed=args.solver_seed, plot=not args.no_plots, image_format=args.image_format,
                gnuplot=args.gnuplot)


def print_results(results):
    for res in results:
        row = summary_row(res)
        bound = "bound plotted" if row["bound_plotted"] else "no bound"
        r = "" if row["r"] is None else f" r={row['r']:.6g}"
        print(f"{res.label}: final mean sq error {row['final_mean_sq_error']:.3e}{r} ({bound})")


def cmd_solve(args):
    system = system_from_args(args)
    common = solver_common(args)
    if args.variant in ("SQRK",):
        configs = [SolverConfig("SQRK", q=args.q, alpha=a, **common) for a in args.alphas]
    elif args.variant == "QRK":
        configs = [SolverConfig("QRK", q=args.q, **common)]
    elif args.variant == "SSQRK":
        configs = [SolverConfig("SSQRK", q=args.q, lam=args.lam, **common)]
    else:
        configs = [SolverConfig("RK", **common)]
    for c in configs:
        c.validate_for(system.m)
    out = output_dir(args)
    title = f"beta = {system.beta:g}, m = {system.m}, n = {system.n}"
    results = run_experiment(system, configs, output_dir=out, title=title, **experiment_kwargs(args))
    print_results(results)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_vary_q(args):
    system = system_from_args(args)
    out = output_dir(args)
    common = solver_common(args)
    rows = []
    for a in args.alphas:
        configs = [SolverConfig("SQRK", q=q, alpha=a, **common) for q in args.qs]
        for c in configs:
            c.validate_for(system.m)
        sub = out / f"alpha_{a:g}"
        results = run_experiment(system, configs, output_dir=sub,
                                 title=f"alpha = {a:g}, beta = {system.beta:g}", **experiment_kwargs(args))
        print_results(results)
        rows.extend(summary_row(r) for r in results)
    write_summary_csv(rows, out / "summary.csv")
    print(f"wrote {out}")
    return EXIT_OK


def q_for_rank(k, lam):
    """A quantile level in ``(0, 1)`` whose rank in a sample of ``lam`` is exactly ``k``."""
    q = k / lam
    while int(np.floor(q * lam)) < k:
        q = float(np.nextafter(q, 1.0))
    return q


def small_sample_q(mode, lam):
    """Quantile level for a named mode, or ``None`` when it is not a valid level."""
    k = {"min": 1, "median": None, "second-largest": lam - 1}[mode]
    if mode == "median":
        q = 0.5
    else:
        q = q_for_rank(k, lam) if k >= 1 else None
    if q is None or not 0 < q < 1 or int(np.floor(q * lam)) < 1:
        return None
    return q


def cmd_small_sample(args):
    for mode in args.q_modes:
        if mode not in Q_MODES:
            raise UsageError(f"unknown q mode {mode!r}; choose from {', '.join(Q_MODES)}")
    system = system_from_args(args)
    out = output_dir(args)
    common = solver_common(args)
    rows = []
    for mode in args.q_modes:
        configs, infeasible = [], []
        for lam in args.lambdas:
            q = small_sample_q(mode, lam)
            if q is None:
                infeasible.append(lam)
                continue
            configs.append(SolverConfig("SSQRK", q=q, lam=lam, classify_events=not args.no_events,
                                        q_prime=args.q_prime, **common))
        for lam in infeasible:
            print(f"mode={mode} lambda={lam}: infeasible (floor(q * lambda) = 0)")
            rows.append({"mode": mode, "label": f"ssqrk_lam{lam}", "variant": "SSQRK", "lam": lam,
                         "infeasible": True})
        if not configs:
            continue
        kw = experiment_kwargs(args)
        kw["bound_overlay"] = False
        results = run_experiment(system, configs, output_dir=out / f"q_{mode}",
                                 title=f"q mode = {mode}, beta = {system.beta:g}", **kw)
        for res in results:
            row = summary_row(res)
            row.update(mode=mode, infeasible=False, spikes=sum(spikes(c).size for c in res.curves[:, 1:]))
            rows.append(row)
            freqs = res.event_frequencies()
            ev = "" if freqs["E1"] is None else \
                f" E1={freqs['E1']:.4f} E2={freqs['E2']:.4f} E3={freqs['E3']:.4f}"
            print(f"mode={mode} {res.label}: final mean sq error {row['final_mean_sq_error']:.3e}"
                  f" spikes={row['spikes']}{ev}")
    write_summary_csv(rows, out / "summary.csv", extra_columns=("mode", "infeasible", "spikes"))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_heatmap(args):
    if args.system:
        A = load_system(args.system).A
    else:
        preset = FULL if args.full_scale else DESK
        spec = GenSpec(m=args.m or preset["m"], n=args.n or preset["n"], beta=0.0, seed=args.seed)
        A = gen_gaussian_system(spec).A
    out = output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    smax = sigma_max(A)
    summary = []
    for beta in args.betas:
        hm = hypothesis_heatmap(A, beta, args.q_grid, args.alpha_grid, args.samples,
                                seed=args.sample_seed, sig_max=smax)
        stem = f"heatmap_beta{beta:g}"
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "alpha", "cond_sampling", "cond_quantile", "cond_rate", "satisfied"])
            for rec in hm.rows():
                w.writerow([repr(rec[0]), repr(rec[1])] + ["true" if v else "false" for v in rec[2:]])
        if not args.no_plots:
            from .plotting import plot_heatmap
            plot_heatmap(hm, out / stem, args.image_format)
        n_corrupt = int(np.floor(beta * A.shape[0]))
        summary.append((beta, n_corrupt, hm.count(), hm.satisfied.size))
        print(f"beta={beta:g} corrupted={n_corrupt} satisfied={hm.count()}/{hm.satisfied.size}")
    with open(out / "heatmap_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "n_corrupt", "satisfied", "cells"])
        for beta, k, c, total in summary:
            w.writerow([repr(beta), k, c, total])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rate(args):
    if args.system:
        system = load_system(args.system)
        m = system.m
        beta = system.beta if args.beta is None else args.beta
        smax = sigma_max(system.A) if args.sigma_max is None else args.sigma_max
        if args.sigma_min is not None:
            smin = args.sigma_min
        else:
            smin = estimate_sigma_aqb_min(system.A, args.alpha, args.q, beta, args.sigma_samples,
                                          rng=args.sample_seed)
    else:
        missing = [f for f in ("m", "sigma_max", "sigma_min") if getattr(args, f) is None]
        if missing:
            raise UsageError("rate needs --system or all of --m, --sigma-max, --sigma-min")
        m, smax, smin = args.m, args.sigma_max, args.sigma_min
        beta = args.beta if args.beta is not None else 0.0
    report = rate_r(RateParams(m, args.alpha, args.q, beta, smax, smin))
    print(f"m: {m}\nalpha: {args.alpha!r}\nq: {args.q!r}\nbeta: {beta!r}")
    print(f"sigma_max: {smax!r}\nsigma_aqb_min: {smin!r}")
    for key, val in report.as_dict().items():
        print(f"{key}: {val!r}".replace("True", "true").replace("False", "false"))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        try:
            args = apply_config_file(parser, argv)
        except SystemExit as exc:
            return exc.code
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"sqrk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"sqrk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"sqrk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SqrkError, ValueError) as exc:
        print(f"sqrk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
