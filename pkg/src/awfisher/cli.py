"""``awfisher`` command-line interface.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import asymlab, metacli, nulldist
from .errors import DataValidationError, NumericalError, PValueDomainError
from .pcombine import Method

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _n_grid(text):
    """``lo:hi:step`` (inclusive), a comma list, or a single integer."""
    try:
        if ":" in text:
            lo, hi, step = (int(v) for v in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sample-size grid {text!r}")


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_common(p, seed=True, reps=None):
    p.add_argument("--threads", type=int, default=0, help="worker threads (0 = all cores)")
    if seed:
        p.add_argument("--seed", type=_seed, default=0, help="random seed")
    if reps is not None:
        p.add_argument("--reps", type=_positive_int, default=reps, help="Monte Carlo replicates")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="awfisher",
        description="Adaptively weighted Fisher meta-analysis and asymptotics lab.",
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("combine", help="analyse a feature x study p-value matrix", formatter_class=fmt)
    c.add_argument("--input", required=True, help="p-value matrix CSV")
    c.add_argument("--out", required=True, help="result CSV")
    c.add_argument("--method", choices=[m.value for m in Method], default=Method.AW_FISHER.value)
    c.add_argument("--null-table", help="prebuilt null table; built on the fly when omitted")
    c.add_argument("--draws", type=_positive_int, default=1_000_000, help="null draws when building on the fly")
    c.add_argument("--fdr", type=float, default=0.05, help="BH false discovery rate")
    c.add_argument("--fdr-column", choices=["mc", "upper"], default="mc", help="p column fed to BH")
    c.add_argument("--on-invalid", choices=["error", "drop"], default="error")
    c.add_argument("--categories", help="write weight-category counts to this CSV")
    _add_common(c)

    null = sub.add_parser("null", help="null table lifecycle", formatter_class=fmt)
    nsub = null.add_subparsers(dest="null_command", required=True)
    nb = nsub.add_parser("build", help="build and save a null table", formatter_class=fmt)
    nb.add_argument("-k", type=_positive_int, required=True, help="number of studies")
    nb.add_argument("--draws", type=_positive_int, default=1_000_000)
    nb.add_argument("-o", "--out", required=True)
    _add_common(nb)
    ni = nsub.add_parser("inspect", help="print a null table summary", formatter_class=fmt)
    ni.add_argument("path")

    sim = sub.add_parser("sim", help="asymptotics simulations", formatter_class=fmt)
    ssub = sim.add_subparsers(dest="sim_command", required=True)
    sr = ssub.add_parser("rates", help="weight error rates over a sample-size grid", formatter_class=fmt)
    sr.add_argument("--effects", type=_floats, default=[0.2, 0.3, 0.4, 0.5])
    sr.add_argument("--lambdas", type=_floats, help="sample-size shares (default all 1)")
    sr.add_argument("--n", type=_n_grid, default=list(range(200, 1001, 100)), help="lo:hi:step or list")
    sr.add_argument("--out-rates", default="rates.csv")
    sr.add_argument("--out-fits", default="fits.csv")
    _add_common(sr, reps=100_000)

    ss = ssub.add_parser("slopes", help="exact-slope estimates", formatter_class=fmt)
    ss.add_argument("--effects", type=_floats, default=[0.5, 0.5, 0.5])
    ss.add_argument("--lambdas", type=_floats, help="sample-size shares (default all 1)")
    ss.add_argument("--n", type=_positive_int, default=10_000, help="average sample size")
    ss.add_argument(
        "--methods", default="single_study,fisher,aw_fisher",
        help="comma list of single_study, fisher, aw_fisher",
    )
    ss.add_argument("--null-table", help="null table for aw_fisher; built on the fly when omitted")
    ss.add_argument("--draws", type=_positive_int, default=1_000_000)
    ss.add_argument("--out", default="slopes.csv")
    _add_common(ss, reps=10_000)

    pd = sub.add_parser("plotdata", help="tidy CSVs for external plotting", formatter_class=fmt)
    pd.add_argument("--rates", help="rate CSV from 'sim rates'")
    pd.add_argument("--fits", help="fit CSV from 'sim rates'")
    pd.add_argument("--results", help="result CSV from 'combine'")
    pd.add_argument("--grid-points", type=_positive_int, default=101, help="points per fitted curve")
    pd.add_argument("--out-dir", default=".", help="directory for the output CSVs")
    return parser


def _configs(effects, lambdas):
    if lambdas is None:
        lambdas = [1.0] * len(effects)
    if len(lambdas) != len(effects):
        raise UsageError("--lambdas must have one entry per effect")
    return [asymlab.StudyConfig(e, l) for e, l in zip(effects, lambdas)]


def _load_or_build(path, k, draws, seed, threads):
    if path:
        table = nulldist.load_null_table(path)
        if table.k != k:
            raise DataValidationError(f"null table {path} has k={table.k}, need k={k}")
        return table
    return nulldist.build_null_table(k, draws, seed, threads=threads)


def _info(msg):
    print(msg, file=sys.stderr)


def cmd_combine(args):
    matrix = metacli.load_matrix(args.input, on_invalid=args.on_invalid)
    if matrix.dropped:
        _info(f"dropped {matrix.dropped} row(s) with invalid p-values")
    table = None
    if args.method == Method.AW_FISHER.value:
        table = _load_or_build(args.null_table, matrix.k, args.draws, args.seed, args.threads)
    results = metacli.analyze(
        matrix, table, fdr=args.fdr, method=args.method, threads=args.threads,
        p_column=args.fdr_column,
    )
    metacli.write_results(results, args.out)
    cats = metacli.categorize(results)
    if args.categories:
        metacli.write_categories(cats, args.categories)
    n_sig = sum(r.significant for r in results)
    flagged = sum(not r.bounds_ok for r in results)
    _info(f"{len(results)} features, {n_sig} significant at FDR {args.fdr}")
    if flagged:
        _info(f"{flagged} feature(s) with p_mc outside the Bonferroni bounds (table resolution)")
    for cat, count in cats:
        _info(f"  {cat or '-'}\t{count}")


def cmd_null(args):
    if args.null_command == "build":
        table = nulldist.build_null_table(args.k, args.draws, args.seed, threads=args.threads)
        nulldist.save_null_table(table, args.out)
        _info(f"wrote {args.out}: k={table.k} draws={table.draws} seed={table.seed}")
        return
    table = nulldist.load_null_table(args.path)
    s = table.samples
    print(f"k\t{table.k}")
    print(f"draws\t{table.draws}")
    print(f"seed\t{table.seed}")
    for q in (0.0, 0.5, 0.9, 0.99, 0.999, 1.0):
        print(f"q{q:g}\t{float(np.quantile(s, q))!r}")


def cmd_sim(args):
    configs = _configs(args.effects, args.lambdas)
    if args.sim_command == "rates":
        points = asymlab.estimate_weight_error_rates(
            configs, args.n, args.reps, args.seed, threads=args.threads
        )
        asymlab.write_rate_points(points, args.out_rates)
        fits = asymlab.fit_rate_curves(points)
        asymlab.write_fits(fits, args.out_fits)
        fitted = {(study, kind) for study, kind, _ in fits}
        curves = {(p.study, p.kind) for p in points}
        for study, kind in sorted(curves - fitted, key=lambda sk: sk[0]):
            _info(f"study {study} {kind.value}: too few nonzero rates to fit")
        if not fits:
            raise NumericalError("no rate curve could be fitted")
        for study, kind, f in fits:
            _info(f"study {study} {kind.value}: {f.form.value} a={f.a:.6g} b={f.b:.6g} R2={f.r_squared:.4f}")
        return

    methods = [asymlab.SlopeMethod(m.strip()) for m in args.methods.split(",") if m.strip()]
    if args.n % 2:
        raise UsageError("--n must be even")
    table = None
    if asymlab.SlopeMethod.AW_FISHER in methods:
        table = _load_or_build(args.null_table, len(configs), args.draws, args.seed, args.threads)
    estimates = []
    for m in methods:
        if m is asymlab.SlopeMethod.SINGLE_STUDY:
            for k in range(len(configs)):
                estimates.append(
                    asymlab.estimate_exact_slope(
                        m, configs, args.n, args.reps, args.seed, threads=args.threads, study=k
                    )
                )
        else:
            estimates.append(
                asymlab.estimate_exact_slope(
                    m, configs, args.n, args.reps, args.seed, table=table, threads=args.threads
                )
            )
    asymlab.write_slopes(estimates, args.out)
    for e in estimates:
        who = "" if e.study is None else f" study {e.study}"
        _info(f"{e.method.value}{who}: {e.estimate:.6g} (se {e.stderr:.2g})")


def cmd_plotdata(args):
    if not (args.rates or args.results):
        raise UsageError("plotdata needs --rates and/or --results")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.rates:
        points = asymlab.read_rate_points(args.rates)
        fits = asymlab.read_fits(args.fits) if args.fits else []
        path = out_dir / "rate_curves.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("study", "kind", "series", "n", "value"))
            for p in points:
                w.writerow((p.study, p.kind.value, "observed", p.n, repr(p.estimate)))
                w.writerow((p.study, p.kind.value, "observed_over_n", p.n, repr(p.estimate / p.n)))
            for study, kind, f in fits:
                ns = [pt.n for pt in points if pt.study == study and pt.kind is kind]
                if not ns:
                    continue
                grid = np.linspace(min(ns), max(ns), args.grid_points)
                for n, v in zip(grid, f.predict(grid)):
                    w.writerow((study, kind.value, "fitted", repr(float(n)), repr(float(v))))
        _info(f"wrote {path}")
    if args.results:
        results = metacli.read_results(args.results)
        path = out_dir / "categories.csv"
        metacli.write_categories(metacli.categorize(results), path)
        _info(f"wrote {path}")


COMMANDS = {"combine": cmd_combine, "null": cmd_null, "sim": cmd_sim, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _info(f"awfisher: error: {exc}")
        return EXIT_USAGE
    except (DataValidationError, PValueDomainError, OSError) as exc:
        _info(f"awfisher: data error: {exc}")
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        _info(f"awfisher: numeric failure: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        _info(f"awfisher: error: {exc}")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
