"""Command-line interface.

Subcommands: simulate, smooth, fit, predict, experiment. Every tuning grid
is adjustable by flags; defaults match the library defaults.
"""

import argparse
import os
import sys

import numpy as np

from . import _kernels, dataio
from .errors import DataFormatError, GridSearchError, InvalidArgumentError, NumericalError
from .experiment import DEFAULT_BASE_SEED, ExperimentSpec, run_experiment, write_report
from .pipeline import fit_classifier, predict_curves
from .simgen import SimConfig, generate
from .smoother import functionalize


def _add_grid_flags(p):
    p.add_argument("--m-min", type=int, default=5, help="smallest basis size in the grid")
    p.add_argument("--m-max", type=int, default=15, help="largest basis size in the grid")
    p.add_argument("--zeta-points", type=int, default=20, help="log-spaced smoothing grid size")
    p.add_argument("--zeta-min", type=float, default=1e-8)
    p.add_argument("--zeta-max", type=float, default=1.0)


def _add_lambda_flags(p):
    p.add_argument("--lambda-points", type=int, default=25, help="log-spaced regularization grid size")
    p.add_argument("--lambda-min", type=float, default=1e-5)
    p.add_argument("--lambda-max", type=float, default=1.0)


def _grids(args):
    m_grid = tuple(range(args.m_min, args.m_max + 1))
    zeta_grid = tuple(np.logspace(np.log10(args.zeta_min), np.log10(args.zeta_max), args.zeta_points))
    return m_grid, zeta_grid


def _lambda_grid(args):
    return tuple(np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.lambda_points))


def _parse_fractions(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        v = float(part)
        if v > 1.0:
            v /= 100.0
        out.append(v)
    if not out:
        raise InvalidArgumentError("no label fractions given")
    return tuple(out)


def cmd_simulate(args):
    cfg = SimConfig(case_kind=f"case{args.case}", seed=args.seed, n=args.n,
                    train_size=args.train_size)
    ds = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    curves_path = os.path.join(args.out, "curves.csv")
    labels_path = os.path.join(args.out, "labels.csv")
    dataio.write_curves_csv(curves_path, ds.curves)
    dataio.write_labels_csv(labels_path, [c.id for c in ds.curves], ds.true_labels)
    print(f"wrote {curves_path} and {labels_path} ({len(ds.curves)} curves)")
    return 0


def cmd_smooth(args):
    curves, labels, dropped = dataio.ingest_csv(args.curves, None, drop_missing=args.drop_missing)
    if dropped:
        print(f"dropped {len(dropped)} curve(s) with missing values: {', '.join(dropped)}")
    m_grid, zeta_grid = _grids(args)
    fds = functionalize(curves, labels, m_grid=m_grid, zeta_grid=zeta_grid)
    with open(args.out, "w") as fh:
        cols = ",".join(f"w{j}" for j in range(1, fds.basis.m + 1))
        fh.write(f"curve_id,zeta,noise_variance,{cols}\n")
        for i, cid in enumerate(fds.curve_ids):
            ws = ",".join(repr(float(v)) for v in fds.coefficient_matrix[i])
            fh.write(f"{cid},{fds.zetas[i]!r},{fds.noise_variances[i]!r},{ws}\n")
    print(f"common m = {fds.basis.m}; wrote {args.out} ({fds.n} curves)")
    return 0


def cmd_fit(args):
    curves, labels, dropped = dataio.ingest_csv(args.curves, args.labels,
                                                drop_missing=args.drop_missing)
    if dropped:
        print(f"dropped {len(dropped)} curve(s) with missing values: {', '.join(dropped)}")
    m_grid, zeta_grid = _grids(args)
    model, fds, fit, report = fit_classifier(
        curves, labels, method=args.method, criterion=args.criterion,
        m_grid=m_grid, zeta_grid=zeta_grid, lambda_grid=_lambda_grid(args),
        max_em=args.max_em,
    )
    dataio.save_model(args.out, model)
    classes, _ = predict_curves(model, curves)
    labels = np.asarray(labels)
    labeled = labels > 0
    train_err = float(np.mean(classes[labeled] != labels[labeled]))
    print(f"method={args.method} criterion={report.criterion_kind}")
    print(f"selected lambda = {report.lam:.6e}")
    print(f"criterion value = {report.value:.6f}")
    print(f"common m = {model.basis.m}, n_classes = {model.n_classes}, "
          f"em_iterations = {model.em_iterations}")
    print(f"training error (labeled curves) = {train_err:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_predict(args):
    model = dataio.load_model(args.model)
    curves, _, dropped = dataio.ingest_csv(args.curves, None, drop_missing=args.drop_missing)
    if dropped:
        print(f"dropped {len(dropped)} curve(s) with missing values: {', '.join(dropped)}")
    classes, post = predict_curves(model, curves)
    dataio.write_predictions_csv(args.out, [c.id for c in curves], classes, post)
    print(f"wrote {args.out} ({len(curves)} predictions)")
    return 0


def cmd_experiment(args):
    methods = tuple(m.strip() for m in args.method.split(",") if m.strip())
    criteria = tuple(c.strip() for c in args.criterion.split(",") if c.strip())
    m_grid, zeta_grid = _grids(args)
    spec = ExperimentSpec(
        case_kind=f"case{args.case}",
        label_fractions=_parse_fractions(args.fractions),
        repetitions=args.reps,
        criteria=criteria,
        methods=methods,
        lambda_grid=_lambda_grid(args),
        m_grid=m_grid,
        zeta_grid=zeta_grid,
        base_seed=args.seed,
        n=args.n,
        train_size=args.train_size,
        max_em=args.max_em,
        workers=args.workers,
    )
    report = run_experiment(spec)
    path = write_report(report, args.out)
    print(f"backend={report.backend} workers={report.workers_used} "
          f"runtime={report.runtime_seconds:.1f}s")
    for c in report.cells:
        print(f"{c.method} {c.criterion} frac={c.fraction:g}: "
              f"error {c.mean_error:.3f} +/- {c.std_error:.3f}, "
              f"geomean lambda {c.geomean_lambda:.2e} "
              f"({c.reps_ok} ok / {c.reps_failed} failed)")
    print(f"wrote {path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="sflda",
        description="Semi-supervised functional logistic discrimination: "
                    "simulate, smooth, fit, predict and run replication experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a built-in simulation dataset as CSV")
    ps.add_argument("--case", type=int, choices=(1, 2), required=True)
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--n", type=int, default=600)
    ps.add_argument("--train-size", type=int, default=300)
    ps.add_argument("--out", required=True, help="output directory")
    ps.set_defaults(func=cmd_simulate)

    pm = sub.add_parser("smooth", help="functionalize curves and emit the coefficient CSV")
    pm.add_argument("--curves", required=True)
    pm.add_argument("--out", required=True)
    pm.add_argument("--drop-missing", action="store_true")
    _add_grid_flags(pm)
    pm.set_defaults(func=cmd_smooth)

    pf = sub.add_parser("fit", help="fit the classifier and persist the model file")
    pf.add_argument("--curves", required=True)
    pf.add_argument("--labels", required=True)
    pf.add_argument("--out", required=True, help="model file path")
    pf.add_argument("--method", choices=("sflda", "flda"), default="sflda")
    pf.add_argument("--criterion", choices=("gic", "gbic"), default="gic")
    pf.add_argument("--max-em", type=int, default=500)
    pf.add_argument("--drop-missing", action="store_true")
    _add_grid_flags(pf)
    _add_lambda_flags(pf)
    pf.set_defaults(func=cmd_fit)

    pp = sub.add_parser("predict", help="classify curves with a saved model")
    pp.add_argument("--model", required=True)
    pp.add_argument("--curves", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--drop-missing", action="store_true")
    pp.set_defaults(func=cmd_predict)

    pe = sub.add_parser("experiment", help="run the Monte Carlo replication experiment")
    pe.add_argument("--case", type=int, choices=(1, 2), required=True)
    pe.add_argument("--fractions", default="5,10,20,30,40,50,60",
                    help="comma list; values > 1 are percentages")
    pe.add_argument("--reps", type=int, default=50)
    pe.add_argument("--method", default="sflda", help="comma list from {sflda,flda}")
    pe.add_argument("--criterion", default="gic", help="comma list from {gic,gbic}")
    pe.add_argument("--seed", type=int, default=DEFAULT_BASE_SEED)
    pe.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    pe.add_argument("--n", type=int, default=600)
    pe.add_argument("--train-size", type=int, default=300)
    pe.add_argument("--max-em", type=int, default=500)
    pe.add_argument("--out", default="experiment_out", help="output directory")
    _add_grid_flags(pe)
    _add_lambda_flags(pe)
    pe.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, GridSearchError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
