"""Monte Carlo experiment runner: repetitions x label fractions x methods x
criteria, with deterministic seeding and deterministic report bytes.

Per repetition: generate a dataset, split train/test once (equal class
priors), functionalize the training curves once (smoothing is label-free),
smooth the test curves at the selected common basis, then for every label
fraction and method fit the lambda grid by EM and score each requested
criterion. Repetitions are independent jobs; aggregation is keyed by
repetition index so worker scheduling cannot change the output.
"""

import dataclasses
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .basis import cross_product_matrix
from .errors import InvalidArgumentError
from .logit import block_penalty, build_design, design_rows, predict
from .pipeline import CRITERIA, METHODS
from .selection import DEFAULT_LAMBDA_GRID, fit_lambda_grid, select_from_fits
from .simgen import SimConfig, generate, partition
from .smoother import DEFAULT_M_GRID, DEFAULT_ZETA_GRID, functionalize, smooth_with_basis

DEFAULT_BASE_SEED = 1729
DEFAULT_FRACTIONS = (0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60)


@dataclass(frozen=True)
class ExperimentSpec:
    case_kind: str
    label_fractions: tuple = DEFAULT_FRACTIONS
    repetitions: int = 50
    criteria: tuple = ("gic",)
    methods: tuple = ("sflda",)
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    m_grid: tuple = DEFAULT_M_GRID
    zeta_grid: tuple = DEFAULT_ZETA_GRID
    base_seed: int = DEFAULT_BASE_SEED
    n: int = 600
    train_size: int = 300
    max_em: int = 500
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise InvalidArgumentError("repetitions must be >= 1")
        for f in self.label_fractions:
            if not 0.0 < f <= 1.0:
                raise InvalidArgumentError(f"label fraction {f} outside (0, 1]")
        for m in self.methods:
            if m not in METHODS:
                raise InvalidArgumentError(f"unknown method {m!r}")
        for c in self.criteria:
            if c not in CRITERIA:
                raise InvalidArgumentError(f"unknown criterion {c!r}")


@dataclass(frozen=True)
class RepetitionRecord:
    rep: int
    method: str
    criterion: str
    fraction: float
    error: float
    lam: float
    em_iterations: int
    converged: bool
    n_labeled: int
    n_unlabeled: int
    n_test: int


@dataclass(frozen=True)
class CellSummary:
    method: str
    criterion: str
    fraction: float
    mean_error: float
    std_error: float
    mean_lambda: float
    geomean_lambda: float
    reps_ok: int
    reps_failed: int


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    cells: list
    records: list
    failures: list
    runtime_seconds: float
    backend: str
    workers_used: int


def derive_rep_seeds(base_seed: int, rep: int):
    """Mix (base_seed, repetition) into independent generation/partition seeds."""
    state = np.random.SeedSequence((int(base_seed), int(rep))).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def _run_repetition(spec: ExperimentSpec, rep: int):
    gen_seed, part_seed = derive_rep_seeds(spec.base_seed, rep)
    cfg = SimConfig(case_kind=spec.case_kind, seed=gen_seed, n=spec.n, train_size=spec.train_size)
    ds = generate(cfg)
    parts = {f: partition(ds, f, part_seed).partition for f in spec.label_fractions}

    first = parts[spec.label_fractions[0]]
    train_idx = np.sort(np.concatenate([first.train_labeled, first.train_unlabeled]))
    test_idx = first.test
    for f, p in parts.items():
        got = np.sort(np.concatenate([p.train_labeled, p.train_unlabeled]))
        if not (np.array_equal(got, train_idx) and np.array_equal(p.test, test_idx)):
            raise AssertionError("train/test split changed across fractions within a repetition")
    train_ids = {ds.curves[i].id for i in train_idx}
    test_ids = {ds.curves[i].id for i in test_idx}
    if train_ids & test_ids:
        raise AssertionError("train and test curve sets overlap")

    train_curves = [ds.curves[i] for i in train_idx]
    fds = functionalize(train_curves, None, m_grid=spec.m_grid, zeta_grid=spec.zeta_grid)
    J = cross_product_matrix(fds.basis)
    penalty = block_penalty(fds.basis.m)
    W_test, _, _ = smooth_with_basis([ds.curves[i] for i in test_idx], fds.basis, spec.zeta_grid)
    Z_test = design_rows(W_test, J)
    y_test = ds.true_labels[test_idx]

    records, failures = [], []
    for f in spec.label_fractions:
        p = parts[f]
        labels = np.zeros(train_idx.size, dtype=np.int64)
        mask = np.isin(train_idx, p.train_labeled)
        labels[mask] = ds.true_labels[train_idx[mask]]
        for method in spec.methods:
            if method == "flda":
                keep = np.flatnonzero(labels > 0)
                fds_m = dataclasses.replace(
                    fds,
                    coefficient_matrix=fds.coefficient_matrix[keep],
                    labels=labels[keep],
                    noise_variances=fds.noise_variances[keep],
                    curve_ids=[fds.curve_ids[i] for i in keep],
                    zetas=fds.zetas[keep],
                    per_curve_best_m=fds.per_curve_best_m[keep],
                )
            else:
                fds_m = dataclasses.replace(fds, labels=labels)
            try:
                design = build_design(fds_m, J, n_classes=2)
                expected_unlabeled = 0 if method == "flda" else int(np.sum(labels == 0))
                if design.n_unlabeled != expected_unlabeled:
                    raise AssertionError(
                        f"{method} design has {design.n_unlabeled} unlabeled rows, expected {expected_unlabeled}"
                    )
                fits, _ = fit_lambda_grid(design, penalty, spec.lambda_grid, max_em=spec.max_em)
                if not fits:
                    raise RuntimeError("every lambda grid point failed to fit")
            except Exception as exc:  # noqa: BLE001 - cell failures are data, not crashes
                for crit in spec.criteria:
                    failures.append((rep, method, crit, f, f"{type(exc).__name__}: {exc}"))
                continue
            for crit in spec.criteria:
                try:
                    fit, report = select_from_fits(fits, design, penalty, crit)
                    classes, _ = predict(fit.beta, Z_test)
                    err = float(np.mean(classes != y_test))
                except Exception as exc:  # noqa: BLE001
                    failures.append((rep, method, crit, f, f"{type(exc).__name__}: {exc}"))
                    continue
                records.append(RepetitionRecord(
                    rep=rep, method=method, criterion=crit, fraction=f,
                    error=err, lam=report.lam, em_iterations=fit.em_iterations,
                    converged=fit.converged, n_labeled=design.n_labeled,
                    n_unlabeled=design.n_unlabeled, n_test=int(y_test.size),
                ))
    return records, failures


def _worker(args):
    spec, rep = args
    return rep, _run_repetition(spec, rep)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    t0 = time.time()
    reps = list(range(spec.repetitions))
    results = {}
    workers = max(1, int(spec.workers))
    if workers > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(reps))) as pool:
            for rep, out in pool.map(_worker, [(spec, r) for r in reps]):
                results[rep] = out
    else:
        for rep in reps:
            results[rep] = _run_repetition(spec, rep)

    records, failures = [], []
    for rep in reps:
        rec, fail = results[rep]
        records.extend(rec)
        failures.extend(fail)

    cells = []
    for method in spec.methods:
        for crit in spec.criteria:
            for f in sorted(spec.label_fractions):
                cell = [r for r in records
                        if r.method == method and r.criterion == crit and r.fraction == f]
                nfail = sum(1 for x in failures
                            if x[1] == method and x[2] == crit and x[3] == f)
                if not cell:
                    raise RuntimeError(
                        f"cell ({method}, {crit}, {f}) failed in every repetition"
                    )
                errs = np.array([r.error for r in cell])
                lams = np.array([r.lam for r in cell])
                std = float(np.std(errs, ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
                cells.append(CellSummary(
                    method=method, criterion=crit, fraction=f,
                    mean_error=float(np.mean(errs)), std_error=std,
                    mean_lambda=float(np.mean(lams)),
                    geomean_lambda=float(np.exp(np.mean(np.log(lams)))),
                    reps_ok=len(cell), reps_failed=nfail,
                ))
    return ExperimentReport(
        spec=spec, cells=cells, records=records, failures=failures,
        runtime_seconds=time.time() - t0, backend=_kernels.BACKEND,
        workers_used=workers,
    )


def write_report(report: ExperimentReport, out_dir: str):
    """Write report.csv, per-series plot files and per-repetition records.

    Output bytes are a pure function of (spec, base_seed); runtime metadata
    stays on the in-memory report only.
    """
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.csv")
    with open(report_path, "w") as fh:
        fh.write("method,criterion,fraction,mean_error,std_error,mean_lambda,"
                 "geomean_lambda,reps_ok,reps_failed\n")
        for c in report.cells:
            fh.write(
                f"{c.method},{c.criterion},{c.fraction:g},{c.mean_error:.6f},"
                f"{c.std_error:.6f},{c.mean_lambda:.6e},{c.geomean_lambda:.6e},"
                f"{c.reps_ok},{c.reps_failed}\n"
            )
    for method in report.spec.methods:
        for crit in report.spec.criteria:
            series = [c for c in report.cells if c.method == method and c.criterion == crit]
            path = os.path.join(out_dir, f"{method}_{crit}.dat")
            with open(path, "w") as fh:
                for c in series:
                    fh.write(f"{c.fraction:g} {c.mean_error:.6f} {c.std_error:.6f}\n")
    rec_path = os.path.join(out_dir, "records.csv")
    with open(rec_path, "w") as fh:
        fh.write("rep,method,criterion,fraction,error,lambda,em_iterations,"
                 "converged,n_labeled,n_unlabeled,n_test\n")
        for r in sorted(report.records, key=lambda r: (r.rep, r.method, r.criterion, r.fraction)):
            fh.write(
                f"{r.rep},{r.method},{r.criterion},{r.fraction:g},{r.error:.6f},"
                f"{r.lam:.6e},{r.em_iterations},{int(r.converged)},"
                f"{r.n_labeled},{r.n_unlabeled},{r.n_test}\n"
            )
    return report_path
