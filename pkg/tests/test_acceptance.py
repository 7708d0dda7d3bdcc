"""Acceptance suite: replication targets and oracle gates.

Each test prints one `ACCEPTANCE <id>: PASS|FAIL` line (run pytest with -s
to see them live). The two Monte Carlo fixtures run the full 50-repetition
experiments through the CLI once per session; expect a few minutes of wall
time with the compiled backend.

Two components are known-unattainable under the exact model equations this
package implements (saturated criteria on separable labeled designs and the
soft-pseudo-label fixed point); their tests assert the stated targets
anyway and fail honestly. See the repository notes for the analysis.
"""

import csv
import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from sflda import dataio
from sflda.basis import (
    build_basis,
    cross_product_matrix,
    design_matrix,
    place_knots,
    second_difference_penalty,
)
from sflda.cli import main
from sflda.experiment import ExperimentSpec, run_experiment, write_report
from sflda.logit import (
    ClassifierDesign,
    CoefficientBlock,
    SemiLogisticFit,
    block_penalty,
    build_design,
    em_fit,
    fisher_scoring_mstep,
    penalized_loglik,
    posteriors,
    score_and_information,
)
from sflda.selection import gbic_classifier, gic_classifier, criterion_matrices
from sflda.smoother import RawCurve, fit_penalized, functionalize

FRACTIONS = (0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60)

CASE2_SFLDA_GIC = (0.056, 0.040, 0.032, 0.031, 0.029, 0.028, 0.027)
CASE1_SFLDA_GIC = (0.269, 0.210, 0.202, 0.192, 0.189, 0.186, 0.185)
CASE1_FLDA_GIC = (0.248, 0.216, 0.204, 0.193, 0.187, 0.185, 0.184)
CASE1_FLDA_GBIC = (0.359, 0.237, 0.200, 0.188, 0.185, 0.183, 0.182)

CASE1_LAMBDA_GIC = 5.96e-5
CASE1_LAMBDA_GBIC = 9.48e-5
CASE2_LAMBDA_GIC = 1.00e-2
CASE2_LAMBDA_GBIC = 2.28e-2


def _report_line(name, ok, detail=""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{' - ' + detail if detail else ''}")
    return ok


def _run_case(tmp_path_factory, case):
    out = tmp_path_factory.mktemp(f"accept_case{case}")
    code = main([
        "experiment", "--case", str(case),
        "--fractions", "5,10,20,30,40,50,60", "--reps", "50",
        "--method", "sflda,flda", "--criterion", "gic,gbic",
        "--workers", "2", "--seed", "1729", "--out", str(out),
    ])
    assert code == 0
    cells = {}
    with open(out / "report.csv") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], row["criterion"], float(row["fraction"]))
            cells[key] = {
                "mean_error": float(row["mean_error"]),
                "geomean_lambda": float(row["geomean_lambda"]),
                "reps_ok": int(row["reps_ok"]),
            }
    return cells


@pytest.fixture(scope="session")
def case2_cells(tmp_path_factory):
    return _run_case(tmp_path_factory, 2)


@pytest.fixture(scope="session")
def case1_cells(tmp_path_factory):
    return _run_case(tmp_path_factory, 1)


def _check_row(cells, method, criterion, targets, tol):
    diffs = []
    for frac, target in zip(FRACTIONS, targets):
        got = cells[(method, criterion, frac)]["mean_error"]
        diffs.append((frac, got, target, abs(got - target)))
    worst = max(d[3] for d in diffs)
    ok = worst <= tol
    detail = " ".join(f"{f:g}%:{g:.3f}(ref {t:.3f})" for f, g, t, _ in diffs)
    return ok, worst, detail


def test_criterion_1_case2_error_row(case2_cells):
    ok, worst, detail = _check_row(case2_cells, "sflda", "gic", CASE2_SFLDA_GIC, 0.015)
    assert _report_line("1 case2 sflda/gic errors (tol 0.015)",
                        ok, f"max dev {worst:.4f}; {detail}")


def test_criterion_2_case1_sflda_gic_row(case1_cells):
    ok, worst, detail = _check_row(case1_cells, "sflda", "gic", CASE1_SFLDA_GIC, 0.03)
    assert _report_line("2 case1 sflda/gic errors (tol 0.03)",
                        ok, f"max dev {worst:.4f}; {detail}")


def test_criterion_2_case1_flda_gic_row(case1_cells):
    ok, worst, detail = _check_row(case1_cells, "flda", "gic", CASE1_FLDA_GIC, 0.03)
    assert _report_line("2 case1 flda/gic errors (tol 0.03)",
                        ok, f"max dev {worst:.4f}; {detail}")


def test_criterion_2_case1_flda_gbic_row(case1_cells):
    # The 5% reference value (0.359) is unattainable here: with soft
    # pseudo-labels both criteria saturate on a separable 15-point labeled
    # design and select the same floor lambda, so this row's 5% cell equals
    # the flda/gic one (~0.27). Asserted as stated; expected to fail red.
    ok, worst, detail = _check_row(case1_cells, "flda", "gbic", CASE1_FLDA_GBIC, 0.03)
    assert _report_line("2 case1 flda/gbic errors (tol 0.03)",
                        ok, f"max dev {worst:.4f}; {detail}")


def _pooled_geomean(cells, method, criterion):
    lams = [cells[(method, criterion, f)]["geomean_lambda"] for f in FRACTIONS]
    return float(np.exp(np.mean(np.log(lams))))


def test_criterion_3_case1_lambda_magnitudes(case1_cells):
    got_gic = _pooled_geomean(case1_cells, "sflda", "gic")
    got_gbic = _pooled_geomean(case1_cells, "sflda", "gbic")
    ok_gic = CASE1_LAMBDA_GIC / 10 <= got_gic <= CASE1_LAMBDA_GIC * 10
    ok_gbic = CASE1_LAMBDA_GBIC / 10 <= got_gbic <= CASE1_LAMBDA_GBIC * 10
    assert _report_line(
        "3 case1 lambda geomeans (within one order)", ok_gic and ok_gbic,
        f"gic {got_gic:.2e} (ref {CASE1_LAMBDA_GIC:.2e}), "
        f"gbic {got_gbic:.2e} (ref {CASE1_LAMBDA_GBIC:.2e})",
    )


def test_criterion_3_case2_lambda_magnitudes(case2_cells):
    # Unattainable under the exact displayed criteria: every Case-2 labeled
    # design is separable, both criteria are monotone in lambda and select
    # the grid floor in all 50 repetitions. Asserted as stated; fails red.
    got_gic = _pooled_geomean(case2_cells, "sflda", "gic")
    got_gbic = _pooled_geomean(case2_cells, "sflda", "gbic")
    ok_gic = CASE2_LAMBDA_GIC / 10 <= got_gic <= CASE2_LAMBDA_GIC * 10
    ok_gbic = CASE2_LAMBDA_GBIC / 10 <= got_gbic <= CASE2_LAMBDA_GBIC * 10
    assert _report_line(
        "3 case2 lambda geomeans (within one order)", ok_gic and ok_gbic,
        f"gic {got_gic:.2e} (ref {CASE2_LAMBDA_GIC:.2e}), "
        f"gbic {got_gbic:.2e} (ref {CASE2_LAMBDA_GBIC:.2e})",
    )


def _random_design(rng, n, n1, m, L):
    Z = np.column_stack([np.ones(n), rng.normal(size=(n, m))])
    y = rng.integers(1, L + 1, n1)
    y[:L] = np.arange(1, L + 1)
    Y = np.zeros((n1, L - 1))
    for i, v in enumerate(y):
        if v < L:
            Y[i, v - 1] = 1.0
    return ClassifierDesign(Z=Z, n_labeled=n1, Y=Y, L=L,
                            curve_ids=[f"c{i}" for i in range(n)],
                            order=np.arange(n))


def test_criterion_4_gradient_oracle_suite():
    """Analytic score vs central finite differences on 20 random instances."""
    rng = np.random.default_rng(20240)
    combos = list(itertools.product((2, 3, 4), (4, 8), (1e-5, 1e-2)))
    instances = combos + [combos[i % len(combos)] for i in range(20 - len(combos))]
    worst = 0.0
    for L, m, lam in instances:
        design = _random_design(rng, n=18, n1=12, m=m, L=L)
        penalty = block_penalty(m)
        q = m + 1
        beta = rng.normal(0, 0.5, (L - 1, q))
        pseudo = rng.uniform(0, 1, (design.n_unlabeled, L - 1))
        pseudo /= pseudo.sum(axis=1, keepdims=True) + 1.3
        grad, _ = score_and_information(design, beta, pseudo, lam, penalty)
        p = (L - 1) * q
        bv = beta.reshape(-1)
        fd = np.zeros(p)
        for j in range(p):
            e = np.zeros(p)
            e[j] = 1e-6
            up = penalized_loglik(design, (bv + e).reshape(L - 1, q), pseudo, lam, penalty)
            dn = penalized_loglik(design, (bv - e).reshape(L - 1, q), pseudo, lam, penalty)
            fd[j] = (up - dn) / 2e-6
        rel = np.max(np.abs(grad - fd)) / (1.0 + np.max(np.abs(fd)))
        worst = max(worst, rel)
    ok = worst <= 1e-6
    assert _report_line("4 gradient oracle suite (20 instances, tol 1e-6)",
                        ok, f"worst relative deviation {worst:.2e}")


def test_criterion_5_smoother_oracle():
    """Fixed-point fit matches a generic optimizer; plug-back residual small."""
    rng = np.random.default_rng(20245)
    m = 8
    basis = build_basis(place_knots(0.0, 2.0, m))
    pen = second_difference_penalty(m).matrix
    worst_obj, worst_fp = 0.0, 0.0
    for trial in range(10):
        n = 50
        t = np.linspace(0.0, 2.0, n)
        x = rng.uniform(0.3, 1.3) * np.sin(np.pi * t * rng.uniform(0.9, 1.1))
        x = x + np.sqrt(0.1) * rng.normal(size=n)
        curve = RawCurve(times=t, values=x, id=f"o{trial}")
        zeta = float(rng.choice([1e-4, 1e-3, 1e-2]))
        fit = fit_penalized(curve, basis, zeta)
        phi = design_matrix(basis, t)

        def objective(omega, s2):
            r = x - phi @ omega
            return (-0.5 * n * np.log(2 * np.pi * s2) - 0.5 * (r @ r) / s2
                    - 0.5 * n * zeta * (omega @ pen @ omega))

        def neg(params):
            return -objective(params[:m], np.exp(params[m]))

        res = minimize(neg, np.concatenate([np.zeros(m), [0.0]]), method="L-BFGS-B",
                       options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
        ours = objective(fit.coefficients, fit.noise_variance)
        rel = abs(ours - (-res.fun)) / (1.0 + abs(res.fun))
        worst_obj = max(worst_obj, rel)

        again = np.linalg.solve(
            phi.T @ phi + n * zeta * fit.noise_variance * pen, phi.T @ x
        )
        r = x - phi @ again
        fp = max(
            np.max(np.abs(again - fit.coefficients)) / (1 + np.max(np.abs(fit.coefficients))),
            abs(max(r @ r / n, 1e-12) - fit.noise_variance) / fit.noise_variance,
        )
        worst_fp = max(worst_fp, fp)
    ok = worst_obj <= 1e-5 and worst_fp <= 1e-8
    assert _report_line(
        "5 smoother oracle (10 curves, obj tol 1e-5, fixed point 1e-8)",
        ok, f"worst objective gap {worst_obj:.2e}, worst fixed-point residual {worst_fp:.2e}",
    )


def test_criterion_6_criterion_oracles():
    """Q/R vs finite differences; criterion values vs a loop-level oracle."""
    rng = np.random.default_rng(20246)
    worst_fd, worst_val = 0.0, 0.0
    for (n1, m, L) in [(12, 4, 2), (20, 5, 3), (30, 3, 2)]:
        design = _random_design(rng, n=n1, n1=n1, m=m, L=L)
        penalty = block_penalty(m)
        lam = float(rng.choice([1e-3, 1e-2]))
        beta = rng.normal(0, 0.5, (L - 1, m + 1))
        fit = SemiLogisticFit(beta=CoefficientBlock(beta=beta), lam=lam, em_iterations=1,
                              objective_trace=np.zeros(2),
                              pseudo_labels=np.zeros((0, L - 1)), converged=True)
        _, Q, R = criterion_matrices(fit, design, penalty)
        q = m + 1
        p = (L - 1) * q
        Z, Y = design.Z, design.Y

        def obj_labeled(bvec):
            b = bvec.reshape(L - 1, q)
            eta = Z @ b.T
            lse = np.log1p(np.sum(np.exp(eta), axis=1))
            pen_quad = float(np.sum(b * (b @ penalty.K.T)))
            return float(np.sum(Y * eta) - np.sum(lse) - 0.5 * n1 * lam * pen_quad)

        def logf(bvec, a):
            b = bvec.reshape(L - 1, q)
            eta = Z[a] @ b.T
            return float(Y[a] @ eta - np.log1p(np.sum(np.exp(eta))))

        def pen_share(bvec):
            b = bvec.reshape(L - 1, q)
            return 0.5 * lam * float(np.sum(b * (b @ penalty.K.T)))

        bv = beta.reshape(-1)

        def grad_of(f, eps=1e-6):
            g = np.zeros(p)
            for j in range(p):
                e = np.zeros(p)
                e[j] = eps
                g[j] = (f(bv + e) - f(bv - e)) / (2 * eps)
            return g

        gpen = grad_of(pen_share)
        Q_fd = np.zeros((p, p))
        for a in range(n1):
            s = grad_of(lambda v, a=a: logf(v, a))
            Q_fd += np.outer(s - gpen, s)
        Q_fd /= n1
        H = np.zeros((p, p))
        eps = 1e-4
        for a in range(p):
            for b_ in range(p):
                ea = np.zeros(p); ea[a] = eps
                eb = np.zeros(p); eb[b_] = eps
                H[a, b_] = (obj_labeled(bv + ea + eb) - obj_labeled(bv + ea - eb)
                            - obj_labeled(bv - ea + eb) + obj_labeled(bv - ea - eb)) / (4 * eps * eps)
        R_fd = -H / n1
        worst_fd = max(worst_fd,
                       np.max(np.abs(Q - Q_fd)) / np.max(np.abs(Q_fd)),
                       np.max(np.abs(R - R_fd)) / np.max(np.abs(R_fd)))

        gic_o, gbic_o = _loop_oracle(design, beta, lam, penalty.K)
        worst_val = max(
            worst_val,
            abs(gic_classifier(fit, design, penalty).value - gic_o) / abs(gic_o),
            abs(gbic_classifier(fit, design, penalty).value - gbic_o) / abs(gbic_o),
        )
    ok = worst_fd <= 1e-5 and worst_val <= 1e-8
    assert _report_line(
        "6 criterion oracles (Q/R fd tol 1e-5, values tol 1e-8)",
        ok, f"worst fd deviation {worst_fd:.2e}, worst value deviation {worst_val:.2e}",
    )


def _loop_oracle(design, beta, lam, K):
    n1, L = design.n_labeled, design.L
    q = design.Z.shape[1]
    Z, Y = design.Z[:n1], design.Y
    P = np.zeros((n1, L - 1))
    ll = 0.0
    for a in range(n1):
        eta = [sum(Z[a, j] * beta[k, j] for j in range(q)) for k in range(L - 1)]
        den = 1.0 + sum(np.exp(e) for e in eta)
        for k in range(L - 1):
            P[a, k] = np.exp(eta[k]) / den
        ll += sum(Y[a, k] * eta[k] for k in range(L - 1)) - np.log(den)
    p = q * (L - 1)
    A = np.zeros((n1, p)); B = np.zeros((n1, p)); C = np.zeros((n1, p))
    for a in range(n1):
        for k in range(L - 1):
            for j in range(q):
                A[a, k * q + j] = Z[a, j]
                B[a, k * q + j] = Y[a, k]
                C[a, k * q + j] = P[a, k]
    D = np.zeros((p, p)); E = np.zeros((p, p))
    for k in range(L - 1):
        for i in range(q):
            for j in range(q):
                D[k * q + i, k * q + j] = sum(P[a, k] * Z[a, i] * Z[a, j] for a in range(n1))
                E[k * q + i, k * q + j] = K[i, j]
    S = (B - C) * A
    bvec = np.concatenate([beta[k] for k in range(L - 1)])
    Qo = (S.T - lam * np.outer(E @ bvec, np.ones(n1))) @ S / n1
    Ro = -(C * A).T @ (C * A) / n1 + D / n1 + lam * E
    gic = -2.0 * ll + 2.0 * np.trace(Qo @ np.linalg.inv(Ro))
    eigs = np.linalg.eigvalsh(K)
    pos = eigs[eigs > 1e-10]
    d = len(pos)
    quad = sum(float(beta[k] @ K @ beta[k]) for k in range(L - 1))
    gbic = (-2.0 * ll + n1 * lam * quad - (L - 1) * float(np.sum(np.log(pos)))
            + float(np.log(np.linalg.det(Ro)))
            - (L - 1) * (q - d) * np.log(lam)
            - (L - 1) * d * np.log(2 * np.pi / n1))
    return gic, gbic


def test_criterion_7_structural_invariants(tmp_path):
    rng = np.random.default_rng(20247)
    checks = {}

    # posterior normalization
    design = _random_design(rng, n=40, n1=25, m=5, L=4)
    beta = rng.normal(0, 3.0, (3, 6))
    post = posteriors(design, beta)
    checks["posterior rows sum to 1 (1e-12)"] = bool(
        np.max(np.abs(post.sum(axis=1) - 1.0)) <= 1e-12
    )

    # cross-product matrix vs quadrature
    from scipy.integrate import quad

    basis = build_basis(place_knots(0.0, 2.0, 9))
    J = cross_product_matrix(basis).matrix
    w = basis.width
    worst = 0.0
    for i, j in [(0, 0), (0, 3), (2, 7), (4, 5)]:
        mu_i, mu_j = basis.centers[i], basis.centers[j]
        mid = 0.5 * (mu_i + mu_j)
        val, _ = quad(lambda t: np.exp(-((t - mu_i) ** 2 + (t - mu_j) ** 2) / (2 * w * w)),
                      mid - 15 * w, mid + 15 * w, limit=400, epsabs=0.0, epsrel=1e-10)
        worst = max(worst, abs(J[i, j] - val) / abs(val))
    checks["J vs quadrature (1e-6 relative)"] = bool(worst <= 1e-6)

    # penalty null space
    K = second_difference_penalty(9).matrix
    ones, ramp = np.ones(9), np.arange(9.0)
    checks["penalty null space (1e-12)"] = bool(
        np.max(np.abs(K @ ones)) <= 1e-12 and np.max(np.abs(K @ ramp)) <= 1e-12 * 9
    )

    # supervised reduction, bitwise
    design_sup = _random_design(rng, n=15, n1=15, m=4, L=3)
    penalty = block_penalty(4)
    fit = em_fit(design_sup, 1e-2, penalty)
    step1 = fisher_scoring_mstep(design_sup, np.zeros((2, 5)), np.zeros((0, 2)), 1e-2, penalty)
    checks["supervised reduction (bitwise)"] = bool(
        np.array_equal(fit.beta.beta, step1.beta)
    )

    # end-to-end determinism: byte-identical report files under a fixed seed
    spec = ExperimentSpec(
        case_kind="case2", label_fractions=(0.2, 0.5), repetitions=2,
        criteria=("gic",), methods=("sflda",),
        lambda_grid=tuple(np.logspace(-4, 0, 4)), m_grid=(5, 6),
        zeta_grid=tuple(np.logspace(-6, 0, 5)), base_seed=99,
        n=40, train_size=20, workers=1,
    )
    d1, d2 = tmp_path / "a", tmp_path / "b"
    write_report(run_experiment(spec), str(d1))
    write_report(run_experiment(spec), str(d2))
    same = all(
        (d1 / name).read_bytes() == (d2 / name).read_bytes()
        for name in ("report.csv", "records.csv", "sflda_gic.dat")
    )
    checks["end-to-end determinism (byte-identical)"] = bool(same)

    ok = all(checks.values())
    detail = "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
    assert _report_line("7 structural invariants", ok, detail)


def test_criterion_8_five_class_workflow(tmp_path):
    """ingest -> fit -> predict on a 5-class, 24-time-point dataset; the test
    error must beat the 4/5 trivial rate."""
    rng = np.random.default_rng(20248)
    t = np.arange(1.0, 25.0)
    n_per, L = 60, 5
    curves, labels, truth = [], [], []
    for cls in range(1, L + 1):
        phase = 2 * np.pi * cls / L
        amp = 1.0 + 0.3 * cls
        for i in range(n_per):
            h = amp * np.sin(2 * np.pi * t / 24.0 + phase) + 0.1 * cls
            x = h + 0.4 * rng.normal(size=t.size)
            curves.append(RawCurve(times=t, values=x, id=f"g{cls}-{i:03d}"))
            truth.append(cls)
    truth = np.array(truth)
    order = rng.permutation(len(curves))
    curves = [curves[i] for i in order]
    truth = truth[order]
    n_train = 150
    train_labeled_mask = np.zeros(len(curves), dtype=bool)
    train_labeled_mask[:n_train:2] = True  # half of the training rows labeled

    curves_path = tmp_path / "curves.csv"
    labels_path = tmp_path / "labels.csv"
    test_path = tmp_path / "test.csv"
    dataio.write_curves_csv(curves_path, curves[:n_train])
    train_labels = np.where(train_labeled_mask[:n_train], truth[:n_train], 0)
    dataio.write_labels_csv(labels_path, [c.id for c in curves[:n_train]], train_labels)
    dataio.write_curves_csv(test_path, curves[n_train:])

    model_path = tmp_path / "model.json"
    code = main(["fit", "--curves", str(curves_path), "--labels", str(labels_path),
                 "--out", str(model_path), "--criterion", "gic"])
    assert code == 0
    pred_path = tmp_path / "pred.csv"
    code = main(["predict", "--model", str(model_path), "--curves", str(test_path),
                 "--out", str(pred_path)])
    assert code == 0

    pred = {}
    with open(pred_path) as fh:
        for row in csv.DictReader(fh):
            pred[row["curve_id"]] = int(row["pred_class"])
            probs = [float(row[f"p{k}"]) for k in range(1, L + 1)]
            assert abs(sum(probs) - 1.0) <= 1e-9
    y_true = truth[n_train:]
    y_hat = np.array([pred[c.id] for c in curves[n_train:]])
    err = float(np.mean(y_hat != y_true))
    ok = err < 0.8
    assert _report_line("8 five-class 24-point workflow (error < 0.8)",
                        ok, f"test error {err:.3f} on {len(y_true)} curves")
