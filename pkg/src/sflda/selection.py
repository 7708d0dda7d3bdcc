"""Regularization-parameter selection for the functional logistic model.

Two scores are implemented: an information criterion with an
influence-function bias correction (GIC) and a Laplace-approximation
marginal-likelihood criterion (GBIC). Both are computed from labeled rows
only, even when the coefficients were fit with unlabeled rows.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridSearchError, InvalidArgumentError, NumericalError
from .logit import (
    BlockPenalty,
    ClassifierDesign,
    SemiLogisticFit,
    em_fit,
    labeled_loglik,
    softmax_probs,
)

EIG_POSITIVE_TOL = 1e-10
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-5.0, 0.0, 25))


@dataclass(frozen=True)
class CriterionInputs:
    """Labeled-rows building blocks shared by both criteria."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    Z: np.ndarray


@dataclass(frozen=True)
class CriterionReport:
    criterion_kind: str
    value: float
    lam: float
    loglik_term: float
    trace_term: float
    penalty_terms: dict
    condition_estimate: float


def _block_diag(blocks):
    sizes = [b.shape[0] for b in blocks]
    out = np.zeros((sum(sizes), sum(sizes)), dtype=np.float64)
    pos = 0
    for b in blocks:
        out[pos:pos + b.shape[0], pos:pos + b.shape[0]] = b
        pos += b.shape[0]
    return out


def criterion_matrices(fit: SemiLogisticFit, design: ClassifierDesign, penalty: BlockPenalty):
    """Assemble the labeled-rows score/curvature matrices.

    Returns (inputs, Q, R) where Q is the averaged outer product of the
    per-observation penalized score with the unpenalized score and R the
    penalized expected information per labeled observation, both over the
    stacked (beta_1', ..., beta_{L-1}')' coordinates.
    """
    n1, L = design.n_labeled, design.L
    beta = fit.beta.beta
    q = design.Z.shape[1]
    if beta.shape != (L - 1, q):
        raise InvalidArgumentError(f"fit has beta {beta.shape}, design expects {(L - 1, q)}")
    if penalty.K.shape[0] != q:
        raise InvalidArgumentError(f"penalty is {penalty.K.shape[0]}-dim, design rows are {q}-dim")
    lam = fit.lam

    Z = design.Z[:n1]
    P = softmax_probs(Z, beta)[:, : L - 1]
    A = np.tile(Z, (1, L - 1))
    B = np.repeat(design.Y, q, axis=1)
    C = np.repeat(P, q, axis=1)
    D = _block_diag([Z.T @ (P[:, k, None] * Z) for k in range(L - 1)])
    E = _block_diag([penalty.K] * (L - 1))

    S = (B - C) * A
    beta_vec = beta.reshape(-1)
    Q = (S.T @ S - lam * np.outer(E @ beta_vec, S.sum(axis=0))) / n1
    CA = C * A
    R = (-(CA.T @ CA) + D) / n1 + lam * E
    return CriterionInputs(A=A, B=B, C=C, D=D, E=E, Z=Z), Q, R


def _labeled_fit_loglik(fit: SemiLogisticFit, design: ClassifierDesign) -> float:
    return labeled_loglik(design.Z[: design.n_labeled], design.Y, fit.beta.beta)


def gic_classifier(fit: SemiLogisticFit, design: ClassifierDesign,
                   penalty: BlockPenalty) -> CriterionReport:
    """-2 * labeled log-likelihood + 2 tr(Q R^-1)."""
    _, Q, R = criterion_matrices(fit, design, penalty)
    cond = float(np.linalg.cond(R))
    try:
        tr = float(np.trace(np.linalg.solve(R, Q)))
        if not np.isfinite(tr):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"criterion curvature matrix is singular (cond ~ {cond:.3e})",
            condition_estimate=cond,
        ) from None
    ll = _labeled_fit_loglik(fit, design)
    return CriterionReport(
        criterion_kind="gic", value=-2.0 * ll + 2.0 * tr, lam=fit.lam,
        loglik_term=-2.0 * ll, trace_term=tr, penalty_terms={},
        condition_estimate=cond,
    )


def gbic_classifier(fit: SemiLogisticFit, design: ClassifierDesign,
                    penalty: BlockPenalty) -> CriterionReport:
    """Marginal-likelihood score: -2 * labeled log-likelihood + penalty
    quadratic + log-determinant and dimension terms."""
    if fit.lam <= 0:
        raise InvalidArgumentError("GBIC needs lambda > 0")
    _, _, R = criterion_matrices(fit, design, penalty)
    cond = float(np.linalg.cond(R))
    try:
        chol = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"criterion curvature matrix is not positive definite (cond ~ {cond:.3e})",
            condition_estimate=cond,
        ) from None
    logdet_r = 2.0 * float(np.sum(np.log(np.diag(chol))))

    eigs = np.linalg.eigvalsh(penalty.K)
    pos = eigs[eigs > EIG_POSITIVE_TOL]
    d = int(pos.size)
    log_k_plus = float(np.sum(np.log(pos)))

    n1, L = design.n_labeled, design.L
    m_plus_1 = design.Z.shape[1]
    beta = fit.beta.beta
    lam = fit.lam
    quad = float(np.sum(beta * (beta @ penalty.K.T)))
    ll = _labeled_fit_loglik(fit, design)

    value = (
        -2.0 * ll
        + n1 * lam * quad
        - (L - 1) * log_k_plus
        + logdet_r
        - (L - 1) * (m_plus_1 - d) * math.log(lam)
        - (L - 1) * d * math.log(2.0 * math.pi / n1)
    )
    return CriterionReport(
        criterion_kind="gbic", value=value, lam=lam,
        loglik_term=-2.0 * ll, trace_term=float("nan"),
        penalty_terms={
            "quadratic": n1 * lam * quad,
            "log_det_penalty": -(L - 1) * log_k_plus,
            "log_det_curvature": logdet_r,
            "lambda_dim": -(L - 1) * (m_plus_1 - d) * math.log(lam),
            "sample_dim": -(L - 1) * d * math.log(2.0 * math.pi / n1),
        },
        condition_estimate=cond,
    )


def score_fit(fit: SemiLogisticFit, design: ClassifierDesign, penalty: BlockPenalty,
              criterion_kind: str) -> CriterionReport:
    kind = criterion_kind.lower()
    if kind == "gic":
        return gic_classifier(fit, design, penalty)
    if kind == "gbic":
        return gbic_classifier(fit, design, penalty)
    raise InvalidArgumentError(f"unknown criterion {criterion_kind!r}")


def fit_lambda_grid(design: ClassifierDesign, penalty: BlockPenalty, lambda_grid,
                    max_em: int = 500):
    """EM fit at every grid value (ascending); failures recorded, not raised.

    Returns (fits, failures): fits is a list of (lam, SemiLogisticFit).
    """
    lams = sorted(float(v) for v in lambda_grid)
    if not lams:
        raise InvalidArgumentError("lambda grid is empty")
    if lams[0] <= 0:
        raise InvalidArgumentError("lambda grid values must be positive")
    fits, failures = [], {}
    for lam in lams:
        try:
            fits.append((lam, em_fit(design, lam, penalty, max_em=max_em)))
        except (NumericalError, InvalidArgumentError, RuntimeError) as exc:
            failures[lam] = str(exc)
    return fits, failures


def select_from_fits(fits, design: ClassifierDesign, penalty: BlockPenalty,
                     criterion_kind: str):
    """Score pre-computed grid fits; the minimizer wins, ties to larger lambda."""
    best = None
    failures = {}
    for lam, fit in fits:
        try:
            report = score_fit(fit, design, penalty, criterion_kind)
        except NumericalError as exc:
            failures[lam] = str(exc)
            continue
        if best is None or report.value <= best[1].value:
            best = (fit, report)
    if best is None:
        raise GridSearchError(
            f"every lambda failed {criterion_kind} scoring", failures
        )
    return best


def select_lambda(design: ClassifierDesign, penalty: BlockPenalty,
                  lambda_grid=DEFAULT_LAMBDA_GRID, criterion_kind: str = "gic",
                  max_em: int = 500):
    """Run the EM fit across the lambda grid and keep the criterion minimizer."""
    fits, fit_failures = fit_lambda_grid(design, penalty, lambda_grid, max_em=max_em)
    if not fits:
        raise GridSearchError("every lambda grid point failed to fit", fit_failures)
    return select_from_fits(fits, design, penalty, criterion_kind)
