"""End-to-end fit and predict paths shared by the CLI and the experiment
runner: functionalize -> design -> lambda selection -> persistable model."""

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import CrossProductMatrix, GaussianBasis, cross_product_matrix
from .errors import InvalidArgumentError
from .logit import block_penalty, build_design, design_rows, predict
from .selection import DEFAULT_LAMBDA_GRID, fit_lambda_grid, select_from_fits
from .smoother import DEFAULT_M_GRID, DEFAULT_ZETA_GRID, functionalize, smooth_with_basis

METHODS = ("sflda", "flda")
CRITERIA = ("gic", "gbic")


@dataclass(frozen=True)
class FittedModel:
    """Everything needed to classify new curves, persistable as JSON."""

    basis: GaussianBasis
    zeta_grid: np.ndarray
    train_ids: list
    train_zetas: np.ndarray
    J: CrossProductMatrix
    n_classes: int
    beta: np.ndarray
    lam: float
    criterion_kind: str
    criterion_value: float
    em_iterations: int
    method: str


def fit_classifier(curves, labels, method="sflda", criterion="gic",
                   m_grid=DEFAULT_M_GRID, zeta_grid=DEFAULT_ZETA_GRID,
                   lambda_grid=DEFAULT_LAMBDA_GRID, n_classes=None, max_em=500):
    """Full training pipeline on raw curves.

    `flda` drops unlabeled curves from the classifier design (they still
    participate in smoothing, which is label-free). Returns
    (FittedModel, FunctionalDataset, SemiLogisticFit, CriterionReport).
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"method must be one of {METHODS}, got {method!r}")
    if criterion not in CRITERIA:
        raise InvalidArgumentError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    labels = np.asarray(labels, dtype=np.int64)
    if np.sum(np.unique(labels) > 0) < 2:
        raise InvalidArgumentError("need labeled curves from at least 2 classes")

    fds = functionalize(curves, labels, m_grid=m_grid, zeta_grid=zeta_grid)
    if method == "flda":
        import dataclasses

        keep = np.flatnonzero(fds.labels > 0)
        fds_fit = dataclasses.replace(
            fds,
            coefficient_matrix=fds.coefficient_matrix[keep],
            labels=fds.labels[keep],
            noise_variances=fds.noise_variances[keep],
            curve_ids=[fds.curve_ids[i] for i in keep],
            zetas=fds.zetas[keep],
            per_curve_best_m=fds.per_curve_best_m[keep],
        )
    else:
        fds_fit = fds

    J = cross_product_matrix(fds.basis)
    design = build_design(fds_fit, J, n_classes=n_classes)
    penalty = block_penalty(fds.basis.m)
    fits, failures = fit_lambda_grid(design, penalty, lambda_grid, max_em=max_em)
    if not fits:
        from .errors import GridSearchError

        raise GridSearchError("every lambda grid point failed to fit", failures)
    fit, report = select_from_fits(fits, design, penalty, criterion)

    model = FittedModel(
        basis=fds.basis,
        zeta_grid=np.sort(np.asarray(list(zeta_grid), dtype=np.float64)),
        train_ids=list(fds.curve_ids),
        train_zetas=fds.zetas,
        J=J,
        n_classes=design.L,
        beta=fit.beta.beta,
        lam=fit.lam,
        criterion_kind=report.criterion_kind,
        criterion_value=report.value,
        em_iterations=fit.em_iterations,
        method=method,
    )
    return model, fds, fit, report


def predict_curves(model: FittedModel, curves):
    """Smooth new curves at the persisted basis (zeta re-selected per curve
    from the persisted grid) and classify them.

    Returns (classes, posteriors). Curve times far outside the training
    knot span only warn; the Gaussian basis is globally defined.
    """
    if not curves:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.n_classes))
    lo, hi = model.basis.grid.knots[0], model.basis.grid.knots[-1]
    outside = [c.id for c in curves if c.times.min() < lo or c.times.max() > hi]
    if outside:
        warnings.warn(
            f"{len(outside)} curve(s) have times beyond the training knot span "
            f"[{lo:g}, {hi:g}]: {outside[:5]}",
            stacklevel=2,
        )
    W, _, _ = smooth_with_basis(curves, model.basis, model.zeta_grid)
    Z = design_rows(W, model.J)
    return predict(model.beta, Z)
