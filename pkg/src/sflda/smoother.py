"""Per-curve penalized Gaussian-basis regression and dataset functionalization.

A curve's coefficients and noise variance solve the coupled pair

    omega = (Phi'Phi + N zeta sigma2 Pen)^-1 Phi'x,   sigma2 = RSS / N,

found by fixed-point iteration from an OLS start. The smoothing criterion
(an information criterion with an influence-function bias correction)
scores each (m, zeta) pair; `functionalize` picks one common m for a whole
dataset by minimizing the summed per-curve optimal criterion.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .basis import GaussianBasis, build_basis, design_matrix, place_knots, second_difference_penalty
from .errors import ConvergenceError, GridSearchError, InvalidArgumentError, NumericalError

DEFAULT_M_GRID = tuple(range(5, 16))
DEFAULT_ZETA_GRID = tuple(np.logspace(-8.0, 0.0, 20))

FIXED_POINT_MAX_ITER = 1000
FIXED_POINT_RTOL = 1e-10
VARIANCE_FLOOR = 1e-12
INIT_RIDGE = 1e-8


@dataclass(frozen=True)
class RawCurve:
    """One subject's discrete observations; times need not be sorted."""

    times: np.ndarray
    values: np.ndarray
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise InvalidArgumentError(
                f"curve {self.id!r}: times and values must be 1-d arrays of equal length"
            )

    @property
    def n_obs(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class SmoothFit:
    coefficients: np.ndarray
    noise_variance: float
    zeta: float
    basis: GaussianBasis
    gic: float
    fixed_point_iters: int


@dataclass(frozen=True)
class FunctionalDataset:
    """Coefficient rows for n curves against one shared basis.

    labels uses 0 for "unlabeled" and 1..L for class indices.
    """

    basis: GaussianBasis
    coefficient_matrix: np.ndarray
    labels: np.ndarray
    noise_variances: np.ndarray
    curve_ids: list
    zetas: np.ndarray
    per_curve_best_m: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.coefficient_matrix.shape[0]


def _as_label_array(labels, n):
    if labels is None:
        return np.zeros(n, dtype=np.int64)
    out = np.array([0 if v is None else int(v) for v in labels], dtype=np.int64)
    if out.size != n:
        raise InvalidArgumentError(f"got {out.size} labels for {n} curves")
    if np.any(out < 0):
        raise InvalidArgumentError("labels must be positive integers (0/None = unlabeled)")
    return out


def fit_penalized(curve: RawCurve, basis: GaussianBasis, zeta: float) -> SmoothFit:
    """Fit one curve at a fixed basis and smoothing level.

    zeta = 0 is accepted only when Phi'Phi is numerically invertible.
    """
    if zeta < 0:
        raise InvalidArgumentError(f"zeta must be >= 0, got {zeta}")
    if curve.n_obs <= basis.m:
        raise InvalidArgumentError(
            f"curve {curve.id!r}: need more observations ({curve.n_obs}) than basis functions ({basis.m})"
        )
    phi = design_matrix(basis, curve.times)
    pen = second_difference_penalty(basis.m).matrix
    omega, sigma2, gic, iters, status = _kernels.smooth_grid(
        phi, curve.values, pen, np.array([zeta], dtype=np.float64),
        max_iter=FIXED_POINT_MAX_ITER, rtol=FIXED_POINT_RTOL,
        var_floor=VARIANCE_FLOOR, init_ridge=INIT_RIDGE,
    )
    fit = SmoothFit(
        coefficients=omega[0], noise_variance=float(sigma2[0]), zeta=float(zeta),
        basis=basis, gic=float(gic[0]), fixed_point_iters=int(iters[0]),
    )
    if status[0] == 1:
        raise NumericalError(f"curve {curve.id!r}: singular smoothing system at zeta={zeta}")
    if status[0] == 2:
        raise ConvergenceError(
            f"curve {curve.id!r}: fixed point did not converge in "
            f"{FIXED_POINT_MAX_ITER} iterations at zeta={zeta}",
            last_result=fit,
        )
    return fit


def gic_smoothing(fit: SmoothFit, curve: RawCurve) -> float:
    """Smoothing criterion of a fit on the curve it came from."""
    phi = design_matrix(fit.basis, curve.times)
    pen = second_difference_penalty(fit.basis.m).matrix
    q, rmat = _kernels.smoothing_gic_matrices(
        phi, curve.values, fit.coefficients, fit.noise_variance, fit.zeta, pen
    )
    try:
        tr = float(np.trace(np.linalg.solve(rmat, q)))
        if not np.isfinite(tr):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"curve {curve.id!r}: singular criterion curvature matrix",
            condition_estimate=float(np.linalg.cond(rmat)),
        ) from None
    n = curve.n_obs
    return n * math.log(2.0 * math.pi * fit.noise_variance) + n + 2.0 * tr


def _grid_eval(curve: RawCurve, basis: GaussianBasis, zetas: np.ndarray):
    """Kernel sweep of the zeta grid at one basis; returns raw arrays."""
    phi = design_matrix(basis, curve.times)
    pen = second_difference_penalty(basis.m).matrix
    return _kernels.smooth_grid(
        phi, curve.values, pen, zetas,
        max_iter=FIXED_POINT_MAX_ITER, rtol=FIXED_POINT_RTOL,
        var_floor=VARIANCE_FLOOR, init_ridge=INIT_RIDGE,
    )


def _best_on_grid(gic, status):
    """Index of the smallest criterion among status-0 points; None if all failed.

    Ascending scan with strict < keeps the earliest (smallest zeta) on ties.
    """
    best = None
    for j in range(len(gic)):
        if status[j] != 0 or not np.isfinite(gic[j]):
            continue
        if best is None or gic[j] < gic[best]:
            best = j
    return best


def select_smoothing(curve: RawCurve, m_grid=DEFAULT_M_GRID, zeta_grid=DEFAULT_ZETA_GRID) -> SmoothFit:
    """Minimize the smoothing criterion over (m, zeta); ties prefer smaller
    m, then smaller zeta. The basis domain is this curve's own time range."""
    m_grid = sorted(set(int(m) for m in m_grid))
    zetas = np.sort(np.asarray(list(zeta_grid), dtype=np.float64))
    if not m_grid or zetas.size == 0:
        raise InvalidArgumentError("m_grid and zeta_grid must be non-empty")
    for m in m_grid:
        if curve.n_obs <= m:
            raise InvalidArgumentError(
                f"curve {curve.id!r}: m={m} needs more than {m} observations, have {curve.n_obs}"
            )
    t_min, t_max = float(np.min(curve.times)), float(np.max(curve.times))
    best_fit, best_gic = None, None
    failures = {}
    for m in m_grid:
        basis = build_basis(place_knots(t_min, t_max, m))
        omega, sigma2, gic, iters, status = _grid_eval(curve, basis, zetas)
        j = _best_on_grid(gic, status)
        if j is None:
            failures[m] = f"all {zetas.size} zeta points failed (status={list(status)})"
            continue
        if best_gic is None or gic[j] < best_gic:
            best_gic = float(gic[j])
            best_fit = SmoothFit(
                coefficients=omega[j], noise_variance=float(sigma2[j]), zeta=float(zetas[j]),
                basis=basis, gic=float(gic[j]), fixed_point_iters=int(iters[j]),
            )
    if best_fit is None:
        raise GridSearchError(f"curve {curve.id!r}: every (m, zeta) grid point failed", failures)
    return best_fit


def functionalize(curves, labels=None, m_grid=DEFAULT_M_GRID, zeta_grid=DEFAULT_ZETA_GRID) -> FunctionalDataset:
    """Convert discrete curves to coefficient vectors against one shared basis.

    The basis domain is the pooled time range. For every curve and candidate
    m, the per-curve optimal zeta is selected; the common m minimizes the sum
    of per-curve optimal criterion values; every curve keeps its own zeta.
    """
    curves = list(curves)
    if not curves:
        raise InvalidArgumentError("no curves to functionalize")
    lab = _as_label_array(labels, len(curves))
    m_grid = sorted(set(int(m) for m in m_grid))
    zetas = np.sort(np.asarray(list(zeta_grid), dtype=np.float64))
    if not m_grid or zetas.size == 0:
        raise InvalidArgumentError("m_grid and zeta_grid must be non-empty")
    min_obs = min(c.n_obs for c in curves)
    for m in m_grid:
        if min_obs <= m:
            raise InvalidArgumentError(
                f"m={m} in m_grid needs more than {m} observations per curve; shortest curve has {min_obs}"
            )

    t_min = min(float(np.min(c.times)) for c in curves)
    t_max = max(float(np.max(c.times)) for c in curves)
    bases = {m: build_basis(place_knots(t_min, t_max, m)) for m in m_grid}

    # per-curve best (gic, fit pieces) for each m
    per_m_gic = np.full((len(curves), len(m_grid)), np.nan)
    per_m_pick = {}
    for ci, curve in enumerate(curves):
        any_ok = False
        for mi, m in enumerate(m_grid):
            omega, sigma2, gic, iters, status = _grid_eval(curve, bases[m], zetas)
            j = _best_on_grid(gic, status)
            if j is None:
                continue
            any_ok = True
            per_m_gic[ci, mi] = gic[j]
            per_m_pick[(ci, mi)] = (omega[j], float(sigma2[j]), float(zetas[j]), float(gic[j]), int(iters[j]))
        if not any_ok:
            raise GridSearchError(
                f"curve {curve.id!r}: every (m, zeta) grid point failed during functionalization",
                {curve.id: "no valid fit at any m"},
            )

    # common m: smallest summed criterion over m values valid for every curve
    total = np.where(np.all(np.isfinite(per_m_gic), axis=0), per_m_gic.sum(axis=0), np.inf)
    if not np.any(np.isfinite(total)):
        raise GridSearchError("no m in the grid produced a valid fit for every curve", {})
    mi_star = int(np.argmin(total))
    basis = bases[m_grid[mi_star]]

    coef = np.empty((len(curves), basis.m), dtype=np.float64)
    nvar = np.empty(len(curves), dtype=np.float64)
    zsel = np.empty(len(curves), dtype=np.float64)
    for ci in range(len(curves)):
        omega, sigma2_v, zeta_v, _, _ = per_m_pick[(ci, mi_star)]
        coef[ci] = omega
        nvar[ci] = sigma2_v
        zsel[ci] = zeta_v

    best_m = np.array([m_grid[int(np.nanargmin(per_m_gic[ci]))] for ci in range(len(curves))])
    return FunctionalDataset(
        basis=basis, coefficient_matrix=coef, labels=lab,
        noise_variances=nvar, curve_ids=[c.id for c in curves],
        zetas=zsel, per_curve_best_m=best_m,
    )


def smooth_with_basis(curves, basis: GaussianBasis, zeta_grid=DEFAULT_ZETA_GRID):
    """Coefficient rows for new curves at a fixed basis (zeta re-selected
    per curve from the grid). Used by the prediction path."""
    zetas = np.sort(np.asarray(list(zeta_grid), dtype=np.float64))
    rows = np.empty((len(curves), basis.m), dtype=np.float64)
    nvar = np.empty(len(curves), dtype=np.float64)
    zsel = np.empty(len(curves), dtype=np.float64)
    for ci, curve in enumerate(curves):
        if curve.n_obs <= basis.m:
            raise InvalidArgumentError(
                f"curve {curve.id!r}: need more than {basis.m} observations, have {curve.n_obs}"
            )
        omega, sigma2, gic, iters, status = _grid_eval(curve, basis, zetas)
        j = _best_on_grid(gic, status)
        if j is None:
            raise GridSearchError(
                f"curve {curve.id!r}: every zeta failed at the fixed basis",
                {curve.id: f"status={list(status)}"},
            )
        rows[ci] = omega[j]
        nvar[ci] = sigma2[j]
        zsel[ci] = zetas[j]
    return rows, nvar, zsel
