"""Gaussian basis systems on equally spaced knots.

Everything here is a pure function of its inputs: knot grids, the basis
built from them, the design matrix of basis evaluations, the second-order
difference roughness penalty, and the closed-form cross-product (Gram)
matrix of the basis functions over the real line.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class KnotGrid:
    """m+4 equally spaced knots; knots[3] and knots[m] pin the data range."""

    knots: np.ndarray
    t_min: float
    t_max: float
    spacing: float

    @property
    def m(self) -> int:
        return len(self.knots) - 4


@dataclass(frozen=True)
class GaussianBasis:
    """m Gaussian bumps with shared width, centered on interior knots."""

    m: int
    centers: np.ndarray
    width: float
    grid: KnotGrid


@dataclass(frozen=True)
class PenaltyMatrix:
    """Symmetric PSD roughness penalty; rank m-2, null space = affine sequences."""

    order: int
    matrix: np.ndarray


@dataclass(frozen=True)
class CrossProductMatrix:
    """Gram matrix of the basis functions over the whole real line."""

    matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


def place_knots(t_min: float, t_max: float, m: int) -> KnotGrid:
    """Place m+4 equally spaced knots so the 4th and (m+1)-th hit the range ends.

    Spacing is (t_max - t_min) / (m - 3); two knots extend past each end of
    the data range on purpose (they are never clipped).
    """
    if m < 4:
        raise InvalidArgumentError(f"need m >= 4 to place knots, got m={m}")
    if not t_min < t_max:
        raise InvalidArgumentError(f"need t_min < t_max, got [{t_min}, {t_max}]")
    h = (float(t_max) - float(t_min)) / (m - 3)
    knots = float(t_min) + (np.arange(m + 4, dtype=np.float64) - 3) * h
    return KnotGrid(knots=knots, t_min=float(t_min), t_max=float(t_max), spacing=h)


def build_basis(grid: KnotGrid) -> GaussianBasis:
    """Centers sit on knots[2..m+1]; the shared width is 2/3 of the knot step."""
    m = grid.m
    centers = grid.knots[2 : m + 2].copy()
    width = 2.0 * grid.spacing / 3.0
    return GaussianBasis(m=m, centers=centers, width=width, grid=grid)


def eval_basis(basis: GaussianBasis, t: float) -> np.ndarray:
    """Evaluate all m basis functions at one time point (values in (0, 1])."""
    d = t - basis.centers
    return np.exp(-(d * d) / (2.0 * basis.width**2))


def design_matrix(basis: GaussianBasis, times: np.ndarray) -> np.ndarray:
    """N x m matrix whose row i is the basis evaluated at times[i]."""
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise InvalidArgumentError("times must be a non-empty 1-d array")
    d = times[:, None] - basis.centers[None, :]
    return np.exp(-(d * d) / (2.0 * basis.width**2))


def second_difference_penalty(m: int) -> PenaltyMatrix:
    """D2' D2 for the (m-2) x m second-difference stencil (1, -2, 1)."""
    if m < 3:
        raise InvalidArgumentError(f"need m >= 3 for the second-difference penalty, got m={m}")
    d2 = np.zeros((m - 2, m), dtype=np.float64)
    idx = np.arange(m - 2)
    d2[idx, idx] = 1.0
    d2[idx, idx + 1] = -2.0
    d2[idx, idx + 2] = 1.0
    return PenaltyMatrix(order=2, matrix=d2.T @ d2)


def cross_product_matrix(basis: GaussianBasis) -> CrossProductMatrix:
    """Closed form of integral phi_i(t) phi_j(t) dt over the real line.

    For Gaussians with shared width w: sqrt(pi w^2) * exp(-(mu_i-mu_j)^2 / (4 w^2)).
    """
    w = basis.width
    d = basis.centers[:, None] - basis.centers[None, :]
    mat = np.sqrt(np.pi * w * w) * np.exp(-(d * d) / (4.0 * w * w))
    return CrossProductMatrix(matrix=mat)
