"""Semi-supervised functional logistic classifier.

The design row for a curve with coefficient vector w is z = (1, w'J)', so a
linear predictor beta_k'z equals the intercept plus the inner product of the
curve with the k-th coefficient function. Class L is the reference (implicit
zero predictor). Fitting maximizes the penalized log-likelihood

    l(beta) - (n1 lambda / 2) sum_k beta_k' K beta_k

over labeled rows plus unlabeled rows carrying posterior pseudo-labels,
alternating E-steps (pseudo-label refresh) and Fisher-scoring M-steps.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .basis import CrossProductMatrix
from .errors import ConvergenceError, InvalidArgumentError, NumericalError
from .smoother import FunctionalDataset

EM_TOL = 1e-5
EM_MAX_SWEEPS = 500
MSTEP_MAX_ITER = 100
MSTEP_GTOL = 1e-8


@dataclass(frozen=True)
class ClassifierDesign:
    """Design rows with labeled curves first.

    Z is n x (m+1) with a leading column of ones; Y is the n1 x (L-1)
    one-hot block for the labeled rows (class L encodes as an all-zero row).
    """

    Z: np.ndarray
    n_labeled: int
    Y: np.ndarray
    L: int
    curve_ids: list
    order: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.n - self.n_labeled

    def labeled_view(self) -> "ClassifierDesign":
        """The same design restricted to its labeled rows."""
        return ClassifierDesign(
            Z=self.Z[: self.n_labeled], n_labeled=self.n_labeled, Y=self.Y,
            L=self.L, curve_ids=self.curve_ids[: self.n_labeled],
            order=self.order[: self.n_labeled],
        )


@dataclass(frozen=True)
class CoefficientBlock:
    """(L-1) x (m+1) coefficients; column 0 holds the intercepts."""

    beta: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.beta.shape[0] + 1


@dataclass(frozen=True)
class BlockPenalty:
    """(m+1) x (m+1) penalty with zero first row/column (intercept free)."""

    K: np.ndarray
    kstar_kind: str
    rank_d: int


@dataclass(frozen=True)
class SemiLogisticFit:
    beta: CoefficientBlock
    lam: float
    em_iterations: int
    objective_trace: np.ndarray
    pseudo_labels: np.ndarray
    converged: bool


def block_penalty(m: int, kstar=None) -> BlockPenalty:
    """Embed K* (identity by default) below/right of a zero intercept row."""
    if kstar is None:
        kstar = np.eye(m)
        kind = "identity"
    else:
        kstar = np.asarray(kstar, dtype=np.float64)
        if kstar.shape != (m, m):
            raise InvalidArgumentError(f"K* must be {m}x{m}, got {kstar.shape}")
        kind = "custom"
    K = np.zeros((m + 1, m + 1), dtype=np.float64)
    K[1:, 1:] = kstar
    rank_d = int(np.sum(np.linalg.eigvalsh(K) > 1e-10))
    return BlockPenalty(K=K, kstar_kind=kind, rank_d=rank_d)


def design_rows(W: np.ndarray, J) -> np.ndarray:
    """Map coefficient rows w to design rows (1, w'J)."""
    Jm = J.matrix if isinstance(J, CrossProductMatrix) else np.asarray(J)
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    if W.shape[1] != Jm.shape[0]:
        raise InvalidArgumentError(
            f"coefficient dimension {W.shape[1]} does not match J ({Jm.shape[0]})"
        )
    return np.column_stack([np.ones(W.shape[0]), W @ Jm])


def build_design(data: FunctionalDataset, J: CrossProductMatrix, n_classes=None) -> ClassifierDesign:
    """Assemble the classifier design from a functional dataset.

    Labeled rows are moved to the front (stable order within each group);
    `order` maps design rows back to dataset rows.
    """
    if J.m != data.basis.m or data.coefficient_matrix.shape[1] != J.m:
        raise InvalidArgumentError(
            f"basis dimension mismatch: coefficients are {data.coefficient_matrix.shape[1]}-dim, J is {J.m}-dim"
        )
    labels = np.asarray(data.labels, dtype=np.int64)
    labeled_idx = np.flatnonzero(labels > 0)
    if labeled_idx.size == 0:
        raise InvalidArgumentError("no labeled curves in the dataset")
    L = int(n_classes) if n_classes is not None else int(labels.max())
    if L < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got L={L}")
    if labels.max() > L:
        raise InvalidArgumentError(f"label {labels.max()} exceeds n_classes={L}")
    unlabeled_idx = np.flatnonzero(labels == 0)
    order = np.concatenate([labeled_idx, unlabeled_idx])

    Z = design_rows(data.coefficient_matrix[order], J)
    y = labels[labeled_idx]
    Y = np.zeros((labeled_idx.size, L - 1), dtype=np.float64)
    rows = np.flatnonzero(y < L)
    Y[rows, y[rows] - 1] = 1.0
    ids = [data.curve_ids[i] for i in order]
    return ClassifierDesign(Z=Z, n_labeled=int(labeled_idx.size), Y=Y, L=L,
                            curve_ids=ids, order=order)


def _predictors(Z, beta):
    eta = Z @ beta.T
    lse = np.maximum(eta.max(axis=1), 0.0)
    lse = lse + np.log(np.exp(-lse) + np.sum(np.exp(eta - lse[:, None]), axis=1))
    return eta, lse


def softmax_probs(Z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """n x L posterior matrix for design rows Z; the last column is the
    reference class. Shift-by-max keeps the exponentials bounded."""
    eta, lse = _predictors(Z, beta)
    p = np.empty((Z.shape[0], beta.shape[0] + 1), dtype=np.float64)
    p[:, :-1] = np.exp(eta - lse[:, None])
    p[:, -1] = np.exp(-lse)
    return p


def posteriors(design, beta) -> np.ndarray:
    """Posterior class probabilities for every row of the design."""
    Z = design.Z if isinstance(design, ClassifierDesign) else np.asarray(design)
    B = beta.beta if isinstance(beta, CoefficientBlock) else np.asarray(beta)
    if Z.shape[1] != B.shape[1]:
        raise InvalidArgumentError(f"design has {Z.shape[1]} columns, beta has {B.shape[1]}")
    return softmax_probs(Z, B)


def labeled_loglik(Z1: np.ndarray, Y: np.ndarray, beta: np.ndarray) -> float:
    """Unpenalized multinomial log-likelihood of the labeled block."""
    eta, lse = _predictors(Z1, beta)
    return float(np.sum(Y * eta) - np.sum(lse))


def _responses(design: ClassifierDesign, pseudo_labels) -> np.ndarray:
    t = np.asarray(pseudo_labels, dtype=np.float64).reshape(-1, design.L - 1)
    if t.shape[0] != design.n_unlabeled:
        raise InvalidArgumentError(
            f"pseudo_labels has {t.shape[0]} rows for {design.n_unlabeled} unlabeled rows"
        )
    return np.vstack([design.Y, t]) if t.size else design.Y.copy()


def _beta_of(beta) -> np.ndarray:
    return beta.beta if isinstance(beta, CoefficientBlock) else np.asarray(beta, dtype=np.float64)


def penalized_loglik(design: ClassifierDesign, beta, pseudo_labels, lam: float,
                     penalty: BlockPenalty) -> float:
    """Labeled + pseudo-labeled log-likelihood minus (n1 lambda / 2) penalty."""
    R = _responses(design, pseudo_labels)
    return _kernels.mn_objective(design.Z, R, _beta_of(beta), penalty.K, design.n_labeled, lam)


def score_and_information(design: ClassifierDesign, beta, pseudo_labels, lam: float,
                          penalty: BlockPenalty):
    """Gradient and expected information over the stacked parameter vector.

    The information sums over all n rows and adds n1*lambda*K per diagonal
    block, so it is positive definite for lambda > 0.
    """
    R = _responses(design, pseudo_labels)
    return _kernels.mn_score_info(design.Z, R, _beta_of(beta), penalty.K, design.n_labeled, lam)


def _run_mstep(Z, R, beta0, K, n1, lam, context: str):
    beta, iters, status, obj, gnorm = _kernels.mn_mstep(
        Z, R, beta0, K, n1, lam, max_iter=MSTEP_MAX_ITER, gtol=MSTEP_GTOL
    )
    if status == 2:
        raise ConvergenceError(
            f"{context}: objective not improvable with gradient max-norm {gnorm:.3e}",
            last_result=beta,
            diagnostics={"iterations": iters, "objective": obj, "gradient_norm": gnorm},
        )
    if status == 3:
        raise NumericalError(f"{context}: singular information matrix (lambda={lam})")
    return beta, iters, obj


def fisher_scoring_mstep(design: ClassifierDesign, beta0, pseudo_labels, lam: float,
                         penalty: BlockPenalty) -> CoefficientBlock:
    """One M-step: Fisher scoring with step halving from beta0."""
    R = _responses(design, pseudo_labels)
    beta, _, _ = _run_mstep(design.Z, R, _beta_of(beta0), penalty.K,
                            design.n_labeled, lam, "fisher scoring")
    return CoefficientBlock(beta=beta)


def em_fit(design: ClassifierDesign, lam: float, penalty: BlockPenalty,
           max_em: int = EM_MAX_SWEEPS) -> SemiLogisticFit:
    """Fit by EM: labeled-only initialization, then alternate posterior
    pseudo-labels for the unlabeled rows with full-data M-steps until the
    objective moves by less than 1e-5 (or max_em sweeps)."""
    if design.L < 2:
        raise InvalidArgumentError("need at least two classes")
    if max_em < 1:
        raise InvalidArgumentError(f"max_em must be >= 1, got {max_em}")
    if penalty.K.shape[0] != design.Z.shape[1]:
        raise InvalidArgumentError(
            f"penalty is {penalty.K.shape[0]}-dim, design rows are {design.Z.shape[1]}-dim"
        )
    n1, L = design.n_labeled, design.L
    q = design.Z.shape[1]
    Z1 = design.Z[:n1]

    beta0 = np.zeros((L - 1, q), dtype=np.float64)
    beta, _, _ = _run_mstep(Z1, design.Y, beta0, penalty.K, n1, lam, "EM step 1 (labeled only)")

    Zu = design.Z[n1:]
    trace = []
    pseudo = np.zeros((0, L - 1), dtype=np.float64)
    converged = False
    sweeps = 0
    prev_obj = None
    for k in range(1, max_em + 1):
        pseudo = softmax_probs(Zu, beta)[:, : L - 1] if Zu.shape[0] else pseudo
        R = np.vstack([design.Y, pseudo]) if pseudo.size else design.Y
        if prev_obj is None:
            prev_obj = _kernels.mn_objective(design.Z, R, beta, penalty.K, n1, lam)
            trace.append(prev_obj)
        beta, _, obj = _run_mstep(design.Z, R, beta, penalty.K, n1, lam, f"EM sweep {k}")
        trace.append(obj)
        sweeps = k
        if abs(obj - prev_obj) < EM_TOL:
            converged = True
            break
        prev_obj = obj

    return SemiLogisticFit(
        beta=CoefficientBlock(beta=beta), lam=float(lam), em_iterations=sweeps,
        objective_trace=np.asarray(trace, dtype=np.float64),
        pseudo_labels=pseudo, converged=converged,
    )


def predict(beta, Z_new: np.ndarray):
    """Class indices (argmax posterior, ties to the lowest class) and the
    n x L posterior matrix for new design rows."""
    B = _beta_of(beta)
    Z_new = np.atleast_2d(np.asarray(Z_new, dtype=np.float64))
    if Z_new.shape[1] != B.shape[1]:
        raise InvalidArgumentError(
            f"design rows have {Z_new.shape[1]} columns, coefficients expect {B.shape[1]} (basis mismatch)"
        )
    p = softmax_probs(Z_new, B)
    classes = np.argmax(p, axis=1) + 1
    return classes, p
