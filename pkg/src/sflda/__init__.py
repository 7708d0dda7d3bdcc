"""Semi-supervised functional logistic discrimination.

Discrete observation curves are converted to Gaussian-basis coefficient
vectors by penalized smoothing with per-curve criterion-based tuning, then
classified with a penalized multinomial logistic model fit on labeled plus
unlabeled curves via an EM-wrapped Fisher-scoring procedure. The
regularization weight is chosen by GIC or GBIC.
"""

from ._kernels import BACKEND
from .basis import (
    CrossProductMatrix,
    GaussianBasis,
    KnotGrid,
    PenaltyMatrix,
    build_basis,
    cross_product_matrix,
    design_matrix,
    eval_basis,
    place_knots,
    second_difference_penalty,
)
from .errors import (
    ConvergenceError,
    DataFormatError,
    GridSearchError,
    InvalidArgumentError,
    NumericalError,
)
from .logit import (
    BlockPenalty,
    ClassifierDesign,
    CoefficientBlock,
    SemiLogisticFit,
    block_penalty,
    build_design,
    design_rows,
    em_fit,
    fisher_scoring_mstep,
    penalized_loglik,
    posteriors,
    predict,
    score_and_information,
)
from .selection import (
    CriterionInputs,
    CriterionReport,
    criterion_matrices,
    gbic_classifier,
    gic_classifier,
    select_lambda,
)
from .simgen import (
    Partition,
    SimConfig,
    SimulatedDataset,
    generate,
    generate_case1,
    generate_case2,
    partition,
)
from .smoother import (
    FunctionalDataset,
    RawCurve,
    SmoothFit,
    fit_penalized,
    functionalize,
    gic_smoothing,
    select_smoothing,
    smooth_with_basis,
)

__version__ = "0.1.0"
