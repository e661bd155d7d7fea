"""Topological bounds on two-parameter quantum estimation in a Chern-insulator model."""
from .bounds import (
    BoundsReport,
    FisherMatrix,
    WeightMatrix,
    berry_bound,
    bounds_report,
    classical_fim,
    holevo_bound,
    holevo_variational,
    jacobian_weight,
    qfi_matrix,
    qfi_weight,
    r_parameter,
    sld_crb,
)
from .estimation import (
    CovarianceEstimate,
    MeasurementRecord,
    asymptotic_covariance,
    mle_estimate,
    monte_carlo_covariance,
    sample_outcomes,
    uncertainty_volume,
    weighted_variance,
)
from .model import (
    BlochPoint,
    BlochVector,
    GeometricTensor,
    PureQubitState,
    bloch_vector,
    chern_number,
    excited_state,
    qgt_analytic,
    qgt_fidelity,
    quantum_volume,
)
from .optimizer import OptimizationResult, feasible_povm, optimize_det_fim, optimize_weighted
from .povm import (
    NaimarkFrame,
    Povm,
    PovmElement,
    naimark_dilation,
    outcome_probabilities,
    projective_fim_rank,
    sic_povm,
    trine_povm,
    validate,
)

__version__ = "0.1.0"
