"""Compressed Monte Carlo particle filtering.

Compresses a cloud of N weighted samples into M summary particles via a
partition of the support, preserving the evidence estimate exactly, and
builds particle filters on top that evaluate the (possibly expensive)
likelihood only at the summaries.
"""

from .cmc import (
    PartialWeights,
    ProvenanceMismatch,
    SelectionMode,
    SummaryCloud,
    cmc_estimate,
    compress,
    partial_weights,
    region_covariances,
    select_function_specific,
    select_stochastic,
    select_weighted_mean,
    summary_weights,
)
from .core import (
    AllWeightsZero,
    DimensionMismatch,
    EvidenceEstimate,
    RngStream,
    WeightedCloud,
    ess_max_weight,
    ess_sum_of_squares,
    evidence_estimate,
    is_estimate,
    logsumexp,
    normalize_weights,
)
from .filters import (
    AdaptiveM,
    Algorithm,
    DivisibilityViolation,
    EssKind,
    FilterConfig,
    FilterTrace,
    ModelDimensionMismatch,
    StateSpaceModel,
    adaptive_summary_count,
    posterior_mean,
    run_bpf,
    run_cbpf,
    run_filter,
    run_generic_cpf,
)
from .partition import (
    IndexSets,
    Partition,
    PartitionKind,
    assign,
    build_random_grid,
    build_uniform_grid,
    build_voronoi,
)
from .resample import (
    CovarianceNotSPD,
    ResampleMode,
    ResamplePlan,
    resample,
    resample_multinomial,
    resample_regularized,
    resample_systematic,
)

__version__ = "0.1.0"
