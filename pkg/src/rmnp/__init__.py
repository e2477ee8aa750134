"""RMNP: row-momentum-normalized preconditioning, with Muon and AdamW baselines.

Matrix-parameter optimizers built around two preconditioners (row-wise l2
normalization and quintic Newton-Schulz orthogonalization), Gram-matrix
diagonal-dominance diagnostics, desk-scale test problems with analytic
gradients, and a benchmark/training harness with CSV output.
"""

from .matrix import (
    DimensionError,
    Matrix,
    NormKind,
    as_matrix,
    frobenius_norm,
    gram,
    inf_two_norm,
    inner,
    norm,
    one_two_norm,
    row_norms,
    svd,
)
from .preconditioners import (
    DEFAULT_NS_COEFFS,
    DEFAULT_RN_EPS,
    NsCoefficients,
    PreconditionerKind,
    RankDeficiencyError,
    apply_preconditioner,
    exact_orthogonalize,
    newton_schulz5,
    rmnp_kronecker_preconditioner,
    row_normalize,
)
from .optimizers import (
    OptimizerConfig,
    OptimizerKind,
    OptimizerState,
    ParamGroup,
    Schedule,
    ScheduleKind,
    adamw_step,
    descent_step_bound,
    momentum_error,
    momentum_sgd_step,
    momentum_update,
    muon_step,
    partition_params,
    rmnp_step,
    schedule_lr,
)
from .dominance import (
    DEFAULT_RATIO_CAP,
    DominanceReport,
    GlobalDominance,
    RowRatios,
    UndefinedMetricError,
    aggregate,
    dominance_report,
    global_aggregate,
    row_ratios,
    row_ratios_streaming,
    smooth,
)
from .problems import (
    NoiseModel,
    Problem,
    estimate_inf_two_smoothness,
    make_logreg,
    make_mlp,
    make_quadratic,
    stochastic_gradient,
)
from .harness import (
    BenchRecord,
    DivergenceError,
    RatePoint,
    RunConfig,
    ScalingResult,
    TrainRecord,
    bench_preconditioner,
    bench_scaling,
    flop_estimate,
    parse_bench_csv,
    parse_train_csv,
    rate_trend_check,
    run_training,
    write_bench_csv,
    write_rate_csv,
    write_train_csv,
)

__version__ = "0.1.0"
