"""Dynamic distribution-pruning architecture search.

Architectures are sampled from per-edge categorical distributions over a
DAG cell space, evaluated by pluggable training oracles, and the
distributions are updated and pruned — one operation per edge per round —
until a single architecture survives.  A theory companion computes the
closed-form pruning-error bound and validates it by Monte Carlo.
"""

from .distribution import (
    CategoricalState,
    DistributionError,
    EdgeDistribution,
    PruneEvent,
    disjoint_sample,
    final_architecture,
    init_uniform,
    is_converged,
    prune_min,
    sample_onehot,
    state_from_json,
    state_to_json,
    update_softmax,
    validate_state,
)
from .engine import (
    BaselineResult,
    EngineError,
    Evaluator,
    SearchConfig,
    SearchResult,
    read_checkpoint,
    run_random_baseline,
    run_search,
    total_epoch_budget,
)
from .estimator import EstimationError, EvaluationRecord, estimate_scores, score_vectors
from .oracles import (
    NoiseParams,
    OracleError,
    SyntheticEvaluator,
    SyntheticLandscape,
    TabularBenchmark,
    TabularEvaluator,
    generate_benchmark,
    read_benchmark,
    read_landscape,
    ridge_landscape,
    write_benchmark,
    write_landscape,
)
from .space import (
    Architecture,
    EdgeId,
    FlatEdge,
    Operation,
    SearchSpaceSpec,
    SpaceError,
    build_space,
    canonical_edges,
    decode,
    edge_label,
    encode,
    enumerate_architectures,
    space_size,
    validate_architecture,
)
from .supernet import (
    MICRO_OPS,
    Dataset,
    MicroSupernetEvaluator,
    make_dataset,
    median_retrain_accuracy,
    retrain_accuracy,
)
from .theory import (
    BoundParams,
    GridCellResult,
    GridValidation,
    MonteCarloResult,
    TheoryError,
    TheoryRow,
    bound_rows,
    brute_force_optimum,
    delta_threshold,
    measure_noise_deviation,
    monte_carlo_error_rate,
    partial_sum_inverse_squares,
    partial_sums_inverse_squares,
    sigma,
    single_round_bound,
    total_error_bound,
    validate_bound_grid,
    wilson_interval,
    write_theory_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "BaselineResult",
    "BoundParams",
    "CategoricalState",
    "Dataset",
    "DistributionError",
    "EdgeDistribution",
    "EdgeId",
    "EngineError",
    "EstimationError",
    "EvaluationRecord",
    "Evaluator",
    "FlatEdge",
    "GridCellResult",
    "GridValidation",
    "MICRO_OPS",
    "MicroSupernetEvaluator",
    "MonteCarloResult",
    "NoiseParams",
    "Operation",
    "OracleError",
    "PruneEvent",
    "SearchConfig",
    "SearchResult",
    "SearchSpaceSpec",
    "SpaceError",
    "SyntheticEvaluator",
    "SyntheticLandscape",
    "TabularBenchmark",
    "TabularEvaluator",
    "TheoryError",
    "TheoryRow",
    "bound_rows",
    "brute_force_optimum",
    "build_space",
    "canonical_edges",
    "decode",
    "delta_threshold",
    "disjoint_sample",
    "edge_label",
    "encode",
    "enumerate_architectures",
    "estimate_scores",
    "final_architecture",
    "generate_benchmark",
    "init_uniform",
    "is_converged",
    "make_dataset",
    "measure_noise_deviation",
    "monte_carlo_error_rate",
    "partial_sum_inverse_squares",
    "partial_sums_inverse_squares",
    "prune_min",
    "read_benchmark",
    "read_checkpoint",
    "read_landscape",
    "median_retrain_accuracy",
    "retrain_accuracy",
    "ridge_landscape",
    "run_random_baseline",
    "run_search",
    "sample_onehot",
    "score_vectors",
    "sigma",
    "single_round_bound",
    "space_size",
    "state_from_json",
    "state_to_json",
    "total_epoch_budget",
    "total_error_bound",
    "update_softmax",
    "validate_architecture",
    "validate_bound_grid",
    "validate_state",
    "wilson_interval",
    "write_benchmark",
    "write_landscape",
    "write_theory_csv",
]
