"""Online data poisoning against streaming logistic regression.

A simulation library for one question: when an online-gradient-descent
learner sits behind a filtering defense, how far can an adversary who
injects examples into the stream steer the learned model? The package pairs
attack engines and defense feasible sets with executable regime certificates
(a feasible segment when rapid steering is possible, a separating halfspace
when no poisoner can reach the target) and a CLI for sweep experiments.
"""

from .attacks import (
    ATTACKS,
    AttackConfig,
    AttackOutcome,
    ConcentratedAttack,
    FullyOnlineResult,
    GreedyAttack,
    SemiOnlineWKAttack,
    SimplisticAttack,
    fully_online_drive,
    make_attack,
    solve_step_scale,
)
from .defenses import (
    CentroidDefense,
    CentroidStats,
    Defense,
    LabelingOracleDefense,
    NormBallDefense,
    SlabDefense,
    calibrate_threshold,
    calibrated_defense,
    defense_from_config,
    fit_centroid_stats,
    linear_threshold_oracle,
    make_defense,
    segment_radius_in_ball,
)
from .errors import (
    AttackError,
    CalibrationError,
    IngestionError,
    StreamPoisonError,
    UndefinedMetricError,
    UnsupportedDefenseError,
)
from .harness import (
    FullyOnlineRunRecord,
    SemiOnlineRunRecord,
    emit_plot,
    emit_results,
    offline_optimal_error,
    read_results,
    run_fully_online,
    run_semi_online,
)
from .learner import (
    OnlineLogisticClassifier,
    Trajectory,
    cosine_similarity,
    error_rate,
    logistic_grad,
    logistic_loss,
    ogd_run,
    ogd_step,
    predict,
    predict_many,
    sigmoid,
)
from .regimes import (
    EASY,
    HARD,
    INTERMEDIATE,
    FeasibleSegment,
    HalfspaceWitness,
    RegimeVerdict,
    classify_centroid,
    classify_norm_ball,
    classify_slab,
    halfspace_separates,
    intermediate_case_report,
    rate_constant,
    regime_boundaries,
    segment_feasible,
)
from .stream import Stream, one_sided
from .tasks import (
    BasisTaskSpec,
    DatasetBundle,
    NormalizationRecord,
    coordinate_suppression_point,
    gen_basis_indices,
    gen_gaussian_task,
    gen_sign_task,
    load_csv_dataset,
    run_suppression_trial,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
