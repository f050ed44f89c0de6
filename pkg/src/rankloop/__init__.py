"""Interactive ranked search with online metric learning.

A probe is ranked against a gallery under a Mahalanobis metric; each
annotator verdict (true match / strong negative) triggers a closed-form
rank-one metric update. Per-session models are later distilled into a
PSD-weighted ensemble ranker. See the README for the full tour.
"""

from .data import (
    Dataset,
    FeedbackEvent,
    FeedbackLabel,
    Gallery,
    GalleryItem,
    Probe,
    load_dataset,
    save_dataset,
)
from .evaluation import (
    EffortStats,
    cmc,
    effort_stats,
    exhaustive_browsed,
    expected_rank,
    mean_average_precision,
    report_to_json,
    write_report,
)
from .hvil import (
    HvilConfig,
    MetricModel,
    ProbeOutcome,
    UpdateContext,
    approx_loss_full,
    hvil_update,
    load_model,
    most_violator,
    run_probe_session,
    save_model,
)
from .losses import LossSchedule, hinge_violation, rank_loss
from .oracle import OraclePolicy, SimulatedAnnotator
from .ranking import RankedList, pair_scores, rank_gallery, rank_of
from .rmel import (
    EnsembleModel,
    RmelConfig,
    average_ensemble,
    build_training_pairs,
    distance_vector,
    ensemble_score,
    hol_rank,
    ideal_score,
    load_ensemble,
    rmel_gradient,
    rmel_objective,
    save_ensemble,
    train_rmel,
)
from .sessions import (
    BenchmarkConfig,
    SessionConfig,
    SessionStore,
    replay_benchmark,
    run_simulated_benchmark,
)
from .synthetic import SyntheticSpec, gen_synthetic

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig",
    "Dataset",
    "EffortStats",
    "EnsembleModel",
    "FeedbackEvent",
    "FeedbackLabel",
    "Gallery",
    "GalleryItem",
    "HvilConfig",
    "LossSchedule",
    "MetricModel",
    "OraclePolicy",
    "Probe",
    "ProbeOutcome",
    "RankedList",
    "RmelConfig",
    "SessionConfig",
    "SessionStore",
    "SimulatedAnnotator",
    "SyntheticSpec",
    "UpdateContext",
    "approx_loss_full",
    "average_ensemble",
    "build_training_pairs",
    "cmc",
    "distance_vector",
    "effort_stats",
    "ensemble_score",
    "exhaustive_browsed",
    "expected_rank",
    "gen_synthetic",
    "hinge_violation",
    "hol_rank",
    "hvil_update",
    "ideal_score",
    "load_dataset",
    "load_ensemble",
    "load_model",
    "mean_average_precision",
    "most_violator",
    "pair_scores",
    "rank_gallery",
    "rank_loss",
    "rank_of",
    "replay_benchmark",
    "report_to_json",
    "rmel_gradient",
    "rmel_objective",
    "run_probe_session",
    "run_simulated_benchmark",
    "save_dataset",
    "save_ensemble",
    "save_model",
    "train_rmel",
    "write_report",
]
