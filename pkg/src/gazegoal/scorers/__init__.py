from .features import (
    FEATURE_GROUPS,
    CandidateInput,
    FeatureConfigError,
    FeatureStats,
    StatsFoldMismatch,
    apply_feature_stats,
    assemble_candidate_inputs,
    fit_feature_stats,
    validate_feature_config,
)
from .models import (
    FusionScorer,
    Hyperparams,
    RecurrentScorer,
    ScorerConfigError,
    ScorerOutput,
    StubScorer,
    TrainedScorer,
    TrainingError,
    evaluate_accuracy,
    expand_grid,
    load_checkpoint,
    register_paragraphs,
    save_checkpoint,
    score_candidates,
    train_scorer,
    train_with_grid,
)
from .generative import GenerativeClient, UnsupportedClientError, generative_loglik_select

__all__ = [
    "FEATURE_GROUPS", "CandidateInput", "FeatureConfigError", "FeatureStats",
    "FusionScorer", "GenerativeClient", "Hyperparams", "RecurrentScorer",
    "ScorerConfigError", "ScorerOutput", "StatsFoldMismatch", "StubScorer",
    "TrainedScorer", "TrainingError", "UnsupportedClientError",
    "apply_feature_stats", "assemble_candidate_inputs", "evaluate_accuracy",
    "expand_grid", "fit_feature_stats", "generative_loglik_select",
    "load_checkpoint", "register_paragraphs", "save_checkpoint",
    "score_candidates", "train_scorer", "train_with_grid",
    "validate_feature_config",
]
