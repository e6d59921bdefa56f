"""Zero-shot out-of-distribution detection over portable embedding tables.

The engine is model-agnostic: it consumes unit-norm embedding tables (binary
EMBT files or in-memory arrays), mines a negative label set from a candidate
lexicon by percentile distance, and streams a Bayesian-style confidence score
g = p1 * p2 / p0 whose marginal term p0 comes from an online class-frequency
histogram. An evaluation harness computes AUROC / FPR95 over configurable
stream orderings, trials, and ablation grids.
"""

from .embeddings import (
    EmbeddingTable,
    canonical_label,
    normalize,
    scaled_softmax,
    sim,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    EmptyTableError,
    EngineError,
    FormatError,
    InvalidCountsError,
    InvalidSpecError,
    NonPositiveTauError,
    NotEnoughCandidatesError,
    ZeroVectorError,
)
from .evaluation import (
    SHUFFLE_ALGORITHM,
    ClassLikelihoodProfile,
    EvalReport,
    OrderKind,
    SplitMix64,
    StreamOrdering,
    SweepPoint,
    TrialResult,
    ablation_sweep,
    auroc,
    class_likelihood_profile,
    fisher_yates_permutation,
    fpr_at_tpr,
    order_indices,
    run_stream,
    score_ordered_stream,
    tpr_threshold,
)
from .mining import (
    MinedLabelSet,
    MiningConfig,
    Selection,
    Side,
    mine,
    nearest_rank_index,
    percentile_distance,
)
from .scoring import (
    ClassHistogram,
    ScoreMode,
    ScoreRecord,
    ScorerConfig,
    Verdict,
    compute_p1,
    compute_p2,
    score_sample,
    score_stream,
)
from .synthetic import SynthData, SynthSpec, generate, presets

__version__ = "0.1.0"

__all__ = [
    "EmbeddingTable",
    "canonical_label",
    "normalize",
    "scaled_softmax",
    "sim",
    "EngineError",
    "ConfigError",
    "FormatError",
    "DimensionMismatchError",
    "ZeroVectorError",
    "EmptyInputError",
    "EmptyTableError",
    "NonPositiveTauError",
    "NotEnoughCandidatesError",
    "InvalidCountsError",
    "InvalidSpecError",
    "MinedLabelSet",
    "MiningConfig",
    "Selection",
    "Side",
    "mine",
    "nearest_rank_index",
    "percentile_distance",
    "ClassHistogram",
    "ScoreMode",
    "ScoreRecord",
    "ScorerConfig",
    "Verdict",
    "compute_p1",
    "compute_p2",
    "score_sample",
    "score_stream",
    "SHUFFLE_ALGORITHM",
    "SplitMix64",
    "fisher_yates_permutation",
    "order_indices",
    "auroc",
    "fpr_at_tpr",
    "tpr_threshold",
    "OrderKind",
    "StreamOrdering",
    "TrialResult",
    "EvalReport",
    "SweepPoint",
    "run_stream",
    "score_ordered_stream",
    "ablation_sweep",
    "ClassLikelihoodProfile",
    "class_likelihood_profile",
    "SynthSpec",
    "SynthData",
    "generate",
    "presets",
    "__version__",
]
