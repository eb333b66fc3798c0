"""Knowledge graph embeddings trained and evaluated with numeric edge attributes."""

from .evaluation import (
    ComparisonReport,
    MetricsReport,
    RankRecord,
    compare_splits,
    evaluate,
    export_scores,
    rank_one_side,
    rank_split,
)
from .focuse import (
    FocusEParams,
    decayed_structure_weight,
    focus_score,
    modulation_factor,
    sigmoid,
    softplus,
)
from .graph import (
    KnowledgeGraph,
    SplitSelector,
    TripleArray,
    TripleFileError,
    WeightedTriple,
    build_graph,
    dataset_stats,
    load_triples,
    normalize_weights,
    split_by_weight,
)
from .scorers import (
    COMPLEX,
    DISTMULT,
    SCORERS,
    TRANSE_L1,
    TRANSE_L2,
    EmbeddingTable,
    ScoreGradient,
    init_embeddings,
    load_embeddings,
    save_embeddings,
    score,
    score_all_objects,
    score_all_subjects,
    score_batch,
    score_complex,
    score_distmult,
    score_gradient,
    score_transe,
)
from .training import (
    AdamState,
    CorruptionBatch,
    EpochStats,
    SparseGradients,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    batch_loss_and_gradients,
    corrupt_batch,
    pair_loss,
    sample_corruptions,
    train,
)

__version__ = "0.1.0"
