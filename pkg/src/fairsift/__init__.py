"""fairsift: fair top-K retrieval with group-balanced re-ranking,
bias metrics, and the statistics to separate model-encoded bias from
candidate-pool bias."""

__version__ = "0.1.0"

from .analysis import (
    MonteCarloEstimate,
    QuantileBiasCurve,
    RegressionFit,
    SyntheticSpec,
    expected_bias_binomial,
    generate_synthetic_corpus,
    monte_carlo_expected_bias,
    ols_fit,
    quantile_bias_curve,
    spearman,
)
from .attributes import (
    ClassEmbeddings,
    PredictionSet,
    PromptedQueryEmbeddings,
    SoftmaxClassifier,
    classifier_predict,
    train_softmax_classifier,
    zero_shot_embed_predict,
    zero_shot_prompt_predict,
)
from .corpus import (
    AttributeLabel,
    AttributeScheme,
    Corpus,
    ImageRecord,
    QueryRecord,
    parse_image_records,
    parse_query_records,
    validate_corpus,
)
from .metrics import (
    EvaluationReport,
    abs_bias_at_k,
    bag_bias,
    bias_at_k,
    build_report,
    map_at_k,
    recall_at_k,
)
from .selection import (
    OddPickPolicy,
    SelectionConfig,
    pbm_select,
    pbm_select_tradeoff,
    random_select,
)
from .similarity import RetrievalBag, ScoredImage, cosine, rank_top_k

__all__ = [
    "AttributeLabel",
    "AttributeScheme",
    "ClassEmbeddings",
    "Corpus",
    "EvaluationReport",
    "ImageRecord",
    "MonteCarloEstimate",
    "OddPickPolicy",
    "PredictionSet",
    "PromptedQueryEmbeddings",
    "QuantileBiasCurve",
    "QueryRecord",
    "RegressionFit",
    "RetrievalBag",
    "ScoredImage",
    "SelectionConfig",
    "SoftmaxClassifier",
    "SyntheticSpec",
    "abs_bias_at_k",
    "bag_bias",
    "bias_at_k",
    "build_report",
    "classifier_predict",
    "cosine",
    "expected_bias_binomial",
    "generate_synthetic_corpus",
    "map_at_k",
    "monte_carlo_expected_bias",
    "ols_fit",
    "parse_image_records",
    "parse_query_records",
    "pbm_select",
    "pbm_select_tradeoff",
    "quantile_bias_curve",
    "random_select",
    "rank_top_k",
    "recall_at_k",
    "spearman",
    "train_softmax_classifier",
    "validate_corpus",
    "zero_shot_embed_predict",
    "zero_shot_prompt_predict",
]
