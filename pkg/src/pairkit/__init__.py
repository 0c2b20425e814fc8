"""Preference-pair curation toolkit.

Builds preference datasets from pools of candidate responses: computes
pair metrics (token edit distance, logprob distance, reward margin, and
their distance-calibrated combination), selects the best pair per pool,
and analyzes the resulting corpora.
"""

__version__ = "0.1.0"

from .data import (
    PoolFormatError,
    PreferencePair,
    Response,
    ResponsePool,
    Violation,
    parse_pairs_file,
    parse_pool_file,
    tokenize_whitespace,
    validate_pool,
    write_pairs,
    write_pools,
)
from .gateway import EndpointConfig, GatewayError, RetryPolicy, cache_key, fetch_logprobs, fetch_rewards
from .judge import (
    DEFAULT_CATALOG,
    Better,
    CorpusFeatureReport,
    FeatureCatalog,
    FeatureEntry,
    FeatureScore,
    FeatureVerdict,
    JudgeError,
    JudgeParseError,
    parse_verdict,
    render_judge_prompt,
    score_corpus,
    score_pair,
)
from .metrics import (
    FULL_DCRM,
    DcrmVariant,
    PairMetrics,
    dcrm,
    edit_distance,
    edit_distance_reference,
    logprob_diff,
    pair_metrics,
    reward_margin,
    sigmoid,
)
from .pairing import (
    PairingConfig,
    PairingError,
    SelectionReport,
    SelectionSkip,
    Strategy,
    select_all,
    select_pair,
)
from .stats import (
    DatasetStats,
    TokenFrequencyReport,
    bow_normalized,
    dataset_statistics,
    kl_divergence,
    pearson,
    token_frequency_diff,
)

__all__ = [
    "__version__",
    "Response",
    "ResponsePool",
    "PreferencePair",
    "Violation",
    "PoolFormatError",
    "parse_pool_file",
    "parse_pairs_file",
    "validate_pool",
    "write_pools",
    "write_pairs",
    "tokenize_whitespace",
    "PairMetrics",
    "DcrmVariant",
    "FULL_DCRM",
    "edit_distance",
    "edit_distance_reference",
    "logprob_diff",
    "reward_margin",
    "sigmoid",
    "dcrm",
    "pair_metrics",
    "Strategy",
    "PairingConfig",
    "PairingError",
    "SelectionSkip",
    "SelectionReport",
    "select_pair",
    "select_all",
    "DatasetStats",
    "TokenFrequencyReport",
    "dataset_statistics",
    "pearson",
    "kl_divergence",
    "bow_normalized",
    "token_frequency_diff",
    "RetryPolicy",
    "EndpointConfig",
    "GatewayError",
    "cache_key",
    "fetch_logprobs",
    "fetch_rewards",
    "Better",
    "FeatureCatalog",
    "FeatureEntry",
    "FeatureVerdict",
    "FeatureScore",
    "CorpusFeatureReport",
    "JudgeError",
    "JudgeParseError",
    "DEFAULT_CATALOG",
    "render_judge_prompt",
    "parse_verdict",
    "score_pair",
    "score_corpus",
]
