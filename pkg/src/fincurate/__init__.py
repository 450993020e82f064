"""fincurate: post-training data curation and GRPO reward engine for financial QA.

The library covers the full path from a raw sample pool to training corpora:
semantic deduplication, chain-of-thought distillation, length-adaptive
verification, token-budget filtering, difficulty-aware RL selection, the
multiplicative format/outcome reward, evaluation metrics, and a stateless
reward service. See the ``fincurate`` CLI for stage-by-stage usage.
"""

from .corpus import CorpusStats, Language, PipelineManifest, Sample, TaskType, compute_stats, load_corpus, write_corpus
from .dedup import DedupReport, EmbeddingVector, cosine, deduplicate, embed_corpus
from .distill import DistillationRecord, build_distill_prompt, extract_boxed, synthesize_cot
from .endpoints import ChatResult, EndpointConfig, SamplingParams, chat_complete, embed
from .errors import ConfigError, DataError, EndpointError, FincurateError
from .lengths import TokenCount, TokenMethod, count_tokens, filter_by_length
from .metrics import EvalReport, Metric, accuracy, evaluate, weighted_f1
from .pipeline import PipelineConfig, run_pipeline
from .reward import (
    ExtractionMethod,
    FormatReward,
    OutcomeCause,
    OutcomeMultiplier,
    RewardBreakdown,
    RewardMode,
    extract_answer,
    format_reward,
    match_rule,
    outcome_multiplier,
    total_reward,
)
from .selection import RolloutStats, probe_difficulty, select_rl
from .service import create_app, serve_reward
from .verify import Route, VerificationRecord, Verdict, filter_verified, route, verify_long, verify_short

__version__ = "0.1.0"

__all__ = [
    "ChatResult",
    "ConfigError",
    "CorpusStats",
    "DataError",
    "DedupReport",
    "DistillationRecord",
    "EmbeddingVector",
    "EndpointConfig",
    "EndpointError",
    "EvalReport",
    "ExtractionMethod",
    "FincurateError",
    "FormatReward",
    "Language",
    "Metric",
    "OutcomeCause",
    "OutcomeMultiplier",
    "PipelineConfig",
    "PipelineManifest",
    "RewardBreakdown",
    "RewardMode",
    "RolloutStats",
    "Route",
    "Sample",
    "SamplingParams",
    "TaskType",
    "TokenCount",
    "TokenMethod",
    "VerificationRecord",
    "Verdict",
    "accuracy",
    "build_distill_prompt",
    "chat_complete",
    "compute_stats",
    "cosine",
    "count_tokens",
    "create_app",
    "deduplicate",
    "embed",
    "embed_corpus",
    "evaluate",
    "extract_answer",
    "extract_boxed",
    "filter_by_length",
    "filter_verified",
    "format_reward",
    "load_corpus",
    "match_rule",
    "outcome_multiplier",
    "probe_difficulty",
    "route",
    "run_pipeline",
    "select_rl",
    "serve_reward",
    "synthesize_cot",
    "total_reward",
    "verify_long",
    "verify_short",
    "weighted_f1",
    "write_corpus",
]
