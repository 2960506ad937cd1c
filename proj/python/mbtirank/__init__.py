"""MBTI ranking rewards, toy GRPO training and evaluation metrics."""

from ._core import (
    MbtiError,
    __version__,
    all_types,
    binary_macro_f1,
    dcg_at_k,
    dim_similarity,
    format_sft_target,
    group_advantages,
    handle_score,
    mask_text,
    multiclass_f1,
    ndcg_at_k,
    normalize_type,
    parse_completion,
    total_reward,
    train_synthetic,
)

__all__ = [
    "MbtiError",
    "__version__",
    "all_types",
    "binary_macro_f1",
    "dcg_at_k",
    "dim_similarity",
    "format_sft_target",
    "group_advantages",
    "handle_score",
    "mask_text",
    "multiclass_f1",
    "ndcg_at_k",
    "normalize_type",
    "parse_completion",
    "total_reward",
    "train_synthetic",
]
