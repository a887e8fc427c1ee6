"""Streaming crowd label aggregation with Beta-Bernoulli worker qualities."""

from ._kernels import BACKEND
from .aggregators import (
    AggregationResult,
    LabelStream,
    StreamSession,
    la_onepass,
    la_twopass,
    majority_vote,
    online_aggregate,
)
from .ingestion import Dataset, build_dataset, load_dataset, parse_labels, parse_truth, shuffle_tasks
from .model import (
    Hyperparameters,
    LabelRecord,
    TaskBatch,
    WorkerState,
    estimate_label,
    estimate_label_wmv,
    log_posterior,
    posterior_mode,
    update_counts,
    wmv_weight,
)

__all__ = [
    "BACKEND",
    "AggregationResult",
    "Dataset",
    "Hyperparameters",
    "LabelRecord",
    "LabelStream",
    "StreamSession",
    "TaskBatch",
    "WorkerState",
    "build_dataset",
    "estimate_label",
    "estimate_label_wmv",
    "la_onepass",
    "la_twopass",
    "load_dataset",
    "log_posterior",
    "majority_vote",
    "online_aggregate",
    "parse_labels",
    "parse_truth",
    "posterior_mode",
    "shuffle_tasks",
    "update_counts",
    "wmv_weight",
]
