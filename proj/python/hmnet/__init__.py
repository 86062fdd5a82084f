# SPDX-License-Identifier: Apache-2.0
"""Hierarchical multi-task transformer: relevance, clustering and training tools."""

from ._hmnet import (
    Grouping,
    HMNetError,
    LayerPlan,
    RelevanceMatrix,
    compute_metric,
    count_params,
    kmeans,
    model_based_relevance,
    read_relevance_csv,
    run_cli,
    synthetic_suite,
    vocab_cooccurrence,
    write_relevance_csv,
)

__all__ = [
    "Grouping",
    "HMNetError",
    "LayerPlan",
    "RelevanceMatrix",
    "compute_metric",
    "count_params",
    "kmeans",
    "model_based_relevance",
    "read_relevance_csv",
    "run_cli",
    "synthetic_suite",
    "vocab_cooccurrence",
    "write_relevance_csv",
]
