"""Temporal citation knowledge graphs: storage, embeddings, evaluation and communities."""

from ._core import (
    Checkpoint,
    GraphStore,
    TemporalSplit,
    communities,
    evaluate,
    ingest_jsonl,
    ingest_tsv,
    load_checkpoint,
    load_store,
    planted_graph,
    run_cli,
    temporal_split,
    train,
)

__all__ = [
    "Checkpoint",
    "GraphStore",
    "TemporalSplit",
    "communities",
    "evaluate",
    "ingest_jsonl",
    "ingest_tsv",
    "load_checkpoint",
    "load_store",
    "planted_graph",
    "run_cli",
    "temporal_split",
    "train",
]
