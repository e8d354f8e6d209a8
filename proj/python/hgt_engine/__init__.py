"""Python interface to the heterogeneous graph transformer engine."""

__version__ = "0.1.0"

try:
    # installed wheel layout: the extension lives inside the package
    from ._hgt import (
        EngineError,
        HeteroGraph,
        evaluate,
        ingest,
        mrr,
        ndcg,
        param_count,
        rte_base,
        sample,
        synth,
        toy_academic,
        train,
    )
except ImportError:
    # in-tree builds put _hgt on PYTHONPATH instead
    from _hgt import (
        EngineError,
        HeteroGraph,
        evaluate,
        ingest,
        mrr,
        ndcg,
        param_count,
        rte_base,
        sample,
        synth,
        toy_academic,
        train,
    )

__all__ = [
    "EngineError",
    "HeteroGraph",
    "evaluate",
    "ingest",
    "mrr",
    "ndcg",
    "param_count",
    "rte_base",
    "sample",
    "synth",
    "toy_academic",
    "train",
]
