"""Location embeddings for next-location prediction.

The package pretrains a coordinate encoder against point-of-interest text
descriptions with a bidirectional contrastive objective, then benchmarks it
against lookup-table and skip-gram location embeddings on a transformer
next-location predictor, under both time-based and unseen-location splits.
"""

__version__ = "0.1.0"
