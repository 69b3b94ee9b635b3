"""Mobility data: ingestion, preprocessing, sequences, splits, synthesis."""

from nextloc.mobdata.model import (
    DatasetSplit,
    Location,
    LocationIndex,
    MobilitySequence,
    VisitRecord,
    sequence_id,
)
from nextloc.mobdata.ingest import filter_min_counts, load_checkins
from nextloc.mobdata.staypoints import Staypoint, cluster_staypoints, convex_hull, detect_staypoints
from nextloc.mobdata.sequences import (
    apply_split_manifest,
    build_sequences,
    read_sequences,
    split_conventional,
    split_inductive,
    split_manifest,
    write_sequences,
    write_split_manifest,
    read_split_manifest,
)
from nextloc.mobdata.synth import SynthCity, default_transition_matrix, generate_synthetic_city

__all__ = [
    "DatasetSplit",
    "Location",
    "LocationIndex",
    "MobilitySequence",
    "Staypoint",
    "SynthCity",
    "VisitRecord",
    "apply_split_manifest",
    "build_sequences",
    "cluster_staypoints",
    "convex_hull",
    "default_transition_matrix",
    "detect_staypoints",
    "filter_min_counts",
    "generate_synthetic_city",
    "load_checkins",
    "read_sequences",
    "read_split_manifest",
    "sequence_id",
    "split_conventional",
    "split_inductive",
    "split_manifest",
    "write_sequences",
    "write_split_manifest",
]
