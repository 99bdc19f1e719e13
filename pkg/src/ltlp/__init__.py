"""Transport-based distances and linear embeddings for signals."""
from ltlp.measures import (
    DiscreteMeasure,
    DistanceMatrix,
    EmbeddingVector,
    TLpSignal,
    TransportMap,
    TransportPlan,
    lift,
    make_uniform,
)
from ltlp.metric import lp_distance, tlp_distance, tlp_map, wasserstein_distance

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "DistanceMatrix",
    "EmbeddingVector",
    "TLpSignal",
    "TransportMap",
    "TransportPlan",
    "lift",
    "lp_distance",
    "make_uniform",
    "tlp_distance",
    "tlp_map",
    "wasserstein_distance",
]
