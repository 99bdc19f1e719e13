"""Pipelines shared by the command line and the acceptance checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ltlp.analysis import adjusted_rand_index, kmeans, repeat_seed
from ltlp.embedding import ReferenceSignal, build_reference, embed_all, embedding_matrix
from ltlp.errors import InvalidInput
from ltlp.measures import DiscreteMeasure, EmbeddingVector, TLpSignal
from ltlp.metric import lp_distance, pairwise_distances, tlp_distance, wasserstein_distance
from ltlp.solvers import SinkhornConfig
from ltlp.synth import Synth1DConfig, Synth2DConfig, gen_dataset_1d, gen_dataset_2d, normalize_for_wp

LINEAR_METHODS = ("LWP", "LTLP")
FULL_METHODS = ("LP", "WP", "TLP")


def wp_measure(signal: TLpSignal, chi: Optional[float] = None) -> DiscreteMeasure:
    """Measure used by the Wasserstein baselines: the signal's own measure when it
    has no channels, otherwise its values shifted positive and normalised."""
    if signal.channels == 0:
        return signal.measure
    return normalize_for_wp(signal, chi)


def embed_dataset(
    signals: Sequence[TLpSignal],
    method: str,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
    chi: Optional[float] = None,
    threads: Optional[int] = 1,
) -> Tuple[ReferenceSignal, List[EmbeddingVector]]:
    """Reference from the empirical average, then one transport solve per signal."""
    method = method.upper()
    if method not in LINEAR_METHODS:
        raise InvalidInput(f"method must be one of {LINEAR_METHODS}")
    if method == "LWP":
        items = [wp_measure(s, chi) for s in signals]
        ref = build_reference(items, "WP")
    else:
        items = list(signals)
        ref = build_reference(items, "TLP")
    emb = embed_all(items, ref, p, solver, channel_scale, sinkhorn_config, threads)
    return ref, emb


def reference_for(signals: Sequence[TLpSignal], method: str, chi: Optional[float] = None):
    method = method.upper()
    if method == "LWP":
        return build_reference([wp_measure(s, chi) for s in signals], "WP")
    return build_reference(list(signals), "TLP")


def full_distance_matrix(
    signals: Sequence[TLpSignal],
    method: str,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
    chi: Optional[float] = None,
    threads: Optional[int] = 1,
    progress_every: int = 0,
):
    method = method.upper()
    if method == "LP":
        return pairwise_distances(signals, lambda a, b: lp_distance(a, b, p), "LP", threads)
    if method == "WP":
        items = [wp_measure(s, chi) for s in signals]
        fn = lambda a, b: wasserstein_distance(a, b, p, solver, sinkhorn_config)  # noqa: E731
        return pairwise_distances(items, fn, "WP", threads, progress_every)
    if method == "TLP":
        fn = lambda a, b: tlp_distance(a, b, p, solver, channel_scale, sinkhorn_config)  # noqa: E731
        return pairwise_distances(signals, fn, "TLP", threads, progress_every)
    raise InvalidInput(f"full distances are available for {FULL_METHODS}")


@dataclass(frozen=True)
class ClusteringProtocol:
    """Embed with both linear methods, K-means, and score against the labels."""

    K: int
    solver: str = "exact"
    sinkhorn_config: Optional[SinkhornConfig] = None
    p: float = 2.0
    channel_scale: float = 1.0

    def ari(self, signals, labels, method: str, seed: int) -> float:
        _, emb = embed_dataset(signals, method, self.p, self.solver, self.channel_scale,
                               self.sinkhorn_config)
        X = embedding_matrix(emb)
        return adjusted_rand_index(labels, kmeans(X, self.K, repeat_seed(seed, 1)))


PROTOCOL_1D = ClusteringProtocol(K=3, solver="exact")
# the 1024-point lifted 2D problems are solved entropically; see the README
PROTOCOL_2D = ClusteringProtocol(
    K=2,
    solver="sinkhorn",
    sinkhorn_config=SinkhornConfig(epsilon=0.05, relative_epsilon=True, log_domain=False,
                                   tolerance=1e-6),
)


def clustering_trial(dim: int, seed: int, protocol: Optional[ClusteringProtocol] = None,
                     config=None) -> dict:
    """ARI of LTLp and LWp on one seeded synthetic dataset."""
    if dim == 1:
        signals, labels = gen_dataset_1d(config or Synth1DConfig(), seed)
        protocol = protocol or PROTOCOL_1D
    elif dim == 2:
        signals, labels = gen_dataset_2d(config or Synth2DConfig(), seed)
        protocol = protocol or PROTOCOL_2D
    else:
        raise InvalidInput("dim must be 1 or 2")
    return {m: protocol.ari(signals, labels, m, seed) for m in LINEAR_METHODS}
