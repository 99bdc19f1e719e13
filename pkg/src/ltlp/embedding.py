"""Linear Wasserstein (LWp) and linear TLp (LTLp) embeddings.

Each signal is transported from a fixed reference and represented by the
displacement of every reference atom, weighted by ``rho_j**(1/p)`` so that a
plain l^p distance between embedding vectors reproduces the weighted
integral. Embedding N signals therefore costs N transport solves instead of
N(N-1)/2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ltlp.errors import ChannelMismatch, DimMismatch, GridMismatch, InvalidInput, ShapeMismatch
from ltlp.measures import (
    DiscreteMeasure,
    DistanceMatrix,
    EmbeddingVector,
    TLpSignal,
    _frozen,
    lift,
    symmetrize,
)
from ltlp.metric import optimal_plan
from ltlp.parallel import parallel_map
from ltlp.solvers import SinkhornConfig, barycentric_map

KINDS = ("WP", "TLP")

SignalLike = Union[TLpSignal, DiscreteMeasure]


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference ``(sigma, h)``; ``h`` has zero columns for the Wasserstein kind."""

    measure: DiscreteMeasure
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"kind must be one of {KINDS}")
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            v = np.zeros((self.measure.n, 0))
        elif v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.measure.n:
            raise ShapeMismatch("reference values do not match reference support")
        if self.kind == "WP" and v.shape[1] != 0:
            raise InvalidInput("a WP reference carries no channel values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def signal(self) -> TLpSignal:
        return TLpSignal(self.measure, self.values)

    @classmethod
    def from_signal(cls, signal: TLpSignal) -> "ReferenceSignal":
        return cls(signal.measure, signal.values, "TLP")

    @classmethod
    def from_measure(cls, measure: DiscreteMeasure) -> "ReferenceSignal":
        return cls(measure, np.zeros((measure.n, 0)), "WP")


def _measure_of(s: SignalLike) -> DiscreteMeasure:
    return s if isinstance(s, DiscreteMeasure) else s.measure


def build_reference(signals: Sequence[SignalLike], kind: str) -> ReferenceSignal:
    """Empirical-average reference over signals sharing one support grid.

    ``WP``: sigma carries the averaged weights. ``TLP``: sigma is the common
    base measure and ``h`` the pointwise mean of the channel values.
    """
    if kind not in KINDS:
        raise InvalidInput(f"kind must be one of {KINDS}")
    if not signals:
        raise InvalidInput("need at least one signal")
    measures = [_measure_of(s) for s in signals]
    grid = measures[0].points
    for m in measures[1:]:
        if m.points.shape != grid.shape or not np.array_equal(m.points, grid):
            raise GridMismatch("signals are not on a common support grid; resample first")
    w = np.mean([m.weights for m in measures], axis=0)
    sigma = DiscreteMeasure(grid, w / w.sum())
    if kind == "WP":
        return ReferenceSignal.from_measure(sigma)
    if any(isinstance(s, DiscreteMeasure) for s in signals):
        raise InvalidInput("a TLP reference needs signals with channel values")
    channels = {s.channels for s in signals}
    if len(channels) != 1:
        raise ChannelMismatch(f"signals carry differing channel counts {sorted(channels)}")
    h = np.mean([s.values for s in signals], axis=0)
    return ReferenceSignal(sigma, h, "TLP")


def embed(
    signal: SignalLike,
    ref: ReferenceSignal,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
) -> EmbeddingVector:
    """Embed one signal against ``ref``.

    The transport map comes from an exact solve (a permutation when supports
    are uniform with equal size) or from the barycentric projection of a
    Sinkhorn plan.
    """
    rho_p = ref.measure.weights ** (1.0 / p)
    x = ref.measure.points
    target = _measure_of(signal)
    if target.dim != ref.measure.dim:
        raise DimMismatch("signal and reference live in different dimensions")
    if ref.kind == "WP":
        plan = optimal_plan(ref.measure, target, p, solver, sinkhorn_config)
        T = barycentric_map(plan, target.points).images
        spatial = (T - x) * rho_p[:, None]
        return EmbeddingVector(spatial, np.zeros((x.shape[0], 0)), ref.measure.weights, p,
                               converged=plan.converged)
    if isinstance(signal, DiscreteMeasure):
        raise InvalidInput("a TLP reference needs a signal with channel values")
    if signal.channels != ref.channels:
        raise ChannelMismatch(f"signal has {signal.channels} channels, reference {ref.channels}")
    src = lift(ref.signal, channel_scale)
    dst = lift(signal, channel_scale)
    plan = optimal_plan(src.base, dst.base, p, solver, sinkhorn_config)
    d = x.shape[1]
    T = barycentric_map(plan, np.hstack([signal.points, signal.values])).images
    spatial = (T[:, :d] - x) * rho_p[:, None]
    channel = channel_scale * (T[:, d:] - ref.values) * rho_p[:, None]
    return EmbeddingVector(spatial, channel, ref.measure.weights, p, channel_scale,
                           converged=plan.converged)


def embed_all(
    signals: Sequence[SignalLike],
    ref: ReferenceSignal,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
    threads: Optional[int] = 1,
) -> list:
    return parallel_map(
        lambda s: embed(s, ref, p, solver, channel_scale, sinkhorn_config), signals, threads
    )


def embedding_matrix(embeddings: Sequence[EmbeddingVector]) -> np.ndarray:
    if not embeddings:
        raise InvalidInput("no embeddings given")
    shapes = {(e.spatial.shape, e.channel.shape) for e in embeddings}
    if len(shapes) != 1:
        raise ShapeMismatch(f"embeddings have differing shapes {sorted(shapes)}")
    return np.stack([e.flat() for e in embeddings])


def linear_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.spatial.shape != b.spatial.shape or a.channel.shape != b.channel.shape:
        raise ShapeMismatch("embeddings have different shapes")
    diff = np.abs(a.flat() - b.flat())
    return float(np.sum(diff**a.exponent) ** (1.0 / a.exponent))


def pairwise_linear_distances(embeddings: Sequence[EmbeddingVector]) -> DistanceMatrix:
    X = embedding_matrix(embeddings)
    exponents = {e.exponent for e in embeddings}
    if len(exponents) != 1:
        raise ShapeMismatch(f"embeddings use different exponents {sorted(exponents)}")
    p = exponents.pop()
    method = "LTLP" if embeddings[0].channel.shape[1] > 0 else "LWP"
    if len(embeddings) == 1:
        return DistanceMatrix(np.zeros((1, 1)), method)
    metric = "euclidean" if p == 2 else "minkowski"
    kwargs = {} if p == 2 else {"p": p}
    D = squareform(pdist(X, metric, **kwargs))
    return DistanceMatrix(symmetrize(D), method)
