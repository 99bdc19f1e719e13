"""Interpolation along transport maps and inversion of linear embeddings."""
from __future__ import annotations

from typing import List, Sequence

import numpy as np

from ltlp.analysis import pca
from ltlp.embedding import ReferenceSignal, embedding_matrix
from ltlp.errors import NoSuchComponent, OutOfRange, RankError, ShapeMismatch
from ltlp.measures import DiscreteMeasure, EmbeddingVector, TLpSignal, TransportMap

FIBRE_TOL = 1e-9


def interpolate(ref: ReferenceSignal, tmap: TransportMap, t: float) -> TLpSignal:
    """Point ``t`` on the straight line from the reference to the mapped signal.

    Atom ``i`` moves to ``(1 - t) x_i + t T(x_i)`` and carries
    ``(1 - t) h(x_i) + t f(T(x_i))``; weights are those of the reference. The
    result is a lifted measure, so two atoms may share a location.
    """
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"t must lie in [0, 1], got {t}")
    x = ref.measure.points
    d = x.shape[1]
    images = tmap.images
    if images.shape != (x.shape[0], d + ref.channels):
        raise ShapeMismatch(
            f"map images have shape {images.shape}, expected {(x.shape[0], d + ref.channels)}"
        )
    if t == 0.0:
        return ref.signal
    pts = (1.0 - t) * x + t * images[:, :d]
    vals = (1.0 - t) * ref.values + t * images[:, d:]
    return TLpSignal(DiscreteMeasure(pts, ref.measure.weights), vals)


def lifted_images(v: EmbeddingVector, ref: ReferenceSignal) -> np.ndarray:
    """Recover ``(T(x_i), f(T(x_i)))`` for every reference atom of positive weight."""
    n, d = ref.measure.points.shape
    if v.spatial.shape != (n, d) or v.channel.shape != (n, ref.channels):
        raise ShapeMismatch("embedding is not shaped for this reference")
    rho = ref.measure.weights
    live = rho > 0
    scale = rho[live, None] ** (1.0 / v.exponent)
    spatial = v.spatial[live] / scale + ref.measure.points[live]
    channel = v.channel[live] / (scale * v.channel_scale) + ref.values[live]
    return np.hstack([spatial, channel])


def invert_embedding(v: EmbeddingVector, ref: ReferenceSignal) -> TLpSignal:
    """Signal whose embedding is ``v``: lift back, then average each fibre.

    Atoms whose spatial images agree after rounding to ``FIBRE_TOL`` are merged
    into one atom carrying their summed weight and the weight-averaged channel
    value. Output atoms follow the order of first appearance.
    """
    d = ref.measure.dim
    lifted = lifted_images(v, ref)
    w = ref.measure.weights[ref.measure.weights > 0]
    keys = np.round(lifted[:, :d] / FIBRE_TOL).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    group = rank[inverse]
    g = order.size
    mass = np.bincount(group, weights=w, minlength=g)
    pts = lifted[first[order], :d]
    vals = np.zeros((g, ref.channels))
    for c in range(ref.channels):
        vals[:, c] = np.bincount(group, weights=w * lifted[:, d + c], minlength=g) / mass
    # unmerged atoms keep their values and weights bit for bit
    alone = np.bincount(group, minlength=g) == 1
    vals[alone] = lifted[first[order][alone], d:]
    mass[alone] = w[first[order][alone]]
    return TLpSignal(DiscreteMeasure(pts, mass), vals)


def _vector_from_flat(flat: np.ndarray, like: EmbeddingVector) -> EmbeddingVector:
    n, d = like.spatial.shape
    m = like.channel.shape[1]
    return EmbeddingVector(
        flat[: n * d].reshape(n, d),
        flat[n * d:].reshape(n, m),
        like.weights,
        like.exponent,
        like.channel_scale,
    )


def mode_sweep(
    embeddings: Sequence[EmbeddingVector],
    component: int,
    stddevs: Sequence[float],
    ref: ReferenceSignal,
) -> List[TLpSignal]:
    """Invert ``mean + s * sqrt(lambda_k) * e_k`` for every ``s`` in ``stddevs``."""
    X = embedding_matrix(embeddings)
    if component < 0:
        raise NoSuchComponent("component index must be nonnegative")
    try:
        res = pca(X, component + 1)
    except RankError as exc:
        raise NoSuchComponent(str(exc)) from exc
    e = res.components[component]
    step = np.sqrt(res.eigenvalues[component])
    return [
        invert_embedding(_vector_from_flat(res.mean + s * step * e, embeddings[0]), ref)
        for s in stddevs
    ]
