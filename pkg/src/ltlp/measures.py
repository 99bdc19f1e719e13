"""Measures, signals, plans, maps and embeddings.

Every container here is an immutable dataclass over read-only numpy arrays.
Points are stored as ``(n, d)`` arrays and channel values as ``(n, m)`` arrays,
so a 1D signal on a grid has ``points.shape == (n, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ltlp.errors import (
    EmptySupport,
    InvalidInput,
    InvalidScale,
    ShapeMismatch,
)

WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-9

METHODS = ("LP", "WP", "TLP", "LWP", "LTLP", "COR")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def as_points(points) -> np.ndarray:
    """Coerce a coordinate list to a float ``(n, d)`` array."""
    a = np.asarray(points, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidInput(f"points must be 1D or 2D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure ``sum_i w_i delta_{x_i}`` on R^d."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] == 0:
            raise EmptySupport("measure needs at least one support point")
        if w.shape[0] != pts.shape[0]:
            raise ShapeMismatch(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("support points must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInput("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidInput(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0])) or bool(
            np.allclose(self.weights, 1.0 / self.n, rtol=0, atol=1e-15)
        )


def make_uniform(points) -> DiscreteMeasure:
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptySupport("empty point list")
    if not np.all(np.isfinite(pts)):
        raise InvalidInput("NaN or infinite coordinate")
    n = pts.shape[0]
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class TLpSignal:
    """A measure together with a channel vector at every support point."""

    measure: DiscreteMeasure
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.measure.n:
            raise ShapeMismatch(
                f"values shape {v.shape} does not match support size {self.measure.n}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidInput("channel values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.measure.points

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    @classmethod
    def on_grid(cls, points, values) -> "TLpSignal":
        """Signal with the uniform base measure over ``points``."""
        return cls(make_uniform(points), values)


@dataclass(frozen=True)
class LiftedMeasure:
    """Pushforward of a signal's measure onto the graph of its channel function."""

    base: DiscreteMeasure
    spatial_dim: int
    channel_scale: float = 1.0

    @property
    def points(self) -> np.ndarray:
        return self.base.points

    @property
    def weights(self) -> np.ndarray:
        return self.base.weights


def lift(signal: TLpSignal, channel_scale: float = 1.0) -> LiftedMeasure:
    """Map ``(mu, f)`` to the measure with atoms ``(x_i, scale * f(x_i))``."""
    if not np.isfinite(channel_scale) or channel_scale <= 0:
        raise InvalidScale(f"channel_scale must be positive, got {channel_scale}")
    pts = np.hstack([signal.points, channel_scale * signal.values])
    return LiftedMeasure(
        DiscreteMeasure(pts, signal.weights), signal.measure.dim, float(channel_scale)
    )


@dataclass(frozen=True)
class CostMatrix:
    """Ground-cost matrix with the exponent it was built for.

    ``standard`` marks a plain ``|x - y|_p^p`` cost between the stored point
    sets, which lets the exact solver pick the 1D monotone route.
    """

    entries: np.ndarray
    exponent: float
    standard: bool = False

    def __post_init__(self):
        c = np.asarray(self.entries, dtype=float)
        if c.ndim != 2:
            raise ShapeMismatch("cost matrix must be 2D")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise InvalidInput("cost entries must be finite and nonnegative")
        if self.exponent < 1:
            raise InvalidInput("exponent must be >= 1")
        object.__setattr__(self, "entries", _frozen(c))

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix together with its marginals and total (p-th power) cost."""

    coupling: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    cost: float
    converged: bool = True
    iterations: int = 0
    method: str = "exact"

    def __post_init__(self):
        for name in ("coupling", "source_weights", "target_weights"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.coupling.shape != (self.source_weights.size, self.target_weights.size):
            raise ShapeMismatch("coupling shape does not match marginals")
        if np.any(self.coupling < 0):
            raise InvalidInput("coupling entries must be nonnegative")

    def marginal_error(self) -> float:
        rows = np.abs(self.coupling.sum(axis=1) - self.source_weights).max()
        cols = np.abs(self.coupling.sum(axis=0) - self.target_weights).max()
        return float(max(rows, cols))


@dataclass(frozen=True)
class TransportMap:
    """Per-source-point images, plus a target index when the map is deterministic."""

    images: np.ndarray
    assignment: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "images", _frozen(as_points(self.images)))
        if self.assignment is not None:
            a = np.array(self.assignment, dtype=np.int64, copy=True)
            a.setflags(write=False)
            if a.shape != (self.images.shape[0],):
                raise ShapeMismatch("assignment length must match number of images")
            object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.images.shape[0]


@dataclass(frozen=True)
class EmbeddingVector:
    """Linear-embedding coordinates of one signal against a fixed reference.

    ``spatial[j] = (T(x_j) - x_j) * rho_j**(1/p)`` and, for the TLp embedding,
    ``channel[j] = scale * (f(T(x_j)) - h(x_j)) * rho_j**(1/p)``.
    """

    spatial: np.ndarray
    channel: np.ndarray
    weights: np.ndarray
    exponent: float
    channel_scale: float = 1.0
    converged: bool = True

    def __post_init__(self):
        s = as_points(self.spatial)
        c = np.asarray(self.channel, dtype=float)
        if c.size == 0:
            c = np.zeros((s.shape[0], 0))
        elif c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != s.shape[0] or np.asarray(self.weights).size != s.shape[0]:
            raise ShapeMismatch("spatial, channel and weight blocks disagree in length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(c))):
            raise InvalidInput("embedding entries must be finite")
        object.__setattr__(self, "spatial", _frozen(s))
        object.__setattr__(self, "channel", _frozen(c))
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights).reshape(-1)))

    def flat(self) -> np.ndarray:
        """Spatial block followed by channel block, both row-major."""
        return np.concatenate([self.spatial.ravel(), self.channel.ravel()])

    def norm(self) -> float:
        return float(np.sum(np.abs(self.flat()) ** self.exponent) ** (1.0 / self.exponent))


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray
    method: str
    solver_calls: int = 0

    def __post_init__(self):
        d = np.asarray(self.entries, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ShapeMismatch("distance matrix must be square")
        if self.method not in METHODS:
            raise InvalidInput(f"unknown method tag {self.method!r}")
        if not np.allclose(d, d.T, rtol=0, atol=1e-9):
            raise InvalidInput("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0) or np.any(d < 0):
            raise InvalidInput("distance matrix needs zero diagonal and nonnegative entries")
        object.__setattr__(self, "entries", _frozen(d))

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def symmetrize(d: np.ndarray) -> np.ndarray:
    """Average with the transpose, clip tiny negatives and zero the diagonal."""
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def stack_points(signals: Sequence[TLpSignal]) -> np.ndarray:
    return np.stack([s.points for s in signals])
