"""Synthetic 1D hump/chirp and 2D Gaussian-modulated datasets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ltlp.errors import InvalidGamma, InvalidInput, InvalidParams, NegativeMass
from ltlp.measures import DiscreteMeasure, TLpSignal

GridLike = Union[int, Sequence[float], np.ndarray]

HUMP, CHIRP_1, CHIRP_2 = 0, 1, 2
M1, M2 = "M1", "M2"

_EDGE_TOL = 1e-12


def unit_grid(grid: GridLike = 150) -> np.ndarray:
    if isinstance(grid, (int, np.integer)):
        if grid < 2:
            raise InvalidInput("grid needs at least two points")
        return np.linspace(0.0, 1.0, int(grid))
    return np.asarray(grid, dtype=float).reshape(-1)


def indicator(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Closed-interval indicator, tolerant to rounding at the endpoints."""
    return ((x >= lo - _EDGE_TOL) & (x <= hi + _EDGE_TOL)).astype(float)


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def hump_intervals(l: float, r: float, b: float) -> List[Tuple[float, float]]:
    if r <= 0 or b <= 0:
        raise InvalidParams("r and b must be positive")
    if l < -_EDGE_TOL or l > 1 - b - 2 * r + _EDGE_TOL:
        raise InvalidParams(f"l={l} outside [0, 1 - b - 2r] = [0, {1 - b - 2 * r:g}]")
    return [(l, l + r), (l + b + r, l + b + 2 * r)]


def chirp_teeth(l: float, r: float, gamma: float) -> List[Tuple[float, float]]:
    if gamma <= 0:
        raise InvalidGamma("gamma must be positive")
    count = r / gamma
    if abs(count - round(count)) > 1e-9 or round(count) < 1:
        raise InvalidGamma(f"gamma={gamma} does not divide r={r} into whole teeth")
    return [(l + j * gamma, l + (2 * j + 1) * gamma / 2) for j in range(int(round(count)))]


def hump_constant(r: float) -> float:
    return 1.0 / (2 * r)


def chirp_constant(r: float, gamma: float) -> float:
    teeth = chirp_teeth(0.0, r, gamma)
    return 1.0 / (len(teeth) * gamma / 2 + 0.25 * r)


def gen_hump(l, r, b, grid: GridLike = 150, noise_sigma: float = 1.0, rng=None) -> TLpSignal:
    """Double hump ``K1 * (1[l, l+r] + 1[l+b+r, l+b+2r])`` plus Gaussian noise."""
    x = unit_grid(grid)
    (a0, a1), (b0, b1) = hump_intervals(l, r, b)
    f = hump_constant(r) * (indicator(x, a0, a1) + indicator(x, b0, b1))
    if noise_sigma > 0:
        f = f + _rng(rng).normal(0.0, noise_sigma, size=x.size)
    return TLpSignal.on_grid(x, f)


def gen_chirp(l, r, b, gamma, grid: GridLike = 150, noise_sigma: float = 1.0, rng=None) -> TLpSignal:
    """Chirp-hump: ``r / gamma`` teeth of width ``gamma / 2``, then a quarter-height hump."""
    x = unit_grid(grid)
    hump_intervals(l, r, b)
    teeth = chirp_teeth(l, r, gamma)
    f = sum(indicator(x, lo, hi) for lo, hi in teeth)
    f = f + 0.25 * indicator(x, l + b + r, l + b + 2 * r)
    f = chirp_constant(r, gamma) * f
    if noise_sigma > 0:
        f = f + _rng(rng).normal(0.0, noise_sigma, size=x.size)
    return TLpSignal.on_grid(x, f)


def grid_2d(nx: int = 32, ny: Optional[int] = None) -> np.ndarray:
    """Row-major ``(nx * ny, 2)`` node coordinates of a uniform grid on [0, 1]^2."""
    ny = nx if ny is None else ny
    X, Y = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny), indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def draw_alpha(class_tag: str, rng) -> float:
    rng = _rng(rng)
    if class_tag == M1:
        return float(rng.normal(0.0, 1.0))
    if class_tag == M2:
        return float(rng.normal(-4.0, 1.5))
    raise InvalidInput(f"class_tag must be {M1!r} or {M2!r}")


def gen_2d(class_tag: str, grid: int = 32, rng=None, return_impulses: bool = False):
    """Field ``alpha * x * exp(-x^2 - y^2)`` plus unit pixel noise.

    ``M1`` draws ``alpha ~ N(0, 1)`` and then sets between 10 and 20 random
    pixels to -2; ``M2`` draws ``alpha ~ N(-4, 1.5)`` (1.5 is the standard
    deviation).
    """
    rng = _rng(rng)
    pts = grid_2d(grid)
    alpha = draw_alpha(class_tag, rng)
    f = alpha * pts[:, 0] * np.exp(-pts[:, 0] ** 2 - pts[:, 1] ** 2)
    f = f + rng.normal(0.0, 1.0, size=f.size)
    impulses = 0
    if class_tag == M1:
        impulses = int(rng.integers(10, 21))
        f[rng.choice(f.size, size=impulses, replace=False)] = -2.0
    signal = TLpSignal.on_grid(pts, f)
    return (signal, impulses) if return_impulses else signal


def default_chi(signal: TLpSignal) -> float:
    return float(abs(signal.values.mean(axis=1).min()) + 0.01)


def normalize_for_wp(signal: TLpSignal, chi: Optional[float] = None) -> DiscreteMeasure:
    """Probability weights proportional to ``f + chi`` on the signal's grid.

    Multi-channel signals are averaged across channels first. ``chi`` defaults
    to ``|min f| + 0.01``.
    """
    f = signal.values.mean(axis=1)
    chi = default_chi(signal) if chi is None else float(chi)
    g = f + chi
    if np.any(g <= 0):
        raise NegativeMass(f"f + chi has minimum {g.min():g}; increase chi")
    w = g * signal.weights
    return DiscreteMeasure(signal.points, w / w.sum())


@dataclass(frozen=True)
class Synth1DConfig:
    l: float = 0.2
    r: float = 0.1
    b: float = 0.3
    gamma1: float = 0.02
    gamma2: float = 0.05
    noise: float = 1.0
    grid: int = 150
    n_hump: int = 30
    n_chirp: int = 30
    r1: float = 0.5

    def __post_init__(self):
        hump_intervals(self.l, self.r, self.b)
        chirp_teeth(self.l, self.r, self.gamma1)
        chirp_teeth(self.l, self.r, self.gamma2)
        if not 0 <= self.r1 <= 1:
            raise InvalidParams("r1 must be a proportion")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Synth2DConfig:
    grid: int = 32
    n_per_class: int = 25

    def as_dict(self) -> dict:
        return asdict(self)


def gen_dataset_1d(config: Synth1DConfig = Synth1DConfig(), seed: int = 0):
    """30 noisy humps then 30 noisy chirps; labels 0 = hump, 1/2 = chirp with gamma1/gamma2.

    Each chirp picks ``gamma1`` with probability ``r1``. Every signal draws
    from its own child stream of ``seed``.
    """
    c = config
    n = c.n_hump + c.n_chirp
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n + 1)]
    choose = streams[-1]
    signals, labels = [], []
    for i in range(c.n_hump):
        signals.append(gen_hump(c.l, c.r, c.b, c.grid, c.noise, streams[i]))
        labels.append(HUMP)
    for i in range(c.n_chirp):
        first = choose.random() < c.r1
        gamma = c.gamma1 if first else c.gamma2
        signals.append(gen_chirp(c.l, c.r, c.b, gamma, c.grid, c.noise, streams[c.n_hump + i]))
        labels.append(CHIRP_1 if first else CHIRP_2)
    return signals, np.array(labels)


def gen_dataset_2d(config: Synth2DConfig = Synth2DConfig(), seed: int = 0):
    """``n_per_class`` fields from M1 (label 0) then from M2 (label 1)."""
    n = 2 * config.n_per_class
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    signals = [gen_2d(M1 if i < config.n_per_class else M2, config.grid, streams[i]) for i in range(n)]
    labels = np.array([0] * config.n_per_class + [1] * config.n_per_class)
    return signals, labels


def noise_free_integral(intervals_with_heights: Sequence[Tuple[float, float, float]]) -> float:
    """Exact integral of ``sum height * 1[lo, hi]``."""
    return math.fsum(h * (hi - lo) for lo, hi, h in intervals_with_heights)
