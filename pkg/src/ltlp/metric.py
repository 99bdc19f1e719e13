"""Wasserstein and TLp distances and maps.

The TLp distance between ``(mu, f)`` and ``(nu, g)`` is computed as the
Wasserstein distance between the lifted measures on the graphs of ``f`` and
``g``; distances are returned as p-th roots, plan costs stay p-th powers.
"""
from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from ltlp.errors import ChannelMismatch, DimMismatch, InvalidInput
from ltlp.measures import (
    DiscreteMeasure,
    DistanceMatrix,
    TLpSignal,
    TransportMap,
    TransportPlan,
    lift,
    symmetrize,
)
from ltlp.parallel import parallel_map
from ltlp.solvers import SinkhornConfig, barycentric_map, cost_matrix, sinkhorn, solve_exact

logger = logging.getLogger(__name__)

EXACT_THRESHOLD = 600
SOLVERS = ("auto", "exact", "sinkhorn")


def resolve_solver(solver: str, support_size: int, threshold: int = EXACT_THRESHOLD) -> str:
    if solver not in SOLVERS:
        raise InvalidInput(f"solver must be one of {SOLVERS}, got {solver!r}")
    if solver == "auto":
        return "exact" if support_size <= threshold else "sinkhorn"
    return solver


def optimal_plan(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float = 2.0,
    solver: str = "auto",
    sinkhorn_config: Optional[SinkhornConfig] = None,
    threshold: int = EXACT_THRESHOLD,
) -> TransportPlan:
    if mu.dim != nu.dim:
        raise DimMismatch(f"measures live in R^{mu.dim} and R^{nu.dim}")
    C = cost_matrix(mu.points, nu.points, p)
    if resolve_solver(solver, max(mu.n, nu.n), threshold) == "exact":
        return solve_exact(mu, nu, C)
    return sinkhorn(mu, nu, C, sinkhorn_config)


def wasserstein_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float = 2.0,
    solver: str = "auto",
    sinkhorn_config: Optional[SinkhornConfig] = None,
) -> float:
    plan = optimal_plan(mu, nu, p, solver, sinkhorn_config)
    return float(max(plan.cost, 0.0) ** (1.0 / p))


def _lifted_pair(a: TLpSignal, b: TLpSignal, channel_scale: float):
    if a.channels != b.channels:
        raise ChannelMismatch(f"{a.channels} vs {b.channels} channels")
    if a.measure.dim != b.measure.dim:
        raise DimMismatch("signals live on domains of different dimension")
    return lift(a, channel_scale), lift(b, channel_scale)


def tlp_plan(
    a: TLpSignal,
    b: TLpSignal,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
) -> TransportPlan:
    la, lb = _lifted_pair(a, b, channel_scale)
    return optimal_plan(la.base, lb.base, p, solver, sinkhorn_config)


def tlp_distance(
    a: TLpSignal,
    b: TLpSignal,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
) -> float:
    plan = tlp_plan(a, b, p, solver, channel_scale, sinkhorn_config)
    return float(max(plan.cost, 0.0) ** (1.0 / p))


def tlp_map(
    a: TLpSignal,
    b: TLpSignal,
    p: float = 2.0,
    solver: str = "auto",
    channel_scale: float = 1.0,
    sinkhorn_config: Optional[SinkhornConfig] = None,
) -> TransportMap:
    """Map on ``Omega x R^m`` sending the lifted ``a`` onto the lifted ``b``.

    Images carry channel values in the signal's own units, i.e.
    ``(T(x_i), g(T(x_i)))``; ``channel_scale`` only changes which matching is
    optimal. Sinkhorn plans are collapsed by barycentric projection.
    """
    plan = tlp_plan(a, b, p, solver, channel_scale, sinkhorn_config)
    return barycentric_map(plan, np.hstack([b.points, b.values]))


def lp_distance(a: TLpSignal, b: TLpSignal, p: float = 2.0) -> float:
    """``||f - g||_{L^p(mu)}`` for two signals sharing the same base measure."""
    if a.measure.n != b.measure.n or not np.array_equal(a.points, b.points):
        raise DimMismatch("L^p distance needs signals on the same support")
    if a.channels != b.channels:
        raise ChannelMismatch(f"{a.channels} vs {b.channels} channels")
    diff = np.sum(np.abs(a.values - b.values) ** p, axis=1)
    return float(np.dot(a.weights, diff) ** (1.0 / p))


def pairwise_distances(
    items: Sequence,
    distance: Callable[[object, object], float],
    method: str,
    threads: Optional[int] = 1,
    progress_every: int = 0,
) -> DistanceMatrix:
    """Full ``N x N`` matrix from ``N(N-1)/2`` evaluations of ``distance``."""
    n = len(items)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    done = [0]

    def one(pair):
        value = distance(items[pair[0]], items[pair[1]])
        done[0] += 1
        if progress_every and done[0] % progress_every == 0:
            logger.info("%s: %d/%d pairs", method, done[0], len(pairs))
        return value

    values = parallel_map(one, pairs, threads)
    D = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        D[i, j] = D[j, i] = v
    return DistanceMatrix(symmetrize(D), method, solver_calls=len(pairs) if method != "LP" else 0)
