"""Discrete Kantorovich solvers.

Exact plans come from one of three routes:

* ``assignment``: uniform measures of equal size, where the optimal plan is a
  permutation (Hungarian-type solver from scipy).
* ``monotone``: one-dimensional supports with a ``|x - y|^p`` cost, ``p >= 1``,
  where the sorted north-west-corner coupling is optimal.
* ``network_simplex``: the general transportation LP (POT's network simplex).

``sinkhorn`` solves the entropy-regularised problem, optionally in the log
domain with geometric epsilon annealing.
"""
from __future__ import annotations

import contextlib
import logging
import os
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ltlp.errors import (
    DegenerateRow,
    DimMismatch,
    InvalidInput,
    MassMismatch,
    NumericalOverflow,
    ShapeMismatch,
    UnconvergedWarning,
)
from ltlp.measures import (
    MARGINAL_TOL,
    CostMatrix,
    DiscreteMeasure,
    TransportMap,
    TransportPlan,
    as_points,
)

logger = logging.getLogger(__name__)

EXACT_METHODS = ("auto", "assignment", "monotone", "network_simplex")


class _CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.total = 0

    def bump(self):
        with self._lock:
            self.total += 1


_COUNTER = _CallCounter()


class SolveCount:
    """Number of solver invocations observed inside a :func:`count_solves` block."""

    def __init__(self):
        self.start = _COUNTER.total
        self.stop = None

    @property
    def calls(self) -> int:
        end = _COUNTER.total if self.stop is None else self.stop
        return end - self.start


@contextlib.contextmanager
def count_solves():
    counter = SolveCount()
    try:
        yield counter
    finally:
        counter.stop = _COUNTER.total


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.01
    max_iterations: int = 10_000
    tolerance: float = 1e-6
    log_domain: bool = True
    anneal_stages: int = 5
    relative_epsilon: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInput("epsilon must be positive")
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise InvalidInput("tolerance must be positive")
        if self.anneal_stages < 1:
            raise InvalidInput("anneal_stages must be >= 1")

    def resolve_epsilon(self, cost: np.ndarray) -> float:
        """Absolute epsilon; with ``relative_epsilon`` it is a fraction of ``max(C)``."""
        if self.relative_epsilon:
            cmax = float(cost.max())
            return self.epsilon * cmax if cmax > 0 else self.epsilon
        return self.epsilon


def cost_matrix(source, target, p: float = 2.0) -> CostMatrix:
    """``C[i, j] = sum_k |x_ik - y_jk|**p`` (no root taken)."""
    x = as_points(source)
    y = as_points(target)
    if x.shape[1] != y.shape[1]:
        raise DimMismatch(f"source dim {x.shape[1]} != target dim {y.shape[1]}")
    if p < 1:
        raise InvalidInput("p must be >= 1")
    diff = np.abs(x[:, None, :] - y[None, :, :])
    if p == 2:
        c = np.einsum("ijk,ijk->ij", diff, diff)
    elif p == 1:
        c = diff.sum(axis=2)
    else:
        c = (diff**p).sum(axis=2)
    return CostMatrix(c, float(p), standard=True)


def _check_problem(mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix):
    if C.shape != (mu.n, nu.n):
        raise ShapeMismatch(f"cost shape {C.shape} does not match supports ({mu.n}, {nu.n})")
    if abs(mu.weights.sum() - nu.weights.sum()) > MARGINAL_TOL:
        raise MassMismatch("source and target masses differ")


def _assignment_plan(mu, nu, C):
    rows, cols = linear_sum_assignment(C.entries)
    n = mu.n
    pi = np.zeros((n, n))
    pi[rows, cols] = 1.0 / n
    cost = float(C.entries[rows, cols].sum() / n)
    return pi, cost


def _monotone_plan(mu, nu, C):
    x = mu.points[:, 0]
    y = nu.points[:, 0]
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    a = mu.weights[ix].copy()
    b = nu.weights[iy].copy()
    pi = np.zeros((mu.n, nu.n))
    i = j = 0
    while i < a.size and j < b.size:
        m = min(a[i], b[j])
        if m > 0:
            pi[ix[i], iy[j]] += m
        a[i] -= m
        b[j] -= m
        # advance whichever side is exhausted; ties advance both
        if a[i] <= 1e-15:
            i += 1
        if j < b.size and b[j] <= 1e-15:
            j += 1
    return pi, float(np.sum(pi * C.entries))


def _import_pot():
    for backend in ("TENSORFLOW", "TORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
    import ot

    return ot


def _network_simplex_plan(mu, nu, C):
    ot = _import_pot()
    a = np.ascontiguousarray(mu.weights, dtype=np.float64)
    b = np.ascontiguousarray(nu.weights, dtype=np.float64)
    b = b * (a.sum() / b.sum())
    pi, log = ot.emd(a, b, np.ascontiguousarray(C.entries), numItermax=10_000_000, log=True)
    if log.get("warning"):
        logger.warning("network simplex: %s", log["warning"])
    pi = np.maximum(pi, 0.0)
    return pi, float(np.sum(pi * C.entries))


def solve_exact(
    mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, method: str = "auto"
) -> TransportPlan:
    """Optimal plan of the discrete Kantorovich problem.

    ``method="auto"`` uses the assignment route when both measures are uniform
    with equal support size, the monotone route for standard 1D costs, and the
    network simplex otherwise.
    """
    _check_problem(mu, nu, C)
    if method not in EXACT_METHODS:
        raise InvalidInput(f"unknown exact method {method!r}")
    if method == "auto":
        if mu.n == nu.n and mu.is_uniform and nu.is_uniform:
            method = "assignment"
        elif C.standard and mu.dim == 1 and nu.dim == 1:
            method = "monotone"
        else:
            method = "network_simplex"
    _COUNTER.bump()
    if method == "assignment":
        if not (mu.n == nu.n and mu.is_uniform and nu.is_uniform):
            raise InvalidInput("assignment route needs uniform measures of equal size")
        pi, cost = _assignment_plan(mu, nu, C)
    elif method == "monotone":
        if mu.dim != 1 or nu.dim != 1:
            raise DimMismatch("monotone route is one-dimensional")
        pi, cost = _monotone_plan(mu, nu, C)
    else:
        pi, cost = _network_simplex_plan(mu, nu, C)
    return TransportPlan(pi, mu.weights, nu.weights, cost, method=method)


def _safe_log(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _lse(M, axis):
    """Max-shifted log-sum-exp; rows that are entirely ``-inf`` stay ``-inf``."""
    top = M.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(M - top).sum(axis=axis, keepdims=True)) + top
    return out.squeeze(axis)


def _sinkhorn_log(a, b, C, eps_target, cfg: SinkhornConfig):
    log_a, log_b = _safe_log(a), _safe_log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    eps0 = 0.1 * float(C.max())
    if cfg.anneal_stages > 1 and eps0 > eps_target:
        schedule = np.geomspace(eps0, eps_target, cfg.anneal_stages)
    else:
        schedule = np.array([eps_target])
    # intermediate stages only warm-start the potentials, so cap their share
    stage_cap = max(50, cfg.max_iterations // (4 * len(schedule)))
    iterations = 0
    err = np.inf
    eps = schedule[0]
    for k, stage_eps in enumerate(schedule):
        budget = cfg.max_iterations - iterations
        if k < len(schedule) - 1:
            budget = min(budget, stage_cap)
        if budget <= 0:
            break
        eps = stage_eps
        rows = _lse((g[None, :] - C) / eps, axis=1)
        for _ in range(budget):
            f = eps * (log_a - rows)
            f[~np.isfinite(log_a)] = -np.inf
            g = eps * (log_b - _lse((f[:, None] - C) / eps, axis=0))
            g[~np.isfinite(log_b)] = -np.inf
            iterations += 1
            # the same row sums feed the marginal check and the next f-update
            rows = _lse((g[None, :] - C) / eps, axis=1)
            row_mass = np.exp(f / eps + rows)
            row_mass[~np.isfinite(log_a)] = 0.0
            err = float(np.abs(row_mass - a).max())
            if err < cfg.tolerance:
                break
    with np.errstate(invalid="ignore"):
        log_pi = (f[:, None] + g[None, :] - C) / eps
    pi = np.exp(log_pi)
    pi[~np.isfinite(pi)] = 0.0
    return pi, iterations, err


def _sinkhorn_scaling(a, b, C, eps, cfg: SinkhornConfig):
    K = np.exp(-C / eps)
    v = np.ones(b.size)
    u = np.ones(a.size)
    err = np.inf
    iterations = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for iterations in range(1, cfg.max_iterations + 1):
            u = a / (K @ v)
            v = b / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise NumericalOverflow(
                    f"scaling vectors left the float range at epsilon={eps:g}; "
                    "use the log-domain iteration"
                )
            err = float(np.abs(u * (K @ v) - a).max())
            if err < cfg.tolerance:
                break
    pi = u[:, None] * K * v[None, :]
    return pi, iterations, err


def sinkhorn(
    mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, cfg: SinkhornConfig | None = None
) -> TransportPlan:
    """Entropy-regularised plan ``diag(u) K diag(v)`` with ``K = exp(-C / eps)``.

    The returned ``cost`` is the unregularised ``sum(C * pi)``. A run that hits
    ``max_iterations`` is returned with ``converged=False`` and an
    :class:`UnconvergedWarning`.
    """
    cfg = cfg or SinkhornConfig()
    _check_problem(mu, nu, C)
    _COUNTER.bump()
    a, b, c = mu.weights, nu.weights, C.entries
    eps = cfg.resolve_epsilon(c)
    if cfg.log_domain:
        pi, iterations, err = _sinkhorn_log(a, b, c, eps, cfg)
    else:
        pi, iterations, err = _sinkhorn_scaling(a, b, c, eps, cfg)
    converged = err < cfg.tolerance
    if not converged:
        warnings.warn(
            f"Sinkhorn stopped after {iterations} iterations with marginal error {err:.3g}",
            UnconvergedWarning,
            stacklevel=2,
        )
    return TransportPlan(
        pi, a, b, float(np.sum(pi * c)), converged=converged, iterations=iterations, method="sinkhorn"
    )


def wasserstein_1d_shared(points, A, B, p: float = 2.0) -> np.ndarray:
    """Row-wise ``W_p^p`` between weight rows ``A[k]`` and ``B[k]`` on one sorted 1D support.

    Uses the quantile closed form: the breakpoints of both CDFs are merged and
    each resulting segment pays ``|x_a - x_b|^p`` times its length.
    """
    x = np.asarray(points, dtype=float).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape or A.shape[1] != x.size:
        raise ShapeMismatch("weight rows must match each other and the support")
    if np.any(np.diff(x) < 0):
        raise InvalidInput("support must be sorted")
    rows, m = A.shape
    CA = np.cumsum(A, axis=1)
    CB = np.cumsum(B, axis=1)
    CA[:, -1] = 1.0
    CB[:, -1] = 1.0
    u = np.concatenate([CA, CB], axis=1)
    order = np.argsort(u, axis=1, kind="stable")
    du = np.diff(np.take_along_axis(u, order, axis=1), axis=1, prepend=0.0)
    from_a = order < m
    # quantile index on each segment = breakpoints of that CDF already passed
    ka = np.minimum(np.cumsum(from_a, axis=1) - from_a, m - 1)
    kb = np.minimum(np.cumsum(~from_a, axis=1) - ~from_a, m - 1)
    return np.sum(du * np.abs(x[ka] - x[kb]) ** p, axis=1)


def barycentric_map(plan: TransportPlan, target_points) -> TransportMap:
    """Collapse each row of ``plan`` to the plan-weighted mean of its targets."""
    y = as_points(target_points)
    pi = plan.coupling
    if y.shape[0] != pi.shape[1]:
        raise ShapeMismatch("target_points length must equal number of plan columns")
    mass = pi.sum(axis=1)
    if np.any(mass <= 0):
        raise DegenerateRow(f"rows {np.flatnonzero(mass <= 0).tolist()} carry no mass")
    nonzero = pi > 0
    single = nonzero.sum(axis=1) == 1
    if np.all(single):
        assignment = np.argmax(nonzero, axis=1)
        return TransportMap(y[assignment], assignment)
    return TransportMap((pi @ y) / mass[:, None])
