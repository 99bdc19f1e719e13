"""Flow minimisation of the TL^2 energy between two densities on the unit square.

Starting from a Knothe-Rosenblatt map ``T0`` with ``T0_# mu = nu``, the map is
rearranged by divergence-free velocity fields ``grad_perp(alpha) / mu``, where
``alpha`` solves a Dirichlet Poisson problem driven by the descent field ``Q``.
All fields live on the nodes of a uniform grid, indexed ``[i, j]`` with ``i``
along ``x`` and ``j`` along ``y``.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg, splu

from ltlp.errors import DegenerateDensity, InvalidInput, ShapeMismatch, SolverFailure, StepTooLarge
from ltlp.measures import TransportMap

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-8
MASS_TOL = 1e-6
RESIDUAL_TOL = 1e-8
DIRECT_LIMIT = 256 * 256
MAX_HALVINGS = 10
CFL = 0.5
# folds are only reported where mu is at least this fraction of its maximum
FOLD_MASS = 1e-4


def trapezoid_weights(nx: int, ny: int, hx: float, hy: float) -> np.ndarray:
    cx = np.full(nx, hx)
    cx[[0, -1]] *= 0.5
    cy = np.full(ny, hy)
    cy[[0, -1]] *= 0.5
    return np.outer(cx, cy)


def _prepare_density(rho, name: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or min(rho.shape) < 3:
        raise ShapeMismatch(f"{name} must be a 2D grid with at least 3 nodes per side")
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise DegenerateDensity(f"{name} must be finite and nonnegative")
    top = rho.max()
    if top <= 0:
        raise DegenerateDensity(f"{name} carries no mass")
    return np.maximum(rho, DENSITY_FLOOR * top)


def _as_channels(f, shape, name) -> np.ndarray:
    if f is None:
        return np.zeros(shape + (0,))
    f = np.asarray(f, dtype=float)
    if f.shape == shape:
        f = f[..., None]
    if f.ndim != 3 or f.shape[:2] != shape:
        raise ShapeMismatch(f"{name} must have shape {shape} or {shape} + (m,)")
    if not np.all(np.isfinite(f)):
        raise InvalidInput(f"{name} must be finite")
    return f


@dataclass(frozen=True)
class GridField:
    """Densities, channel grids and the current map on an ``nx x ny`` node grid."""

    mu: np.ndarray
    nu: np.ndarray
    f: np.ndarray
    g: np.ndarray
    spacing: Tuple[float, float]

    def __post_init__(self):
        if self.mu.shape != self.nu.shape:
            raise ShapeMismatch("mu and nu grids differ in shape")
        if self.f.shape[:2] != self.shape or self.g.shape != self.f.shape:
            raise ShapeMismatch("channel grids must match the density grid and each other")
        w = self.weights
        for name, rho in (("mu", self.mu), ("nu", self.nu)):
            if np.any(rho <= 0):
                raise DegenerateDensity(f"{name} must be strictly positive")
            if abs(float(np.sum(rho * w)) - 1.0) > MASS_TOL:
                raise DegenerateDensity(f"{name} does not integrate to 1")

    @classmethod
    def from_densities(cls, mu, nu, f=None, g=None, extent=(1.0, 1.0)) -> "GridField":
        """Floor both densities at ``1e-8`` of their maximum and normalise to unit mass."""
        mu = _prepare_density(mu, "mu")
        nu = _prepare_density(nu, "nu")
        if mu.shape != nu.shape:
            raise ShapeMismatch("mu and nu grids differ in shape")
        nx, ny = mu.shape
        spacing = (extent[0] / (nx - 1), extent[1] / (ny - 1))
        w = trapezoid_weights(nx, ny, *spacing)
        f = _as_channels(f, mu.shape, "f")
        g = _as_channels(g, mu.shape, "g")
        if f.shape != g.shape:
            raise ShapeMismatch("f and g carry different channel counts")
        return cls(mu / np.sum(mu * w), nu / np.sum(nu * w), f, g, spacing)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mu.shape

    @property
    def channels(self) -> int:
        return self.f.shape[2]

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(*self.shape, *self.spacing)

    @property
    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        return np.arange(nx) * self.spacing[0], np.arange(ny) * self.spacing[1]

    def nodes(self) -> np.ndarray:
        """``(nx, ny, 2)`` node coordinates."""
        ax, ay = self.axes
        return np.stack(np.meshgrid(ax, ay, indexing="ij"), axis=-1)

    def identity(self) -> np.ndarray:
        return self.nodes()

    def clip(self, T: np.ndarray) -> np.ndarray:
        ax, ay = self.axes
        out = np.empty_like(T)
        out[..., 0] = np.clip(T[..., 0], 0.0, ax[-1])
        out[..., 1] = np.clip(T[..., 1], 0.0, ay[-1])
        return out


def _cumulative(rho: np.ndarray, h: float) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(0.5 * h * (rho[1:] + rho[:-1]))])
    return c


def _monotone_match(src: np.ndarray, dst: np.ndarray, axis: np.ndarray, h: float) -> np.ndarray:
    """Image of every node under the increasing map pushing ``src`` onto ``dst``."""
    cs = _cumulative(src, h)
    cd = _cumulative(dst, h)
    if cs[-1] <= 0 or cd[-1] <= 0:
        raise DegenerateDensity("a marginal slice carries no mass")
    return np.interp(cs / cs[-1], cd / cd[-1], axis)


def knothe_initial_map(grid: GridField) -> np.ndarray:
    """Knothe-Rosenblatt map: match x-marginals, then y-conditionals column by column."""
    ax, ay = grid.axes
    hx, hy = grid.spacing
    mu_x = np.array([_cumulative(col, hy)[-1] for col in grid.mu])
    nu_x = np.array([_cumulative(col, hy)[-1] for col in grid.nu])
    T1 = _monotone_match(mu_x, nu_x, ax, hx)
    T = np.empty(grid.shape + (2,))
    for i, x_img in enumerate(T1):
        # conditional of nu at a generally off-grid abscissa
        k = min(int(np.searchsorted(ax, x_img, side="right")) - 1, ax.size - 2)
        k = max(k, 0)
        lam = (x_img - ax[k]) / hx
        column = (1.0 - lam) * grid.nu[k] + lam * grid.nu[k + 1]
        T[i, :, 0] = x_img
        T[i, :, 1] = _monotone_match(grid.mu[i], column, ay, hy)
    return grid.clip(T)


def _compose(grid: GridField, values: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of node ``values`` at the images ``T``."""
    if values.shape[-1] == 0:
        return np.zeros(T.shape[:2] + (0,))
    interp = RegularGridInterpolator(grid.axes, values, method="linear", bounds_error=False,
                                     fill_value=None)
    return interp(grid.clip(T).reshape(-1, 2)).reshape(T.shape[:2] + (values.shape[-1],))


def _grad(a: np.ndarray, spacing) -> Tuple[np.ndarray, np.ndarray]:
    gx, gy = np.gradient(a, spacing[0], spacing[1])
    return gx, gy


def compute_Q(grid: GridField, T: np.ndarray) -> np.ndarray:
    """``Q = 2 T + 2 sum_i g_i(T) grad f_i`` at every node."""
    Q = 2.0 * np.array(T, dtype=float)
    gT = _compose(grid, grid.g, T)
    for i in range(grid.channels):
        fx, fy = _grad(grid.f[..., i], grid.spacing)
        Q[..., 0] += 2.0 * gT[..., i] * fx
        Q[..., 1] += 2.0 * gT[..., i] * fy
    return Q


def divergence(vx: np.ndarray, vy: np.ndarray, spacing) -> np.ndarray:
    return np.gradient(vx, spacing[0], axis=0) + np.gradient(vy, spacing[1], axis=1)


def grad_perp(alpha: np.ndarray, spacing) -> Tuple[np.ndarray, np.ndarray]:
    """``(-d alpha / dy, d alpha / dx)``."""
    ax, ay = _grad(alpha, spacing)
    return -ay, ax


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2


@functools.lru_cache(maxsize=8)
def _interior_laplacian(nx: int, ny: int, hx: float, hy: float):
    L = sp.kron(_laplacian_1d(nx - 2, hx), sp.identity(ny - 2)) + sp.kron(
        sp.identity(nx - 2), _laplacian_1d(ny - 2, hy)
    )
    L = sp.csc_matrix(L)
    lu = splu(L) if (nx - 2) * (ny - 2) <= DIRECT_LIMIT else None
    return L, lu


def poisson_dirichlet(rhs, spacing=None) -> np.ndarray:
    """Solve ``Laplace(alpha) = rhs`` with ``alpha = 0`` on the boundary.

    Uses the 5-point Laplacian on interior nodes; boundary entries of ``rhs``
    are ignored. Grids up to 256^2 interior nodes use a sparse LU
    factorisation, larger ones conjugate gradients.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim != 2 or min(rhs.shape) < 3:
        raise ShapeMismatch("rhs must be a 2D grid with at least 3 nodes per side")
    nx, ny = rhs.shape
    if spacing is None:
        spacing = (1.0 / (nx - 1), 1.0 / (ny - 1))
    hx, hy = float(spacing[0]), float(spacing[1])
    L, lu = _interior_laplacian(nx, ny, hx, hy)
    b = rhs[1:-1, 1:-1].ravel()
    alpha = np.zeros_like(rhs)
    scale = np.abs(b).max() if b.size else 0.0
    if scale == 0.0:
        return alpha
    if lu is not None:
        u = lu.solve(b)
    else:
        u, info = cg(-L, -b, rtol=RESIDUAL_TOL * 1e-2, atol=0.0, maxiter=20 * b.size)
        if info != 0:
            raise SolverFailure(f"conjugate gradients stopped with code {info}")
    residual = np.abs(L @ u - b).max()
    if residual >= RESIDUAL_TOL * scale:
        raise SolverFailure(f"Poisson residual {residual:.3g} exceeds {RESIDUAL_TOL:g} * |rhs|")
    alpha[1:-1, 1:-1] = u.reshape(nx - 2, ny - 2)
    return alpha


def energy(grid: GridField, T: np.ndarray) -> float:
    """``int (|T(x) - x|^2 + |g(T(x)) - f(x)|^2) mu(x) dx`` by the trapezoid rule."""
    move = np.sum((T - grid.nodes()) ** 2, axis=-1)
    if grid.channels:
        move = move + np.sum((_compose(grid, grid.g, T) - grid.f) ** 2, axis=-1)
    return float(np.sum(move * grid.mu * grid.weights))


def pushforward_density(grid: GridField, T: np.ndarray, subsamples: int = 4) -> np.ndarray:
    """Density of ``T_# mu`` on the nodes.

    Every cell is split into ``subsamples**2`` sub-cells whose centres carry the
    bilinearly interpolated ``mu`` mass to the bilinearly interpolated image of
    ``T``; the masses are deposited cloud-in-cell onto the nodes.
    """
    nx, ny = grid.shape
    hx, hy = grid.spacing
    k = int(subsamples)
    offs = (np.arange(k) + 0.5) / k
    ci, cj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    shape = ci.shape + (k, k)
    a = np.broadcast_to(ci[..., None, None] + offs[:, None], shape).ravel() * hx
    b = np.broadcast_to(cj[..., None, None] + offs[None, :], shape).ravel() * hy
    pts = np.column_stack([a, b])
    interp = RegularGridInterpolator(grid.axes, np.dstack([T, grid.mu[..., None]]), method="linear")
    vals = interp(pts)
    mass = vals[:, 2] * hx * hy / k**2
    u = np.clip(vals[:, 0], 0.0, (nx - 1) * hx) / hx
    v = np.clip(vals[:, 1], 0.0, (ny - 1) * hy) / hy
    i = np.clip(np.floor(u).astype(int), 0, nx - 2)
    j = np.clip(np.floor(v).astype(int), 0, ny - 2)
    fu = u - i
    fv = v - j
    out = np.zeros((nx, ny))
    np.add.at(out, (i, j), mass * (1 - fu) * (1 - fv))
    np.add.at(out, (i + 1, j), mass * fu * (1 - fv))
    np.add.at(out, (i, j + 1), mass * (1 - fu) * fv)
    np.add.at(out, (i + 1, j + 1), mass * fu * fv)
    return out / grid.weights


def pushforward_error(grid: GridField, T: np.ndarray) -> float:
    """L^1 distance between the deposited ``T_# mu`` and ``nu``."""
    return float(np.sum(np.abs(pushforward_density(grid, T) - grid.nu) * grid.weights))


def jacobian_determinant(grid: GridField, T: np.ndarray) -> np.ndarray:
    t1x, t1y = _grad(T[..., 0], grid.spacing)
    t2x, t2y = _grad(T[..., 1], grid.spacing)
    return t1x * t2y - t1y * t2x


def descent_velocity(grid: GridField, T: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``grad_perp(alpha)`` for the steepest-descent ``alpha`` at map ``T``."""
    Q = compute_Q(grid, T)
    rhs = -divergence(-Q[..., 1], Q[..., 0], grid.spacing)
    alpha = poisson_dirichlet(rhs, grid.spacing)
    return grad_perp(alpha, grid.spacing)


def _upwind(a: np.ndarray, v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """One-sided difference of ``a`` taken against the direction of ``v``."""
    d = np.diff(a, axis=axis) / h
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 0)
    back = np.pad(d, pad, mode="edge")
    pad[axis] = (0, 1)
    fwd = np.pad(d, pad, mode="edge")
    return np.where(v > 0, back, fwd)


def _step(grid: GridField, T: np.ndarray, vx: np.ndarray, vy: np.ndarray, tau: float) -> np.ndarray:
    # T_t + (v . grad) T = 0 with v = grad_perp(alpha) / mu, advanced upwind.
    # Where mu sits near its floor, 1/mu makes v huge; cap the local Courant
    # number so those nodes move at most CFL cells per step.
    ux, uy = vx / grid.mu, vy / grid.mu
    courant = tau * np.maximum(np.abs(ux) / grid.spacing[0], np.abs(uy) / grid.spacing[1])
    limit = np.where(courant > CFL, CFL / np.maximum(courant, 1e-300), 1.0)
    ux, uy = ux * limit, uy * limit
    out = np.empty_like(T)
    for k in range(2):
        dx = _upwind(T[..., k], ux, grid.spacing[0], 0)
        dy = _upwind(T[..., k], uy, grid.spacing[1], 1)
        out[..., k] = T[..., k] - tau * (ux * dx + uy * dy)
    return grid.clip(out)


@dataclass
class FlowResult:
    map: np.ndarray
    energies: List[float]
    tau: float
    steps: int
    pushforward_error: float
    folded_steps: List[int] = field(default_factory=list)

    def transport_map(self, grid: GridField) -> TransportMap:
        """Node images flattened in row-major ``[i, j]`` order, with ``g(T)`` appended."""
        images = self.map.reshape(-1, 2)
        if grid.channels:
            images = np.hstack([images, _compose(grid, grid.g, self.map).reshape(-1, grid.channels)])
        return TransportMap(images)


def flow_minimize(
    grid: GridField,
    tau: float = 1e-3,
    max_steps: int = 200,
    energy_tol: float = 1e-9,
    initial_map: Optional[np.ndarray] = None,
    slack: float = 1e-10,
) -> FlowResult:
    """Descend the TL^2 energy from the Knothe-Rosenblatt map.

    A step that raises the energy by more than ``slack`` is retried with half
    the step size; :class:`StepTooLarge` is raised after ten consecutive
    halvings. Iteration stops once an accepted step lowers the energy by less
    than ``energy_tol``. Steps after which the finite-difference Jacobian of
    the map is nonpositive at some node carrying non-negligible mass are
    listed in ``folded_steps``.
    """
    if not tau > 0:
        raise InvalidInput("tau must be positive")
    T = knothe_initial_map(grid) if initial_map is None else grid.clip(np.asarray(initial_map, float))
    if T.shape != grid.shape + (2,):
        raise ShapeMismatch("initial map must have shape (nx, ny, 2)")
    E = energy(grid, T)
    energies = [E]
    massive = grid.mu >= FOLD_MASS * grid.mu.max()
    folded = []
    steps = 0
    if E <= energy_tol:
        return FlowResult(T, energies, tau, 0, pushforward_error(grid, T), folded)
    while steps < max_steps:
        vx, vy = descent_velocity(grid, T)
        if max(np.abs(vx).max(), np.abs(vy).max()) == 0.0:
            break
        for _ in range(MAX_HALVINGS + 1):
            T_new = _step(grid, T, vx, vy, tau)
            E_new = energy(grid, T_new)
            if E_new <= E + slack:
                break
            tau *= 0.5
        else:
            raise StepTooLarge(
                f"energy kept rising after {MAX_HALVINGS} step halvings; try a smaller tau"
            )
        steps += 1
        decrease = E - E_new
        T, E = T_new, E_new
        energies.append(E)
        if np.any(jacobian_determinant(grid, T)[massive] <= 0):
            folded.append(steps)
        if decrease < energy_tol:
            break
    if folded:
        logger.warning("map Jacobian became nonpositive at %d of %d steps", len(folded), steps)
    return FlowResult(T, energies, tau, steps, pushforward_error(grid, T), folded)
