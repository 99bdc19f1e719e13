"""Sliding-window nearest-neighbour forecasting of multivariate price series.

Day ``d`` indexes the price rows. The return of day ``d >= 1`` is
``log(P_d / P_{d-1})``; the window ``S_d`` (``n x m``) holds the returns of days
``d-m+1 .. d`` and exists for ``d >= m``; the ``h``-day future return of day
``d`` is ``log(P_{d+h} / P_d)``. A forecast for day ``d`` only looks at
neighbour windows ending on a day ``<= d - h``, whose future returns are known
by day ``d``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ltlp.embedding import build_reference, embed_all, pairwise_linear_distances
from ltlp.errors import (
    DegenerateWindow,
    InsufficientHistoryWarning,
    InvalidInput,
    InvalidPrice,
    ShapeMismatch,
    UndefinedStatistic,
)
from ltlp.measures import DistanceMatrix, TLpSignal, make_uniform, symmetrize
from ltlp.solvers import SinkhornConfig, wasserstein_1d_shared
from ltlp.synth import normalize_for_wp

METHODS = ("COR", "WP", "LWP", "LTLP")
RETURN_KINDS = ("RR", "MR")
MARKET = "SPY"
TRADING_DAYS = 252
QUINTILES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class PriceSeries:
    dates: Tuple[str, ...]
    tickers: Tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 2 or p.shape != (len(self.dates), len(self.tickers)):
            raise ShapeMismatch("prices must be a (days, tickers) matrix")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise InvalidPrice("prices must be finite and strictly positive")
        if len(set(self.dates)) != len(self.dates) or list(self.dates) != sorted(self.dates):
            raise InvalidInput("dates must be strictly increasing")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))

    def split_market(self, market: str = MARKET):
        """``(instrument prices, market prices or None)``."""
        if market not in self.tickers:
            return self.prices, None
        k = self.tickers.index(market)
        keep = [i for i in range(len(self.tickers)) if i != k]
        return self.prices[:, keep], self.prices[:, k]

    def instruments(self, market: str = MARKET) -> Tuple[str, ...]:
        return tuple(t for t in self.tickers if t != market)

    def head(self, days: int) -> "PriceSeries":
        return PriceSeries(self.dates[:days], self.tickers, self.prices[:days])

    def with_prices(self, prices) -> "PriceSeries":
        return PriceSeries(self.dates, self.tickers, prices)


def log_returns(prices) -> np.ndarray:
    """``R[d - 1] = log(P_d / P_{d-1})`` along the first axis."""
    p = np.asarray(prices, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InvalidPrice("prices must be finite and strictly positive")
    return np.diff(np.log(p), axis=0)


def market_excess(returns, market_returns, beta: float = 1.0) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    s = np.asarray(market_returns, dtype=float)
    if s.shape[0] != r.shape[0]:
        raise ShapeMismatch("returns and market returns are not aligned")
    if r.ndim == 2 and s.ndim == 1:
        s = s[:, None]
    return r - beta * s


def future_returns(prices, h: int) -> np.ndarray:
    """``F[d] = log(P_{d+h} / P_d)``; rows without a day ``d + h`` are NaN."""
    if h < 1:
        raise InvalidInput("horizon must be >= 1")
    logp = np.log(np.asarray(prices, dtype=float))
    out = np.full(logp.shape, np.nan)
    if h < logp.shape[0]:
        out[:-h] = logp[h:] - logp[:-h]
    return out


def sliding_windows(returns, m: int = 20) -> np.ndarray:
    """``W[k]`` is the ``n x m`` window ending at day ``k + m``."""
    r = np.asarray(returns, dtype=float)
    if m < 2:
        raise InvalidInput("window length must be >= 2")
    if r.shape[0] < m:
        raise InvalidInput(f"need at least {m} returns for one window")
    view = np.lib.stride_tricks.sliding_window_view(r, m, axis=0)
    return np.ascontiguousarray(view)


def standardize_rows(S: np.ndarray) -> np.ndarray:
    """Zero mean, unit (population) variance along the last axis."""
    S = np.asarray(S, dtype=float)
    sd = S.std(axis=-1, keepdims=True)
    if np.any(sd <= 1e-15):
        raise DegenerateWindow("a window row has zero variance")
    return (S - S.mean(axis=-1, keepdims=True)) / sd


def _flat_standardized(S: np.ndarray) -> np.ndarray:
    Z = standardize_rows(S)
    return Z.reshape(Z.shape[0], -1) if Z.ndim == 3 else Z.ravel()


def cor_distance(Si, Sj) -> float:
    """``1 - corr`` of the row-standardised, flattened windows."""
    a = _flat_standardized(Si)
    b = _flat_standardized(Sj)
    if a.shape != b.shape:
        raise ShapeMismatch("windows differ in shape")
    return float(min(max(1.0 - np.corrcoef(a, b)[0, 1], 0.0), 2.0))


def cor_matrix(windows: np.ndarray) -> DistanceMatrix:
    psi = _flat_standardized(windows)
    # standardised rows give |psi|^2 = n m, so corr is a scaled inner product.
    # einsum reduces each pair in a fixed order, so entries do not change as
    # the history grows (a BLAS product rounds by matrix size)
    G = np.stack([np.einsum("jk,k->j", psi, row) for row in psi]) if len(psi) else np.zeros((0, 0))
    C = 1.0 - G / psi.shape[1]
    return DistanceMatrix(symmetrize(np.clip(C, 0.0, 2.0)), "COR")


def window_times(m: int) -> np.ndarray:
    return np.arange(1, m + 1) / m


def window_signal(S: np.ndarray) -> TLpSignal:
    """Window as a signal on ``{1..m}/m`` with the ``n`` standardised series as channels."""
    Z = standardize_rows(S)
    return TLpSignal(make_uniform(window_times(Z.shape[1])), Z.T)


def window_measure(S: np.ndarray):
    """Probability weights on the window's days from channel-averaged, shifted returns."""
    return normalize_for_wp(window_signal(S))


def _wp_matrix(measures, p: float, chunk: int = 50_000) -> DistanceMatrix:
    W = np.stack([mm.weights for mm in measures])
    x = measures[0].points[:, 0]
    N = W.shape[0]
    iu, ju = np.triu_indices(N, 1)
    D = np.zeros((N, N))
    for lo in range(0, iu.size, chunk):
        i, j = iu[lo:lo + chunk], ju[lo:lo + chunk]
        D[i, j] = np.maximum(wasserstein_1d_shared(x, W[i], W[j], p), 0.0) ** (1.0 / p)
    return DistanceMatrix(symmetrize(D + D.T), "WP")


def window_distance_matrix(
    windows: np.ndarray,
    method: str,
    p: float = 2.0,
    reference_windows: Optional[int] = None,
    solver: str = "exact",
    sinkhorn_config: Optional[SinkhornConfig] = None,
    threads: Optional[int] = 1,
) -> DistanceMatrix:
    """Pairwise distances between all windows.

    For ``LWP`` and ``LTLP`` the reference is averaged over the first
    ``reference_windows`` windows only (all of them when ``None``), so it can be
    kept free of data later than the forecasting start.
    """
    method = method.upper()
    if method not in METHODS:
        raise InvalidInput(f"method must be one of {METHODS}")
    if method == "COR":
        return cor_matrix(windows)
    r = windows.shape[0] if reference_windows is None else int(reference_windows)
    if not 1 <= r <= windows.shape[0]:
        raise InvalidInput("reference_windows must select at least one window")
    if method == "WP":
        return _wp_matrix([window_measure(S) for S in windows], p)
    if method == "LWP":
        items = [window_measure(S) for S in windows]
        ref = build_reference(items[:r], "WP")
    else:
        items = [window_signal(S) for S in windows]
        ref = build_reference(items[:r], "TLP")
    emb = embed_all(items, ref, p, solver, sinkhorn_config=sinkhorn_config, threads=threads)
    D = pairwise_linear_distances(emb)
    return DistanceMatrix(D.entries, method, solver_calls=len(items))


def neighbour_weights(d: np.ndarray) -> np.ndarray:
    """``1/d`` weights summing to one; exact matches share all the weight."""
    d = np.asarray(d, dtype=float)
    zero = d <= 0
    if np.any(zero):
        return zero / zero.sum()
    w = 1.0 / d
    return w / w.sum()


def knn_forecast(D, future, t: int, k: int = 100, h: int = 1, first: int = 0,
                 warn: bool = True) -> np.ndarray:
    """Distance-weighted mean of the future returns of the ``k`` nearest windows.

    ``D`` is indexed by window, ``future`` by window too (row ``j`` holds the
    future return of the day window ``j`` ends on). Only windows ``j`` with
    ``first <= j <= t - h`` are eligible; equal distances favour earlier windows.
    """
    D = D.entries if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    future = np.asarray(future, dtype=float)
    if k < 1:
        raise InvalidInput("k must be >= 1")
    last = t - h
    if last < first:
        if warn:
            warnings.warn(f"no eligible history for window {t}", InsufficientHistoryWarning,
                          stacklevel=2)
        return np.zeros(future.shape[1])
    cand = np.arange(first, last + 1)
    if cand.size < k and warn:
        warnings.warn(f"only {cand.size} eligible windows for window {t}, wanted {k}",
                      InsufficientHistoryWarning, stacklevel=2)
    d = D[t, cand]
    order = np.argsort(d, kind="stable")[:k]
    w = neighbour_weights(d[order])
    return w @ future[cand[order]]


def quintile_mask(forecasts: np.ndarray, quintile: int) -> np.ndarray:
    """Rows keep the ``ceil((6 - q) n / 5)`` largest-magnitude forecasts."""
    if quintile not in QUINTILES:
        raise InvalidInput("quintile must be 1..5")
    F = np.atleast_2d(np.asarray(forecasts, dtype=float))
    n = F.shape[1]
    count = -(-(6 - quintile) * n // 5)
    order = np.argsort(-np.abs(F), axis=1, kind="stable")[:, :count]
    mask = np.zeros(F.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def pnl_series(forecasts, realized, quintile: int = 1) -> np.ndarray:
    """``PnL_t = sum_i sign(alpha_it) f_it`` over the quintile mask; sign(0) = 0."""
    F = np.atleast_2d(np.asarray(forecasts, dtype=float))
    R = np.atleast_2d(np.asarray(realized, dtype=float))
    if F.shape != R.shape:
        raise ShapeMismatch("forecasts and realised returns are not aligned")
    mask = quintile_mask(F, quintile)
    return np.sum(np.where(mask, np.sign(F) * R, 0.0), axis=1)


def sharpe(pnl) -> float:
    x = np.asarray(pnl, dtype=float)
    if x.size < 2:
        raise UndefinedStatistic("Sharpe ratio needs at least two observations")
    sd = x.std(ddof=1)
    if sd == 0:
        raise UndefinedStatistic("PnL has zero standard deviation")
    return float(x.mean() / sd * math.sqrt(TRADING_DAYS))


def ppt(pnl, n: int) -> float:
    if n < 1:
        raise InvalidInput("portfolio size must be >= 1")
    x = np.asarray(pnl, dtype=float)
    if x.size == 0:
        raise UndefinedStatistic("empty PnL series")
    return float(x.sum() / (x.size * n))


@dataclass(frozen=True)
class FinanceConfig:
    m: int = 20
    k: int = 100
    horizons: Tuple[int, ...] = (1, 3, 5, 10)
    return_kinds: Tuple[str, ...] = ("RR", "MR")
    burn_in: int = 60
    p: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        kinds = tuple(k.upper() for k in self.return_kinds)
        if any(k not in RETURN_KINDS for k in kinds):
            raise InvalidInput(f"return kinds must be among {RETURN_KINDS}")
        object.__setattr__(self, "return_kinds", kinds)
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if any(h < 1 for h in self.horizons) or self.k < 1 or self.burn_in < 1:
            raise InvalidInput("horizons, k and burn_in must be positive")

    @property
    def start_day(self) -> int:
        """First forecast day; LWP/LTLP references only see windows ending earlier."""
        return self.m + self.burn_in


@dataclass
class ForecastRun:
    horizon: int
    return_kind: str
    days: np.ndarray
    forecasts: np.ndarray
    realized: np.ndarray
    pnl: Dict[int, np.ndarray] = field(default_factory=dict)

    def scored(self) -> Tuple[np.ndarray, np.ndarray]:
        """Forecasts and realised returns on the days whose outcome is known."""
        ok = np.all(np.isfinite(self.realized), axis=1)
        return self.forecasts[ok], self.realized[ok]

    def forecast_on(self, day: int) -> np.ndarray:
        return self.forecasts[int(np.searchsorted(self.days, day))]


@dataclass
class FinanceResult:
    method: str
    distances: DistanceMatrix
    runs: List[ForecastRun]
    n: int

    def stats(self) -> List[dict]:
        rows = []
        for run in self.runs:
            for q, series in run.pnl.items():
                try:
                    sr = sharpe(series)
                except UndefinedStatistic:
                    sr = float("nan")
                rows.append({"method": self.method, "horizon": run.horizon,
                             "returnKind": run.return_kind, "quintile": q, "SR": sr,
                             "PPT": ppt(series, self.n) if series.size else float("nan"),
                             "N": int(series.size)})
        return rows


def _future_by_kind(inst: np.ndarray, market: Optional[np.ndarray], h: int, kind: str, beta):
    f = future_returns(inst, h)
    if kind == "RR":
        return f
    if market is None:
        raise InvalidInput(f"market-excess returns need a {MARKET!r} price column")
    return market_excess(f, future_returns(market, h), beta)


def run_finance(
    prices: PriceSeries,
    method: str,
    config: FinanceConfig = FinanceConfig(),
    solver: str = "exact",
    threads: Optional[int] = 1,
    distances: Optional[DistanceMatrix] = None,
) -> FinanceResult:
    """Distances between all windows, then forecasts and PnL for every horizon and kind."""
    inst, market = prices.split_market()
    if "MR" in config.return_kinds and market is None:
        raise InvalidInput(f"market-excess returns need a {MARKET!r} price column")
    m = config.m
    windows = sliding_windows(log_returns(inst), m)
    # window j ends on day j + m
    n_windows = windows.shape[0]
    last_day = inst.shape[0] - 1
    if config.start_day > last_day or n_windows < config.burn_in:
        raise InvalidInput("price history is too short for the window length and burn-in")
    if distances is None:
        distances = window_distance_matrix(windows, method, config.p, config.burn_in, solver,
                                           threads=threads)
    runs = []
    days = np.arange(config.start_day, last_day + 1)
    for h in config.horizons:
        for kind in config.return_kinds:
            fut = _future_by_kind(inst, market, h, kind, config.beta)
            fut_w = fut[m:m + n_windows]
            F = np.array([knn_forecast(distances, fut_w, d - m, config.k, h, warn=False)
                          for d in days]).reshape(days.size, inst.shape[1])
            run = ForecastRun(h, kind, days, F, fut[days])
            run.pnl = {q: pnl_series(*run.scored(), q) for q in QUINTILES}
            runs.append(run)
    return FinanceResult(method.upper(), distances, runs, inst.shape[1])


def gen_random_walk_prices(days: int = 500, n: int = 20, seed: int = 0, with_market: bool = True,
                           drift: float = 0.0, vol: float = 0.01) -> PriceSeries:
    """Geometric random walks sharing a common market factor, plus an ``SPY`` column."""
    rng = np.random.default_rng(seed)
    market = rng.normal(drift, vol, size=days - 1)
    idio = rng.normal(0.0, vol, size=(days - 1, n))
    r = 0.5 * market[:, None] + idio
    logp = np.vstack([np.zeros((1, n)), np.cumsum(r, axis=0)]) + np.log(100.0)
    prices = np.exp(logp)
    tickers = [f"I{i:02d}" for i in range(n)]
    if with_market:
        spy = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(0.5 * market)]))
        prices = np.column_stack([prices, spy])
        tickers.append(MARKET)
    dates = [f"d{i:05d}" for i in range(days)]
    return PriceSeries(tuple(dates), tuple(tickers), prices)
