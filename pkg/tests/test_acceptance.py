"""End-to-end acceptance checks; each test reports one PASS/FAIL line."""
import math
import time
import warnings

import numpy as np
import pytest

from conftest import brute_force_cost, sorted_matching_cost
from ltlp.analysis import cross_validate
from ltlp.embedding import ReferenceSignal, build_reference, embed, embed_all, pairwise_linear_distances
from ltlp.errors import UnconvergedWarning
from ltlp.experiments import clustering_trial
from ltlp.finance import (
    METHODS,
    FinanceConfig,
    cor_distance,
    cor_matrix,
    gen_random_walk_prices,
    log_returns,
    pnl_series,
    quintile_mask,
    run_finance,
    sharpe,
    sliding_windows,
)
from ltlp.flow import GridField, flow_minimize, poisson_dirichlet
from ltlp.interpolation import interpolate, invert_embedding
from ltlp.measures import TLpSignal, lift, make_uniform
from ltlp.metric import pairwise_distances, tlp_distance, tlp_map, wasserstein_distance
from ltlp.solvers import SinkhornConfig, cost_matrix, sinkhorn, solve_exact
from ltlp.synth import Synth1DConfig, gen_dataset_1d

pytestmark = pytest.mark.acceptance

SEEDS = range(100)


def _median_aris(dim):
    runs = [clustering_trial(dim, seed) for seed in SEEDS]
    return {m: float(np.median([r[m] for r in runs])) for m in ("LTLP", "LWP")}


def test_1d_clustering(report):
    med = _median_aris(1)
    gap = med["LTLP"] - med["LWP"]
    report(1, med["LTLP"] >= 0.9 and gap >= 0.05,
           f"median ARI LTLp {med['LTLP']:.4f}, LWp {med['LWP']:.4f}, gap {gap:.4f}")


def test_2d_clustering(report):
    med = _median_aris(2)
    gap = med["LTLP"] - med["LWP"]
    report(2, med["LTLP"] >= 0.8 and gap >= 0.1,
           f"median ARI LTLp {med['LTLP']:.4f}, LWp {med['LWP']:.4f}, gap {gap:.4f}")


def test_solver_oracles(report):
    r = np.random.default_rng(3)
    cfg = SinkhornConfig(epsilon=0.01, relative_epsilon=True)
    exact_err, rel_gaps = 0.0, []
    start = time.perf_counter()
    for i in range(200):
        n = 2 + i % 7
        d = 1 + i % 3
        mu, nu = make_uniform(r.random((n, d))), make_uniform(r.random((n, d)))
        C = cost_matrix(mu.points, nu.points)
        oracle = brute_force_cost(C.entries)
        exact = solve_exact(mu, nu, C).cost
        exact_err = max(exact_err, abs(exact - oracle))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnconvergedWarning)
            approx = sinkhorn(mu, nu, C, cfg).cost
        rel_gaps.append(abs(approx - exact) / exact if exact > 0 else abs(approx))
    elapsed = time.perf_counter() - start
    worst = max(rel_gaps)
    ok = exact_err <= 1e-9 and worst <= 0.01 and elapsed <= 60
    report(3, ok, f"exact max err {exact_err:.2e}; sinkhorn rel gap median "
                  f"{np.median(rel_gaps):.4f} max {worst:.4f}, "
                  f"{sum(g > 0.01 for g in rel_gaps)}/200 over 1%; {elapsed:.1f}s")


def test_1d_closed_form(report):
    r = np.random.default_rng(4)
    worst = 0.0
    for n in list(range(1, 21)) + [50, 100, 150, 200]:
        for p in (1.0, 2.0):
            x, y = r.normal(size=n), 3 * r.random(n)
            mu, nu = make_uniform(x[:, None]), make_uniform(y[:, None])
            cost = solve_exact(mu, nu, cost_matrix(mu.points, nu.points, p)).cost
            worst = max(worst, abs(cost - sorted_matching_cost(x, y, p)))
    report(4, worst <= 1e-9, f"max |solver - sorted matching| {worst:.2e}")


def test_embedding_exactness(report):
    r = np.random.default_rng(5)
    n, d = 12, 2
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid(r.random((n, d)), r.normal(size=n)))
    wref = ReferenceSignal.from_measure(ref.measure)
    worst_tlp = worst_wp = 0.0
    for _ in range(50):
        s = TLpSignal.on_grid(r.random((n, d)), r.normal(size=n))
        worst_tlp = max(worst_tlp, abs(embed(s, ref, solver="exact").norm() - tlp_distance(ref.signal, s)))
        worst_wp = max(worst_wp, abs(embed(s.measure, wref, solver="exact").norm()
                                     - wasserstein_distance(ref.measure, s.measure)))
    report(5, max(worst_tlp, worst_wp) <= 1e-9,
           f"max |d_linear - d_full| LTLp {worst_tlp:.2e}, LWp {worst_wp:.2e}")


def test_metric_axioms(report):
    r = np.random.default_rng(6)
    asym, slack = 0.0, np.inf
    for i in range(200):
        n = 1 + i % 8
        a, b, c = (TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n)) for _ in range(3))
        ab, ba = tlp_distance(a, b), tlp_distance(b, a)
        asym = max(asym, abs(ab - ba))
        slack = min(slack, ab + tlp_distance(b, c) - tlp_distance(a, c))
    report(6, asym <= 1e-9 and slack >= -1e-9, f"max asymmetry {asym:.2e}, min triangle slack {slack:.2e}")


def _gaussian(n, cx, cy, s=0.1):
    x = np.linspace(0, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s * s))


def _poisson_error(n):
    x = np.linspace(0, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
    return np.abs(poisson_dirichlet(-2 * np.pi**2 * exact) - exact).max()


def test_flow_minimization(report):
    start = time.perf_counter()
    c, n = 0.2, 64
    grid = GridField.from_densities(_gaussian(n, 0.4, 0.5), _gaussian(n, 0.4 + c, 0.5))
    res = flow_minimize(grid, tau=1e-3, max_steps=200)
    E = res.energies
    monotone = all(b <= a + 1e-10 for a, b in zip(E, E[1:]))
    rel = abs(E[-1] - c * c) / (c * c)
    sizes = (16, 32, 64)
    errors = [_poisson_error(s) for s in sizes]
    orders = [math.log(e0 / e1) / math.log((s1 - 1) / (s0 - 1))
              for e0, e1, s0, s1 in zip(errors, errors[1:], sizes, sizes[1:])]
    elapsed = time.perf_counter() - start
    ok = monotone and rel <= 0.1 and res.pushforward_error <= 0.1 and min(orders) >= 1.9 and elapsed <= 300
    report(7, ok, f"{res.steps} steps, energy {E[-1]:.5f} vs {c * c:.5f} ({rel:.1%}), "
                  f"nonincreasing {monotone}, pushforward L1 {res.pushforward_error:.4f}, "
                  f"Poisson orders {', '.join(f'{o:.2f}' for o in orders)}; {elapsed:.1f}s")


def _lifted_rows(s):
    rows = np.hstack([s.points, s.values, s.weights[:, None]])
    return rows[np.lexsort(rows.T[::-1])]


def test_interpolation_geodesic(report):
    r = np.random.default_rng(8)
    worst, trips = 0.0, 0.0
    for i in range(20):
        n = 3 + i % 6
        ref = ReferenceSignal.from_signal(TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n)))
        target = TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n))
        base = lift(ref.signal).base
        full = wasserstein_distance(base, lift(target).base)
        tm = tlp_map(ref.signal, target)
        for t in (0.25, 0.5, 0.75):
            mid = lift(interpolate(ref, tm, t)).base
            worst = max(worst, abs(wasserstein_distance(base, mid) - t * full))
        back = invert_embedding(embed(target, ref), ref)
        trips = max(trips, np.abs(_lifted_rows(back) - _lifted_rows(target)).max())
    report(8, worst <= 1e-6 and trips <= 1e-12,
           f"max geodesic defect {worst:.2e}, max round-trip deviation {trips:.2e}")


def test_relative_timing(report):
    signals, _ = gen_dataset_1d(Synth1DConfig(), seed=0)
    start = time.perf_counter()
    ref = build_reference(signals, "TLP")
    pairwise_linear_distances(embed_all(signals, ref, solver="exact", threads=1))
    linear = time.perf_counter() - start
    start = time.perf_counter()
    pairwise_distances(signals, lambda a, b: tlp_distance(a, b, solver="exact"), "TLP", threads=1)
    full = time.perf_counter() - start
    ratio = full / linear
    report(9, ratio >= 50, f"LTLp pipeline {linear:.3f}s, full TLp matrix {full:.3f}s, ratio {ratio:.1f}x")


@pytest.fixture(scope="module")
def market():
    prices = gen_random_walk_prices(500, 20, seed=0)
    cfg = FinanceConfig()
    return prices, cfg, {m: run_finance(prices, m, cfg) for m in METHODS}


def test_finance_no_look_ahead(report, market):
    prices, cfg, full = market
    mismatched = []
    last = prices.prices.shape[0] - 1
    for cut in range(cfg.start_day, last):
        part_prices = prices.head(cut + 1)
        for method in METHODS:
            part = run_finance(part_prices, method, cfg)
            for a, b in zip(full[method].runs, part.runs):
                if not np.array_equal(a.forecasts[: b.days.size], b.forecasts):
                    mismatched.append((cut, method, a.horizon, a.return_kind))
    report("10a", not mismatched,
           f"{last - cfg.start_day} truncations x {len(METHODS)} methods, "
           f"{len(mismatched)} forecast mismatches")


def test_finance_sign_oracle(report, market):
    _, _, full = market
    violations = checked = 0
    for res in full.values():
        for run in res.runs:
            F, R = run.scored()
            for q in range(1, 6):
                oracle = pnl_series(R, R, q)
                violations += int(np.sum(oracle < pnl_series(F, R, q) - 1e-15))
                checked += R.shape[0]
    report("10b", violations == 0, f"{violations} of {checked} method-days beat the sign oracle")


def test_finance_sharpe(report):
    value = sharpe((1.0, 2.0, 3.0))
    report("10c", value == 2 * math.sqrt(252), f"sharpe((1,2,3)) = {value!r}")


def test_finance_cor_identity(report, market):
    prices, cfg, _ = market
    inst, _ = prices.split_market()
    W = sliding_windows(log_returns(inst), cfg.m)
    r = np.random.default_rng(10)
    D = cor_matrix(W).entries
    worst = 0.0
    for _ in range(100):
        i, j = r.integers(W.shape[0], size=2)
        a = ((W[i] - W[i].mean(axis=1, keepdims=True)) / W[i].std(axis=1, keepdims=True)).ravel()
        b = ((W[j] - W[j].mean(axis=1, keepdims=True)) / W[j].std(axis=1, keepdims=True)).ravel()
        identity = np.sum((a - b) ** 2) / (2 * a.size)
        worst = max(worst, abs(cor_distance(W[i], W[j]) - identity), abs(D[i, j] - identity))
    report("10d", worst <= 1e-9, f"max deviation {worst:.2e} on 100 window pairs")


def test_finance_top_quintile_size(report, market):
    _, _, full = market
    n = 20
    counts = set()
    for res in full.values():
        for run in res.runs:
            counts |= set(quintile_mask(run.forecasts, 5).sum(axis=1).tolist())
    report("10e", counts == {math.ceil(0.2 * n)}, f"qr5 sizes {sorted(counts)}, expected {math.ceil(0.2 * n)}")


def test_classify_separable(report):
    r = np.random.default_rng(11)
    y = np.repeat(np.arange(3), 20)
    X = np.eye(3)[y] * 10 + r.normal(scale=0.1, size=(60, 3))
    scores = cross_validate(X, y, folds=5, repeats=100, seed=0)
    report(11, np.all(np.asarray(scores) == 1.0), f"macro-F1 min {np.min(scores):.4f} over {len(scores)} repeats")
