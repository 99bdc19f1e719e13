import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltlp.errors import InvalidGamma, InvalidInput, InvalidParams, NegativeMass
from ltlp.measures import TLpSignal
from ltlp.synth import (
    CHIRP_1,
    CHIRP_2,
    HUMP,
    M1,
    M2,
    Synth1DConfig,
    Synth2DConfig,
    chirp_constant,
    chirp_teeth,
    draw_alpha,
    gen_2d,
    gen_chirp,
    gen_dataset_1d,
    gen_dataset_2d,
    gen_hump,
    hump_constant,
    hump_intervals,
    noise_free_integral,
    normalize_for_wp,
)


def test_hump_example():
    s = gen_hump(0.1, 0.2, 0.3, grid=1001, noise_sigma=0)
    x, f = s.points[:, 0], s.values[:, 0]
    assert hump_constant(0.2) == pytest.approx(2.5)
    assert hump_intervals(0.1, 0.2, 0.3) == [(0.1, pytest.approx(0.3)), (pytest.approx(0.6), pytest.approx(0.8))]
    on = ((x >= 0.1) & (x <= 0.3)) | ((x >= 0.6) & (x <= 0.8))
    assert np.all(f[on & (np.abs(x - 0.3) > 1e-9) & (np.abs(x - 0.8) > 1e-9)] == 2.5)
    assert np.all(f[~on] == 0.0)


def test_hump_integrates_to_one():
    l, r, b = 0.2, 0.1, 0.3
    (a0, a1), (b0, b1) = hump_intervals(l, r, b)
    K = hump_constant(r)
    assert noise_free_integral([(a0, a1, K), (b0, b1, K)]) == pytest.approx(1.0, abs=1e-12)
    s = gen_hump(l, r, b, grid=150, noise_sigma=0)
    assert np.trapezoid(s.values[:, 0], s.points[:, 0]) == pytest.approx(1.0, abs=0.05)


def test_chirp_example():
    teeth = chirp_teeth(0.1, 0.2, 0.05)
    assert len(teeth) == 4
    assert all(hi - lo == pytest.approx(0.025) for lo, hi in teeth)
    assert teeth[0][0] == pytest.approx(0.1) and teeth[-1][0] == pytest.approx(0.25)
    assert chirp_constant(0.2, 0.05) == pytest.approx(1 / 0.15)


@pytest.mark.parametrize("r,gamma", [(0.1, 0.02), (0.1, 0.05), (0.2, 0.05), (0.2, 0.1)])
def test_chirp_integrates_to_one(r, gamma):
    l, b = 0.1, 0.3
    K = chirp_constant(r, gamma)
    parts = [(lo, hi, K) for lo, hi in chirp_teeth(l, r, gamma)]
    parts.append((l + b + r, l + b + 2 * r, K / 4))
    assert noise_free_integral(parts) == pytest.approx(1.0, abs=1e-10)


def test_generator_errors():
    with pytest.raises(InvalidGamma):
        chirp_teeth(0.1, 0.2, 0.03)
    with pytest.raises(InvalidGamma):
        gen_chirp(0.1, 0.2, 0.3, 0.0)
    with pytest.raises(InvalidParams):
        gen_hump(0.5, 0.2, 0.3)
    with pytest.raises(InvalidParams):
        gen_hump(0.1, -0.2, 0.3)
    with pytest.raises(InvalidParams):
        Synth1DConfig(gamma1=0.03)


def test_generators_are_seeded():
    a = gen_chirp(0.2, 0.1, 0.3, 0.02, rng=5)
    b = gen_chirp(0.2, 0.1, 0.3, 0.02, rng=5)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, gen_chirp(0.2, 0.1, 0.3, 0.02, rng=6).values)


def test_m1_impulse_count():
    r = np.random.default_rng(0)
    counts = [gen_2d(M1, 16, r, return_impulses=True)[1] for _ in range(300)]
    assert min(counts) >= 10 and max(counts) <= 20
    assert len(set(counts)) > 5


def test_m1_impulses_are_set_to_minus_two():
    s, n = gen_2d(M1, 16, np.random.default_rng(3), return_impulses=True)
    assert np.sum(s.values == -2.0) == n


def test_m2_alpha_mean():
    r = np.random.default_rng(1)
    alphas = np.array([draw_alpha(M2, r) for _ in range(10_000)])
    assert abs(alphas.mean() + 4.0) <= 3 * 1.5 / np.sqrt(alphas.size)
    assert alphas.std() == pytest.approx(1.5, rel=0.05)
    with pytest.raises(InvalidInput):
        draw_alpha("M3", r)


def test_gen_2d_deterministic():
    a = gen_2d(M2, 8, 11)
    b = gen_2d(M2, 8, 11)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.points.shape == (64, 2)


def test_normalize_examples():
    x = np.linspace(0, 1, 5)
    f = np.array([1.0, 2.0, 3.0, 2.0, 2.0])
    w = normalize_for_wp(TLpSignal.on_grid(x, f), chi=0.0).weights
    np.testing.assert_allclose(w, f / f.sum())
    w0 = normalize_for_wp(TLpSignal.on_grid(x, np.zeros(5)), chi=1.0).weights
    np.testing.assert_allclose(w0, 0.2)


def test_normalize_m1_field():
    s = gen_2d(M1, 16, np.random.default_rng(2))
    assert s.values.min() <= -2.0
    with pytest.raises(NegativeMass):
        normalize_for_wp(s, chi=2.0)
    m = normalize_for_wp(s)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(m.weights > 0)


@given(st.integers(0, 2**32 - 1), st.floats(0.001, 5))
def test_normalize_is_probability(seed, extra):
    r = np.random.default_rng(seed)
    f = r.normal(size=20)
    m = normalize_for_wp(TLpSignal.on_grid(np.linspace(0, 1, 20), f), chi=-f.min() + extra)
    assert abs(m.weights.sum() - 1) < 1e-12 and np.all(m.weights > 0)


def test_dataset_1d_shape_and_labels():
    signals, labels = gen_dataset_1d(seed=0)
    assert len(signals) == 60
    assert all(s.measure.n == 150 for s in signals)
    assert np.sum(labels == HUMP) == 30
    assert set(labels[30:]) <= {CHIRP_1, CHIRP_2}


def test_dataset_1d_deterministic():
    a, la = gen_dataset_1d(seed=7)
    b, lb = gen_dataset_1d(seed=7)
    np.testing.assert_array_equal(la, lb)
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.values, t.values)


def test_dataset_1d_gamma_proportion():
    cfg = Synth1DConfig(r1=1.0)
    _, labels = gen_dataset_1d(cfg, seed=1)
    assert np.all(labels[30:] == CHIRP_1)


def test_dataset_2d():
    signals, labels = gen_dataset_2d(Synth2DConfig(grid=8, n_per_class=5), seed=3)
    assert len(signals) == 10
    np.testing.assert_array_equal(labels, [0] * 5 + [1] * 5)
    assert signals[0].points.shape == (64, 2)
