import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltlp.embedding import ReferenceSignal, embed
from ltlp.errors import NoSuchComponent, OutOfRange, ShapeMismatch
from ltlp.interpolation import interpolate, invert_embedding, lifted_images, mode_sweep
from ltlp.measures import DiscreteMeasure, EmbeddingVector, TLpSignal, TransportMap, lift
from ltlp.metric import tlp_map, wasserstein_distance

F = TLpSignal.on_grid([0.0, 1.0], [0.0, 10.0])
G = TLpSignal.on_grid([0.0, 1.0], [10.0, 0.0])
REF = ReferenceSignal.from_signal(F)


def lifted_multiset(s: TLpSignal):
    rows = np.hstack([s.points, s.values, s.weights[:, None]])
    return rows[np.lexsort(rows.T[::-1])]


def test_interpolate_endpoints():
    tm = tlp_map(F, G)
    start = interpolate(REF, tm, 0.0)
    np.testing.assert_array_equal(start.points, F.points)
    np.testing.assert_array_equal(start.values, F.values)
    end = interpolate(REF, tm, 1.0)
    np.testing.assert_array_equal(lifted_multiset(end), lifted_multiset(G))


def test_interpolate_midpoint_is_not_a_function():
    mid = interpolate(REF, tlp_map(F, G), 0.5)
    np.testing.assert_array_equal(mid.points, [[0.5], [0.5]])
    np.testing.assert_array_equal(mid.values, [[0.0], [10.0]])


@pytest.mark.parametrize("t", [-0.1, 1.5, np.nan])
def test_interpolate_rejects_t(t):
    with pytest.raises(OutOfRange):
        interpolate(REF, tlp_map(F, G), t)


def test_interpolate_checks_map_shape():
    with pytest.raises(ShapeMismatch):
        interpolate(REF, TransportMap([[0.0], [1.0]]), 0.5)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_interpolate_preserves_mass(seed, t):
    r = np.random.default_rng(seed)
    w = r.dirichlet(np.ones(5))
    ref = ReferenceSignal.from_signal(TLpSignal(DiscreteMeasure(r.random((5, 2)), w), r.normal(size=5)))
    tm = TransportMap(r.random((5, 3)))
    out = interpolate(ref, tm, t)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(out.weights, w)


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_interpolant_lies_on_the_lifted_geodesic(seed, n):
    r = np.random.default_rng(seed)
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n)))
    target = TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n))
    full = wasserstein_distance(lift(ref.signal).base, lift(target).base)
    tm = tlp_map(ref.signal, target)
    for t in (0.25, 0.5, 0.75):
        mid = lift(interpolate(ref, tm, t)).base
        assert abs(wasserstein_distance(lift(ref.signal).base, mid) - t * full) <= 1e-6


def test_invert_zero_vector_returns_reference():
    r = np.random.default_rng(1)
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid(r.random((6, 2)), r.normal(size=(6, 2))))
    v = EmbeddingVector(np.zeros((6, 2)), np.zeros((6, 2)), ref.measure.weights, 2.0)
    out = invert_embedding(v, ref)
    np.testing.assert_array_equal(out.points, ref.measure.points)
    np.testing.assert_array_equal(out.values, ref.values)
    np.testing.assert_array_equal(out.weights, ref.measure.weights)


def test_invert_merges_a_fibre_into_its_mean():
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid([0.0, 1.0], [0.0, 0.0]))
    # both atoms land at x = 0.5 with values 0 and 10
    w = np.sqrt(0.5)
    v = EmbeddingVector([[0.5 * w], [-0.5 * w]], [[0.0], [10.0 * w]], [0.5, 0.5], 2.0)
    out = invert_embedding(v, ref)
    np.testing.assert_allclose(out.points, [[0.5]])
    np.testing.assert_allclose(out.values, [[5.0]])
    np.testing.assert_array_equal(out.weights, [1.0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_invert_embed_round_trip(seed, n):
    r = np.random.default_rng(seed)
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid(r.random((n, 2)), r.normal(size=n)))
    s = TLpSignal.on_grid(r.random((n, 2)), r.normal(size=(n, 1)))
    back = invert_embedding(embed(s, ref), ref)
    np.testing.assert_allclose(lifted_multiset(back), lifted_multiset(s), atol=1e-12)


def test_lifted_images_honours_channel_scale():
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid([0.0], [1.0]))
    s = TLpSignal.on_grid([0.5], [4.0])
    v = embed(s, ref, channel_scale=5.0)
    np.testing.assert_allclose(lifted_images(v, ref), [[0.5, 4.0]])


def _two_signal_setup():
    x = np.linspace(0, 1, 6)
    ref = ReferenceSignal.from_signal(TLpSignal.on_grid(x, np.zeros(6)))
    a = TLpSignal.on_grid(x, np.linspace(0, 1, 6))
    b = TLpSignal.on_grid(x, np.linspace(1, 3, 6))
    return ref, [embed(a, ref), embed(b, ref)]


def test_mode_sweep_zero_is_mean():
    ref, emb = _two_signal_setup()
    (mid,) = mode_sweep(emb, 0, [0.0], ref)
    mean = EmbeddingVector(
        (emb[0].spatial + emb[1].spatial) / 2, (emb[0].channel + emb[1].channel) / 2,
        ref.measure.weights, 2.0,
    )
    np.testing.assert_allclose(lifted_multiset(mid), lifted_multiset(invert_embedding(mean, ref)),
                               atol=1e-12)


def test_mode_sweep_two_points_runs_along_their_line():
    ref, emb = _two_signal_setup()
    out = mode_sweep(emb, 0, [-1.0, 1.0], ref)
    assert len(out) == 2
    e0, e1 = emb[0].flat(), emb[1].flat()
    # two samples: lambda = |e1 - e0|^2 / 2, so one std is (e1 - e0) / sqrt(2)
    ends = [(e0 + e1) / 2 + s * (e1 - e0) / np.sqrt(2) for s in (-1.0, 1.0)]
    got = sorted(tuple(np.round(o.values[:, 0], 9)) for o in out)
    want = []
    for flat in ends:
        v = EmbeddingVector(flat[:6].reshape(6, 1), flat[6:].reshape(6, 1), ref.measure.weights, 2.0)
        want.append(tuple(np.round(invert_embedding(v, ref).values[:, 0], 9)))
    assert got == sorted(want)


def test_mode_sweep_count_and_missing_component():
    ref, emb = _two_signal_setup()
    assert len(mode_sweep(emb, 0, [-2, -1, 0, 1, 2], ref)) == 5
    with pytest.raises(NoSuchComponent):
        mode_sweep(emb, 1, [1.0], ref)
    with pytest.raises(NoSuchComponent):
        mode_sweep(emb, -1, [1.0], ref)
