import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ltlp.errors import EmptySupport, InvalidInput, InvalidScale, ShapeMismatch
from ltlp.measures import (
    DiscreteMeasure,
    DistanceMatrix,
    EmbeddingVector,
    TLpSignal,
    TransportMap,
    TransportPlan,
    lift,
    make_uniform,
    symmetrize,
)


def test_make_uniform_two_points():
    m = make_uniform([0.0, 1.0])
    assert m.points.shape == (2, 1)
    np.testing.assert_array_equal(m.weights, [0.5, 0.5])


def test_make_uniform_single_2d_atom():
    m = make_uniform([(0.0, 0.0)])
    assert m.dim == 2
    np.testing.assert_array_equal(m.weights, [1.0])


def test_make_uniform_150_grid():
    m = make_uniform(np.linspace(0, 1, 150))
    assert m.n == 150
    np.testing.assert_allclose(m.weights, 1 / 150, rtol=0, atol=0)
    assert m.is_uniform


def test_make_uniform_rejects_empty_and_nan():
    with pytest.raises(EmptySupport):
        make_uniform(np.zeros((0, 1)))
    with pytest.raises(InvalidInput):
        make_uniform([0.0, np.nan])


def test_measure_validation():
    with pytest.raises(InvalidInput):
        DiscreteMeasure([0.0, 1.0], [0.7, 0.7])
    with pytest.raises(InvalidInput):
        DiscreteMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ShapeMismatch):
        DiscreteMeasure([0.0, 1.0], [1.0])


def test_measure_is_read_only():
    m = make_uniform([0.0, 1.0])
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_lift_single_atom():
    s = TLpSignal.on_grid([0.0], [3.0])
    lifted = lift(s)
    np.testing.assert_array_equal(lifted.points, [[0.0, 3.0]])
    np.testing.assert_array_equal(lifted.weights, [1.0])


def test_lift_two_atom_signal():
    s = TLpSignal.on_grid([0.0, 1.0], [0.0, 10.0])
    lifted = lift(s)
    np.testing.assert_array_equal(lifted.points, [[0.0, 0.0], [1.0, 10.0]])
    np.testing.assert_array_equal(lifted.weights, [0.5, 0.5])


def test_lift_scales_channels():
    lifted = lift(TLpSignal.on_grid([0.0], [3.0]), channel_scale=2.0)
    np.testing.assert_array_equal(lifted.points, [[0.0, 6.0]])
    assert lifted.channel_scale == 2.0


@pytest.mark.parametrize("scale", [0.0, -1.0, np.inf])
def test_lift_rejects_bad_scale(scale):
    with pytest.raises(InvalidScale):
        lift(TLpSignal.on_grid([0.0], [1.0]), scale)


def test_signal_shape_checks():
    with pytest.raises(ShapeMismatch):
        TLpSignal.on_grid([0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInput):
        TLpSignal.on_grid([0.0, 1.0], [1.0, np.inf])


@given(
    st.integers(1, 12).flatmap(
        lambda n: st.tuples(
            arrays(float, (n, 2), elements=st.floats(-5, 5)),
            arrays(float, (n, 3), elements=st.floats(-5, 5)),
            arrays(float, n, elements=st.floats(0.01, 1)),
        )
    ),
    st.floats(0.1, 10),
)
def test_lift_preserves_mass_and_cardinality(data, scale):
    pts, vals, w = data
    s = TLpSignal(DiscreteMeasure(pts, w / w.sum()), vals)
    lifted = lift(s, scale)
    assert lifted.base.n == s.measure.n
    assert lifted.points.shape == (s.measure.n, 5)
    assert abs(lifted.weights.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(lifted.points[:, 2:], scale * vals)


def test_transport_plan_marginals():
    pi = np.array([[0.25, 0.25], [0.0, 0.5]])
    plan = TransportPlan(pi, [0.5, 0.5], [0.25, 0.75], cost=0.0)
    assert plan.marginal_error() == 0.0
    bad = TransportPlan(pi, [0.5, 0.5], [0.5, 0.5], cost=0.0)
    assert bad.marginal_error() == pytest.approx(0.25)


def test_transport_plan_rejects_shape_and_sign():
    with pytest.raises(ShapeMismatch):
        TransportPlan(np.ones((2, 3)) / 6, [0.5, 0.5], [0.5, 0.5], 0.0)
    with pytest.raises(InvalidInput):
        TransportPlan(np.array([[1.0, -0.5], [0.0, 0.5]]), [0.5, 0.5], [0.5, 0.5], 0.0)


def test_transport_map_assignment_length():
    with pytest.raises(ShapeMismatch):
        TransportMap([[0.0], [1.0]], assignment=[0])
    tm = TransportMap([[0.0], [1.0]], assignment=[1, 0])
    assert tm.n == 2


def test_embedding_vector_flat_and_norm():
    v = EmbeddingVector([[3.0]], [[4.0]], [1.0], 2.0)
    np.testing.assert_array_equal(v.flat(), [3.0, 4.0])
    assert v.norm() == pytest.approx(5.0)


def test_embedding_vector_without_channels():
    v = EmbeddingVector([[1.0], [2.0]], np.zeros((2, 0)), [0.5, 0.5], 2.0)
    assert v.channel.shape == (2, 0)


def test_distance_matrix_validation():
    DistanceMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), "TLP")
    with pytest.raises(InvalidInput):
        DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]), "TLP")
    with pytest.raises(InvalidInput):
        DistanceMatrix(np.array([[1.0, 1.0], [1.0, 0.0]]), "TLP")
    with pytest.raises(InvalidInput):
        DistanceMatrix(np.zeros((2, 2)), "XYZ")
    with pytest.raises(ShapeMismatch):
        DistanceMatrix(np.zeros((2, 3)), "TLP")


def test_symmetrize():
    d = np.array([[1.0, 2.0], [4.0, 1.0]])
    np.testing.assert_array_equal(symmetrize(d), [[0.0, 3.0], [3.0, 0.0]])
