import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fact.hull import convex_hull, hull_halfplanes, to_halfplanes
from fact.postprocess import hull_constraints
from fact.tensor import from_counts


def _as_set(vertices):
    return {tuple(np.round(v, 12)) for v in vertices}


def test_quadrilateral_from_roc_point():
    # group ROC (FPR, TPR) = (0.2, 0.8) in both groups
    base = from_counts([8, 2, 2, 8, 8, 2, 2, 8])
    hp = hull_constraints(base)[1]
    assert _as_set(hp.vertices) == {(0.0, 0.0), (0.2, 0.8), (0.8, 0.2), (1.0, 1.0)}
    assert hp.contains((0.5, 0.5)) and not hp.contains((0.1, 0.9))


def test_diagonal_classifier_gives_segment():
    base = from_counts([3, 7, 3, 7, 3, 7, 3, 7])
    hp = hull_constraints(base)[1]
    assert len(hp.vertices) == 2
    assert hp.contains((0.6, 0.6)) and not hp.contains((0.3, 0.4))


def test_perfect_classifier_covers_square():
    hp = hull_constraints(from_counts([5, 0, 0, 5, 4, 0, 0, 6]))[0]
    for p in [(0, 0), (0, 1), (1, 0), (1, 1), (0.3, 0.7)]:
        assert hp.contains(p)


def test_single_point():
    hp = to_halfplanes([(0.4, 0.4)])
    assert hp.contains((0.4, 0.4)) and not hp.contains((0.4, 0.5))


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=30))
def test_hull_halfplanes_agree_with_vertex_enumeration(points):
    pts = np.array(points)
    hull = convex_hull(pts)
    hp = hull_halfplanes(pts)
    # every input point is inside, every hull vertex is an input point
    assert all(hp.contains(p, tol=1e-9) for p in pts)
    assert all(any(np.allclose(v, p) for p in pts) for v in hull)


@given(st.floats(0.01, 0.49), st.floats(0.51, 0.99), st.floats(0, 1), st.floats(0, 1))
def test_membership_matches_mixing_reachability(f, t, p11, p10):
    # any randomization of a base point lands inside its hull
    hp = hull_halfplanes([(0, 0), (f, t), (1 - f, 1 - t), (1, 1)])
    point = (p11 * f + p10 * (1 - f), p11 * t + p10 * (1 - t))
    assert hp.contains(point, tol=1e-9)


def test_violation_is_distance_like():
    hp = hull_halfplanes([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert hp.violation((0.5, 0.5)) == 0.0
    assert hp.violation((1.5, 0.5)) == pytest.approx(0.5)
