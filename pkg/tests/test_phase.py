import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifsdyn import phase as ph
from ifsdyn.errors import ResourceError, UsageError

from oracles import TORUS_DISTANCE

unit = st.floats(0, 1, exclude_max=True, allow_nan=False)


def test_circle_wraps():
    assert ph.distance(ph.circle(), [0.1], [0.9]) == pytest.approx(0.2, abs=1e-15)


def test_distance_to_self_is_zero():
    for space, p in [(ph.circle(), [0.3]), (ph.torus(2), [0.2, 0.7]), (ph.box([0], [2]), [1.5])]:
        assert ph.distance(space, p, p) == 0.0


def test_torus_distance_matches_shift_minimum():
    assert ph.distance(ph.torus(2), [0.9, 0.1], [0.1, 0.9]) == pytest.approx(TORUS_DISTANCE, abs=1e-15)


def test_box_distance_is_euclidean():
    assert ph.distance(ph.box([0, 0], [1, 1]), [0, 0], [1, 1]) == pytest.approx(np.sqrt(2))


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        ph.distance(ph.torus(2), [0.1], [0.2])


def test_diameters():
    assert ph.circle().diameter == 0.5
    assert ph.torus(2).diameter == pytest.approx(0.5 * np.sqrt(2))
    assert ph.box([0, 0], [3, 4]).diameter == 5.0


def test_canonical_stays_in_unit_interval():
    x = ph.torus(2).canonical(np.array([-1e-20, 1.0 - 1e-17]))
    assert np.all((x >= 0) & (x < 1))


@pytest.mark.parametrize("space,res,expected", [
    (ph.circle(), 0.25, [[0], [0.25], [0.5], [0.75]]),
])
def test_grid_circle(space, res, expected):
    g = ph.grid_points(space, ph.GridSpec(res))
    np.testing.assert_array_equal(g.points, expected)
    assert g.covering_radius == 0.125


def test_grid_sizes():
    assert len(ph.grid_points(ph.torus(2), ph.GridSpec(0.5))) == 4
    g = ph.grid_points(ph.box([0], [1]), ph.GridSpec(0.1))
    assert len(g) == 11
    assert g.covering_radius == pytest.approx(0.05)


def test_grid_errors():
    with pytest.raises(UsageError):
        ph.GridSpec(0)
    with pytest.raises(ResourceError):
        ph.grid_points(ph.torus(2), ph.GridSpec(1e-4, cap=1000))


def test_grid_is_deterministic():
    a = ph.grid_points(ph.torus(2), ph.GridSpec(0.07))
    b = ph.grid_points(ph.torus(2), ph.GridSpec(0.07))
    assert a.points.tobytes() == b.points.tobytes()


@pytest.mark.parametrize("space", [ph.circle(), ph.torus(2), ph.box([0, -1], [1, 2])])
@pytest.mark.parametrize("res", [0.3, 0.07])
def test_covering_radius_is_certified(space, res):
    g = ph.grid_points(space, ph.GridSpec(res))
    assert g.covering_radius <= res * np.sqrt(space.dim) / 2 + 1e-15
    gen = np.random.default_rng(0)
    if space.periodic:
        pts = gen.uniform(size=(2000, space.dim))
    else:
        pts = gen.uniform(space.lower, space.upper, size=(2000, space.dim))
    d = ph.distance(space, pts[:, None], g.points[None]).min(axis=1)
    assert d.max() <= g.covering_radius + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=6, max_size=6))
def test_torus_metric_axioms(c):
    T = ph.torus(2)
    p, q, r = np.array(c[:2]), np.array(c[2:4]), np.array(c[4:])
    assert ph.distance(T, p, q) == pytest.approx(ph.distance(T, q, p), abs=1e-12)
    assert ph.distance(T, p, r) <= ph.distance(T, p, q) + ph.distance(T, q, r) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=6, max_size=6))
def test_torus_translation_invariance(c):
    T = ph.torus(2)
    p, q, v = np.array(c[:2]), np.array(c[2:4]), np.array(c[4:])
    moved = ph.distance(T, T.canonical(p + v), T.canonical(q + v))
    assert moved == pytest.approx(ph.distance(T, p, q), abs=1e-12)
