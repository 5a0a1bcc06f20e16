import numpy as np
import pytest

from dpbary.geometry import RegionPolygon, point_in_polygon, points_in_polygon, project_into_polygon


def unit_square():
    return RegionPolygon([[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]])


def square_with_hole():
    return RegionPolygon(
        [
            [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0], [0.0, 0.0]],
            [[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0], [1.0, 1.0]],
        ]
    )


def test_point_inside_square():
    assert point_in_polygon(unit_square(), (0.5, 0.5))


def test_point_outside_square():
    assert not point_in_polygon(unit_square(), (2.0, 2.0))


def test_point_in_hole_is_outside():
    region = square_with_hole()
    assert point_in_polygon(region, (0.5, 0.5))
    assert not point_in_polygon(region, (2.0, 2.0))  # even-odd count 2
    assert point_in_polygon(region, (3.5, 3.5))


def test_boundary_counts_as_inside():
    sq = unit_square()
    assert point_in_polygon(sq, (0.0, 0.5))
    assert point_in_polygon(sq, (0.5, 0.0))
    assert point_in_polygon(sq, (1.0, 1.0))


def test_degenerate_ring_rejected():
    with pytest.raises(ValueError, match="ring"):
        RegionPolygon([[[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]])
    with pytest.raises(ValueError, match="degenerate"):
        RegionPolygon([[[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]])


def test_nonconvex_polygon():
    # an L-shape: the notch is outside
    ring = [[0, 0], [3, 0], [3, 1], [1, 1], [1, 3], [0, 3], [0, 0]]
    region = RegionPolygon([[list(map(float, v)) for v in ring]])
    assert point_in_polygon(region, (0.5, 2.0))
    assert not point_in_polygon(region, (2.0, 2.0))


def test_vectorized_membership_matches_scalar():
    rng = np.random.default_rng(0)
    region = square_with_hole()
    pts = rng.uniform(-0.5, 4.5, size=(100, 2))
    mask = points_in_polygon(region, pts)
    assert all(mask[i] == point_in_polygon(region, pts[i]) for i in range(100))


def test_projection_into_polygon():
    sq = unit_square()
    inside = project_into_polygon(sq, (0.3, 0.7))
    assert np.allclose(inside, [0.3, 0.7])
    snapped = project_into_polygon(sq, (2.0, 0.5))
    assert np.allclose(snapped, [1.0, 0.5])
    assert point_in_polygon(sq, snapped)
