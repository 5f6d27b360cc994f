import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynlap import Domain, Grid, ScalarField, box_of, intra_box_points
from dynlap.errors import OutOfDomainError

UNIT = Domain(0.0, 1.0, 0.0, 1.0)
TORUS = Domain(0.0, 2 * math.pi, 0.0, 2 * math.pi, periodic_x=True, periodic_y=True)


def test_domain_kinds():
    assert UNIT.kind == "rectangle"
    assert TORUS.kind == "torus"
    assert Domain(0, 4, 0, 1, periodic_x=True).kind == "cylinder"
    assert Domain(0, 4, 0, 1, periodic_y=True).kind == "cylinder"


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Domain(0.0, 1.0, 2.0, 1.0)


def test_box_of_half_open_membership():
    g = Grid(UNIT, 2, 2)
    assert box_of(g, (0.25, 0.75)) == (0, 1)
    # interior edge goes to the larger index
    assert box_of(g, (0.5, 0.25)) == (1, 0)
    # closed top corner stays in the last box
    assert box_of(g, (1.0, 1.0)) == (1, 1)


def test_box_of_periodic_wrap():
    g = Grid(TORUS, 4, 4)
    assert box_of(g, (2 * math.pi + 0.1, 0.1)) == box_of(g, (0.1, 0.1))
    assert box_of(g, (-0.1, 0.1)) == (3, 0)


def test_box_of_outside_rectangle_raises():
    g = Grid(UNIT, 2, 2)
    with pytest.raises(OutOfDomainError):
        box_of(g, (1.5, 0.5))


def test_box_area_sums_to_domain_area():
    for g in (Grid(UNIT, 7, 13), Grid(TORUS, 128, 64), Grid(Domain(0, 1.5, 0, 1), 24, 16)):
        assert abs(g.n * g.box_area - g.domain.area) <= 1e-12 * g.domain.area


def test_index_bijection():
    g = Grid(UNIT, 5, 3)
    idx = np.arange(g.n)
    ix, iy = g.box_coords(idx)
    assert np.array_equal(g.box_index(ix, iy), idx)
    assert ix.max() == 4 and iy.max() == 2


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-10.0, 10.0),
    st.floats(0.0, 0.9999),
    st.floats(0.0, 0.9999),
)
def test_every_wrapped_point_lands_in_its_box(shift, fx, fy):
    g = Grid(TORUS, 9, 7)
    p = np.array([g.domain.x_min + fx * g.domain.width + shift * g.domain.width,
                  g.domain.y_min + fy * g.domain.height])
    ix, iy = box_of(g, p)
    assert 0 <= ix < g.nx and 0 <= iy < g.ny
    w = g.domain.wrap(p)

    def offset_into_box(value, lo, span, width):
        # signed offset modulo the period: points a tie-tolerance below the
        # low edge count as sitting on it
        d = (value - lo) % span
        return d if d < span - 1e-8 * width else d - span

    dx_off = offset_into_box(w[0], g.domain.x_min + ix * g.dx, g.domain.width, g.dx)
    dy_off = offset_into_box(w[1], g.domain.y_min + iy * g.dy, g.domain.height, g.dy)
    assert -1e-8 * g.dx <= dx_off <= g.dx + 1e-8 * g.dx
    assert -1e-8 * g.dy <= dy_off <= g.dy + 1e-8 * g.dy


def test_intra_box_points_center_and_offsets():
    g1 = Grid(UNIT, 1, 1)
    pts = intra_box_points(g1, (0, 0), 1)
    assert np.allclose(pts, [[0.5, 0.5]])
    pts2 = intra_box_points(g1, 0, 2)
    assert np.allclose(
        pts2, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
    )


def test_intra_box_points_count_and_membership():
    g = Grid(Domain(0, 4, 0, 1, periodic_x=True), 16, 8)
    pts = intra_box_points(g, (5, 3), 40)
    assert pts.shape == (1600, 2)
    assert len(np.unique(pts, axis=0)) == 1600
    ix, iy = g.box_of_many(pts)
    assert np.all(ix == 5) and np.all(iy == 3)


def test_intra_box_points_validates_q():
    g = Grid(UNIT, 2, 2)
    with pytest.raises(ValueError):
        intra_box_points(g, (0, 0), 0)


def test_scalar_field_shape_check():
    g = Grid(UNIT, 4, 4)
    ScalarField(g, np.zeros(16))
    ScalarField(g, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(15))


def test_scalar_field_matrix_layout():
    g = Grid(UNIT, 3, 2)
    f = ScalarField.from_function(g, lambda x, y: x + 10 * y)
    m = f.as_matrix()
    assert m.shape == (2, 3)
    assert m[1, 0] == pytest.approx(g.centers_x[0] + 10 * g.centers_y[1])


def test_edge_ties_resolve_upward_consistently():
    # values that are mathematical box edges but arrive with either float
    # rounding must all land in the upper box
    g = Grid(Domain(0.0, 2 * math.pi, 0.0, 2 * math.pi, True, True), 256, 256)
    edge = 17 * g.dx
    for p in (edge, np.nextafter(edge, 0.0), np.nextafter(edge, 10.0)):
        ix, _ = box_of(g, (p, 0.1))
        assert ix == 17
