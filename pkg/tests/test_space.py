import numpy as np
import pytest

from ppinfo.space import (
    BaseSpace,
    DuplicatePoints,
    Lattice,
    NonnegFunction,
    OutOfWindow,
    PointPattern,
    QuadratureGrid,
    Region,
    TestFunction,
)


def test_window_validation():
    with pytest.raises(ValueError):
        BaseSpace((1.0,), (0.0,))
    with pytest.raises(ValueError):
        BaseSpace((0, 0, 0, 0), (1, 1, 1, 1))
    sq = BaseSpace((0.0, 0.0), (2.0, 3.0))
    assert sq.volume == 6.0 and sq.axis_unit == pytest.approx(0.5)


def test_convert_scales_measure_not_shape():
    sq = BaseSpace((0.0, 0.0), (2.0, 3.0)).convert(4.0)
    assert sq.volume == pytest.approx(24.0)
    assert sq.upper == pytest.approx((4.0, 6.0))


def test_lattice_locate_and_midpoints():
    lat = Lattice(BaseSpace.interval(0, 10), 10)
    assert lat.cell_volume == pytest.approx(1.0)
    assert list(lat.locate(np.array([[0.0], [0.5], [9.99], [10.0]]))) == [0, 0, 9, 9]
    assert lat.midpoints[3, 0] == pytest.approx(3.5)


def test_lattice_2d_c_order():
    lat = Lattice(BaseSpace((0, 0), (2, 2)), 2)
    assert lat.locate(np.array([[1.5, 0.5]]))[0] == 2
    assert np.allclose(lat.midpoints[2], [1.5, 0.5])


def test_coverage_is_exact_for_partial_cells():
    lat = Lattice(BaseSpace.interval(0, 10), 10)
    cov = lat.coverage(Region.box((0.25, 2.5)))
    assert cov[:3] == pytest.approx([0.75, 1.0, 0.5])
    assert cov.sum() * lat.cell_volume == pytest.approx(2.25)


def test_region_canonical_form():
    r = Region(((( 3, 4), (0, 1), (0.5, 2)),))
    assert r.axes == (((0.0, 2.0), (3.0, 4.0)),)
    assert r.volume == pytest.approx(3.0)
    with pytest.raises(OutOfWindow):
        Region.box((5, 11)).check_inside(BaseSpace.interval(0, 10))


def test_pattern_validation():
    space = BaseSpace.interval(0, 10)
    assert len(PointPattern()) == 0
    with pytest.raises(OutOfWindow):
        PointPattern.of(11.0).validate(space)
    with pytest.raises(DuplicatePoints):
        PointPattern.of(2.0, 2.0).validate(space)
    assert PointPattern.of(1.0, 2.0).permuted([1, 0]).points == ((2.0,), (1.0,))


def test_test_function_range(lattice):
    with pytest.raises(ValueError):
        TestFunction(lattice, 1.5)
    with pytest.raises(ValueError):
        TestFunction(lattice, np.zeros(7))
    h = TestFunction(lattice, lambda x: x / 10)
    assert h.values[-1] == pytest.approx(0.995)
    assert NonnegFunction.constant(lattice, 0.0).exp_neg().values == pytest.approx(1.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        QuadratureGrid(cells=0)
    with pytest.raises(ValueError):
        QuadratureGrid(tail_tolerance=0.0)
