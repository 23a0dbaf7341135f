import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from gpsobol.errors import SchemaError, ShapeMismatch
from gpsobol.space import (
    ParameterSpace,
    build_design,
    design_row_count,
    max_sobol_dimension,
    read_design_csv,
    scale_to_space,
    sobol_points,
    to_unit,
)


@pytest.mark.filterwarnings("ignore:The balance properties")
class TestSobolPoints:
    def test_skip_one_first_rows(self):
        pts = sobol_points(1, 3, skip=1).points
        np.testing.assert_array_equal(pts, [[0.5], [0.75], [0.25]])

    def test_first_point_is_origin(self):
        np.testing.assert_array_equal(sobol_points(2, 1).points, [[0.0, 0.0]])

    def test_coordinate_means(self):
        pts = sobol_points(3, 64).points
        assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.02)

    @pytest.mark.parametrize("d", [1, 2, 6, 12, 40, 200])
    @pytest.mark.parametrize("skip", [0, 7, 1000])
    def test_matches_independent_generator(self, d, skip):
        eng = qmc.Sobol(d, scramble=False, bits=32)
        if skip:
            eng.fast_forward(skip)
        np.testing.assert_array_equal(sobol_points(d, 300, skip).points, eng.random(300))

    def test_highest_dimension(self):
        d = max_sobol_dimension()
        assert d >= 1024
        eng = qmc.Sobol(d, scramble=False, bits=32)
        np.testing.assert_array_equal(sobol_points(d, 17).points, eng.random(17))

    def test_points_in_unit_cube(self):
        pts = sobol_points(5, 1000).points
        assert pts.min() >= 0.0 and pts.max() < 1.0


class TestScaling:
    def test_table_midpoint(self):
        space = ParameterSpace.from_bounds([(3.2e-5, 128e-5)], ["P_v"])
        assert scale_to_space(np.array([[0.5]]), space)[0, 0] == pytest.approx(65.6e-5, rel=1e-12)

    def test_zero_maps_to_lower(self):
        space = ParameterSpace.from_bounds([(-3.7, 11.3), (1e-8, 2e-8)])
        np.testing.assert_array_equal(scale_to_space(np.zeros((1, 2)), space)[0], [-3.7, 1e-8])

    def test_quarter(self):
        space = ParameterSpace.from_bounds([(0.0, 4.0)])
        assert scale_to_space(np.array([[0.25]]), space)[0, 0] == 1.0

    def test_wrong_width(self):
        space = ParameterSpace.from_bounds([(0.0, 1.0), (0.0, 1.0)])
        with pytest.raises(ShapeMismatch):
            scale_to_space(np.zeros((3, 3)), space)

    @settings(max_examples=50, deadline=None)
    @given(lo=st.floats(-1e6, 1e6), width=st.floats(1e-6, 1e6),
           u=st.lists(st.floats(0, 1), min_size=1, max_size=10))
    def test_round_trip(self, lo, width, u):
        space = ParameterSpace.from_bounds([(lo, lo + width)])
        x = scale_to_space(np.array(u)[:, None], space)
        assert np.all(x >= lo) and np.all(x <= lo + width)
        np.testing.assert_allclose(to_unit(x, space)[:, 0], u, atol=1e-9 * (1 + abs(lo) / width))

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            ParameterSpace.from_bounds([(1.0, 1.0)])


class TestPickFreezeDesign:
    def test_hybrid_columns(self):
        space = ParameterSpace.from_bounds([(0, 1)] * 3)
        d = build_design(space, 32)
        np.testing.assert_array_equal(d.AB[1][:, 1], d.B[:, 1])
        np.testing.assert_array_equal(d.AB[1][:, [0, 2]], d.A[:, [0, 2]])

    def test_mirror_hybrid_columns(self):
        space = ParameterSpace.from_bounds([(0, 1)] * 3)
        d = build_design(space, 16, include_second_order=True)
        np.testing.assert_array_equal(d.BA[2][:, 2], d.A[:, 2])
        np.testing.assert_array_equal(d.BA[2][:, :2], d.B[:, :2])

    @pytest.mark.parametrize("second, rows", [(False, 80000), (True, 140000)])
    def test_row_counts(self, second, rows):
        space = ParameterSpace.from_bounds([(0, 1)] * 6)
        d = build_design(space, 10000, include_second_order=second)
        assert d.n_rows == rows == design_row_count(6, 10000, second)
        assert d.rows().shape == (rows, 6)

    def test_blocks_come_from_one_sequence(self):
        space = ParameterSpace.from_bounds([(0, 1)] * 2)
        d = build_design(space, 8)
        pts = sobol_points(4, 8).points
        np.testing.assert_array_equal(d.A, pts[:, :2])
        np.testing.assert_array_equal(d.B, pts[:, 2:])

    def test_split_inverts_rows(self):
        space = ParameterSpace.from_bounds([(0, 1)] * 3)
        d = build_design(space, 10, include_second_order=True)
        parts = d.split(np.arange(d.n_rows, dtype=float))
        assert parts["A"][0] == 0 and parts["B"][0] == 10
        assert len(parts["AB"]) == 3 and len(parts["BA"]) == 3
        assert parts["BA"][2][-1] == d.n_rows - 1

    def test_rows_for_groups_partners(self):
        space = ParameterSpace.from_bounds([(0, 1)] * 2)
        d = build_design(space, 5, include_second_order=True)
        rows = d.rows_for(np.array([3]))
        blocks = list(d.block_matrices())
        np.testing.assert_array_equal(rows, np.array([b[3] for b in blocks]))

    def test_csv_round_trip(self, tmp_path):
        space = ParameterSpace.from_bounds([(-np.pi, np.pi)] * 3, ["a", "b", "c"])
        d = build_design(space, 20, include_second_order=True)
        d.to_csv(tmp_path / "d.csv", {"config_hash": "abc"})
        back = read_design_csv(tmp_path / "d.csv", space)
        np.testing.assert_array_equal(back.rows(), d.rows())
        header = (tmp_path / "d.csv").read_text().splitlines()[1]
        assert header == "block,a,b,c"

    def test_csv_wrong_header(self, tmp_path):
        space = ParameterSpace.from_bounds([(0, 1)] * 2, ["a", "b"])
        build_design(space, 4).to_csv(tmp_path / "d.csv")
        with pytest.raises(SchemaError):
            read_design_csv(tmp_path / "d.csv", ParameterSpace.from_bounds([(0, 1)] * 2, ["b", "a"]))

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            build_design(ParameterSpace.from_bounds([(0, 1)]), 1)
