import json

import numpy as np
import pytest

from gpsobol.bench import Ishigami, LinearAdditive
from gpsobol.errors import DesignIncomplete
from gpsobol.estimators import DesignEvaluations, all_indices
from gpsobol.gp import FitConfig, KernelKind, KernelSpec, TrainingSet, fit
from gpsobol.space import build_design, to_unit, training_points
from gpsobol.uncertainty import (
    IndexMatrix,
    RunInfo,
    Target,
    bootstrap_indices,
    bootstrap_weights,
    build_report,
    compute_index_matrix,
    decompose,
    default_targets,
    index_matrix_from_values,
)


class TestBootstrap:
    def test_reproducible(self):
        np.testing.assert_array_equal(bootstrap_indices(50, 1, 3), bootstrap_indices(50, 1, 3))

    def test_prefix_stable(self):
        np.testing.assert_array_equal(bootstrap_indices(40, 5, 1)[:2], bootstrap_indices(40, 2, 1))

    def test_range(self):
        idx = bootstrap_indices(17, 30, 0)
        assert idx.min() >= 0 and idx.max() < 17 and idx.shape == (30, 17)

    def test_distinct_fraction(self):
        idx = bootstrap_indices(10**4, 500, 2)
        frac = np.mean([np.unique(row).size / 10**4 for row in idx])
        assert frac == pytest.approx(1 - np.exp(-1), abs=0.01)

    def test_weights_are_counts(self):
        w = bootstrap_weights(20, 4, 5)
        idx = bootstrap_indices(20, 4, 5)
        assert np.all(w.sum(axis=1) == 20)
        assert w[2, idx[2, 0]] == np.sum(idx[2] == idx[2, 0])


class TestDecompose:
    def test_constant(self):
        est = decompose(np.full((4, 6), 0.3))
        assert est.mean == pytest.approx(0.3)
        assert est.var_gp == 0 and est.var_mc == 0 and est.var_total == 0

    def test_varies_with_realisation_only(self):
        col = np.array([0.1, 0.4, 0.2, 0.7])
        est = decompose(np.tile(col[:, None], (1, 5)))
        assert est.var_mc == pytest.approx(0.0, abs=1e-30)
        assert est.var_gp == pytest.approx(np.var(col, ddof=1))

    def test_varies_with_bootstrap_only(self):
        row = np.array([0.1, 0.4, 0.2, 0.7, 0.3])
        est = decompose(np.tile(row, (3, 1)))
        assert est.var_gp == pytest.approx(0.0, abs=1e-30)
        assert est.var_mc == pytest.approx(np.var(row, ddof=1))

    def test_normal_interval(self):
        rng = np.random.default_rng(0)
        est = decompose(rng.normal(0.5, 0.1, (30, 40)))
        assert est.ci_high - est.mean == pytest.approx(1.959964 * np.sqrt(est.var_total), rel=1e-6)
        assert est.var_total == pytest.approx(est.var_gp + est.var_mc)

    def test_percentile_interval(self):
        s = np.arange(100, dtype=float).reshape(10, 10)
        est = decompose(s, ci="percentile")
        assert est.ci_low == pytest.approx(np.percentile(s, 2.5))

    def test_missing_cells_dropped(self):
        s = np.full((3, 4), 0.2)
        s[1, 2] = np.nan
        est = decompose(s)
        assert est.n_missing == 1 and est.mean == pytest.approx(0.2)

    def test_too_small(self):
        with pytest.raises(ValueError):
            decompose(np.zeros((1, 5)))
        with pytest.raises(ValueError):
            decompose(np.zeros((5, 1)))

    def test_mean_only(self):
        m = IndexMatrix(Target("second", 0, 1), np.array([[0.1, 0.2, 0.3]]), np.array([0.2]), True)
        est = decompose(m)
        assert est.var_gp is None and est.ci_gp is None and est.mean_only
        assert est.to_dict()["var_gp"] is None


@pytest.fixture(scope="module")
def linear_design():
    fn = LinearAdditive((1, 2))
    design = build_design(fn.space, 300, include_second_order=True)
    return fn, design, fn.evaluate(design.rows())


class TestExactValues:
    def test_matches_explicit_resampling(self, linear_design):
        fn, design, y = linear_design
        mats = index_matrix_from_values(y, design, 6, seed=9)
        ev = DesignEvaluations.from_design(design, y)
        idx = bootstrap_indices(design.m, 6, 9)
        for b in range(6):
            first, total, s2 = all_indices(ev.resample(idx[b]))
            assert mats[Target("first", 1)].s[0, b] == pytest.approx(first[1], abs=1e-12)
            assert mats[Target("total", 0)].s[0, b] == pytest.approx(total[0], abs=1e-12)
            assert mats[Target("second", 0, 1)].s[0, b] == pytest.approx(s2[0, 1], abs=1e-12)
        full_first, _, _ = all_indices(ev)
        assert mats[Target("first", 0)].point[0] == pytest.approx(full_first[0], abs=1e-12)

    def test_second_order_needs_mirror(self):
        fn = LinearAdditive((1, 2))
        design = build_design(fn.space, 16)
        with pytest.raises(DesignIncomplete):
            index_matrix_from_values(fn.evaluate(design.rows()), design, 3, 0,
                                     targets=[Target("second", 0, 1)])

    def test_default_targets(self):
        assert len(default_targets(3, True)) == 3 + 3 + 3
        assert Target("second", 0, 2).label == "S1,3" and Target("total", 1).label == "ST2"


def ishigami_gp(n, kind=KernelKind.SQUARED_EXPONENTIAL, **cfg):
    fn = Ishigami()
    X = training_points(fn.space, n)
    return fit(TrainingSet.from_raw(to_unit(X, fn.space), fn.evaluate(X)), KernelSpec(kind, 3),
               FitConfig(**{"restarts": 3, **cfg}), space=fn.space)


@pytest.fixture(scope="module")
def small_gp():
    return ishigami_gp(40)


class TestRealisationMatrix:
    def test_thread_count_independent(self, small_gp):
        design = build_design(Ishigami().space, 200)
        a = compute_index_matrix(small_gp, design, 8, 10, seed=1, block_size=100, workers=1)
        b = compute_index_matrix(small_gp, design, 8, 10, seed=1, block_size=100, workers=3)
        for t in a:
            assert a[t].s.tobytes() == b[t].s.tobytes()

    def test_repeatable(self, small_gp):
        design = build_design(Ishigami().space, 100)
        a = compute_index_matrix(small_gp, design, 4, 5, seed=2)
        b = compute_index_matrix(small_gp, design, 4, 5, seed=2)
        assert all(a[t].s.tobytes() == b[t].s.tobytes() for t in a)

    def test_shapes_and_info(self, small_gp):
        design = build_design(Ishigami().space, 100, include_second_order=True)
        info = RunInfo()
        mats = compute_index_matrix(small_gp, design, 5, 7, seed=0, block_size=80, info=info)
        assert len(mats) == 9
        assert all(m.s.shape == (5, 7) for m in mats.values())
        assert info.blocks == 100 // (80 // 8)

    def test_mean_only(self, small_gp):
        design = build_design(Ishigami().space, 100, include_second_order=True)
        mats = compute_index_matrix(small_gp, design, 50, 7, seed=0, mean_only=True)
        assert all(m.s.shape == (1, 7) and m.mean_only for m in mats.values())

    def test_interpolating_gp_has_no_metamodel_spread(self):
        fn = LinearAdditive((1, 2))
        X = training_points(fn.space, 30)
        gp = fit(TrainingSet.from_raw(to_unit(X, fn.space), fn.evaluate(X)),
                 KernelSpec(KernelKind.SQUARED_EXPONENTIAL, 2),
                 FitConfig(restarts=2, nugget_bounds=(1e-10, 1e-10)))
        design = build_design(fn.space, 256)
        mats = compute_index_matrix(gp, design, 20, 30, seed=3, targets=[Target("first", 0)])
        est = decompose(mats[Target("first", 0)])
        assert est.var_gp < 1e-10
        assert est.mean == pytest.approx(0.2, abs=0.05)

    def test_mc_variance_shrinks_with_m(self, small_gp):
        space = Ishigami().space
        ratios = []
        for seed in range(3):
            v = [decompose(compute_index_matrix(small_gp, build_design(space, m), 4, 60, seed,
                                                targets=[Target("first", 1)])[Target("first", 1)]).var_mc
                 for m in (256, 1024)]
            ratios.append(v[0] / v[1])
        assert 2.0 < np.mean(ratios) < 8.0


class TestReport:
    def test_json_and_csv(self):
        rng = np.random.default_rng(0)
        mats = {Target("first", 0): rng.normal(0.3, 0.01, (4, 5)),
                Target("total", 0): rng.normal(0.4, 0.01, (4, 5)),
                Target("first", 1): rng.normal(0.5, 0.01, (4, 5)),
                Target("total", 1): rng.normal(0.6, 0.01, (4, 5)),
                Target("second", 0, 1): IndexMatrix(Target("second", 0, 1),
                                                    rng.normal(0.1, 0.01, (1, 5)), np.zeros(1), True)}
        report = build_report(mats, ["a", "b"], {"seed": 1})
        doc = json.loads(report.to_json())
        assert doc["format"] == "gpsobol.sobol_report"
        assert set(doc["parameters"]) == {"a", "b"}
        assert doc["parameters"]["b"]["total"]["mean"] == pytest.approx(0.6, abs=0.02)
        assert doc["second_order"][0]["i"] == "a" and doc["second_order"][0]["var_gp"] is None
        assert doc["third_order"] is None
        header, rows = report.csv_rows()
        assert header[0] == "order" and len(rows) == 5
        np.testing.assert_allclose(report.means("first"), [0.3, 0.5], atol=0.02)
        assert report.get("second", 1, 0).mean_only
