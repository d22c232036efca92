"""Evaluation metrics, grid parsing, and the Monte-Carlo experiment runner.

Metric expectations are direct arithmetic. Runner tests count rows,
check the canonical ordering, and require byte-identical CSV output for
different worker counts (the determinism contract).
"""

import json

import numpy as np
import pytest

from lsr.bench import (
    ExperimentGrid,
    RESULTS_HEADER,
    fsn_metric,
    load_results_csv,
    misclassification_error,
    mse_metric,
    run_experiment_grid,
    write_results_csv,
)
from lsr.errors import SchemaError


class TestMseMetric:
    def test_zero_at_truth(self):
        assert mse_metric([0.6, 0.4], [0.6, 0.4]) == 0.0

    def test_opposite_corners(self):
        assert mse_metric([1.0, 0.0], [0.0, 1.0]) == pytest.approx(2.0)

    def test_direct_arithmetic(self):
        # (0.1)^2 + (0.1)^2 = 0.02
        assert mse_metric([0.7, 0.3], [0.6, 0.4]) == pytest.approx(0.02)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mse_metric([0.5, 0.5], [0.5, 0.3, 0.2])


class TestFsnMetric:
    def test_disjoint(self):
        assert fsn_metric([0, 1], [2, 3]) == 0

    def test_full_overlap(self):
        assert fsn_metric([1, 2], [1, 2]) == 2

    def test_partial_overlap(self):
        assert fsn_metric([0, 2, 5], [2, 3, 5, 7]) == 2

    def test_empty_outliers(self):
        assert fsn_metric([0, 1, 2], []) == 0


class TestMisclassification:
    def test_all_correct(self):
        assert misclassification_error([1, 2, 1], [1, 2, 1]) == 0.0

    def test_all_wrong(self):
        assert misclassification_error([1, 1], [2, 2]) == 1.0

    def test_half_wrong(self):
        assert misclassification_error([1, 2, 2, 1], [1, 2, 1, 2]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            misclassification_error([1, 2], [1, 2, 1])


def grid_dict(**overrides):
    base = {
        "m": 4,
        "n": 40,
        "N": None,
        "eps": 0.2,
        "eps_h": 0.2,
        "replications": 2,
        "base_seed": 11,
        "estimators": ["average", "rod"],
        "metrics": ["mse", "fsn"],
    }
    base.update(overrides)
    return base


class TestExperimentGrid:
    def test_scalar_axes_single_point(self):
        grid = ExperimentGrid.from_dict(grid_dict())
        points = grid.points()
        assert len(points) == 1
        assert points[0].grid_id == 0
        assert points[0].big_n == 160  # null N resolves to m * n

    def test_explicit_n_kept(self):
        grid = ExperimentGrid.from_dict(grid_dict(N=500))
        assert grid.points()[0].big_n == 500

    def test_list_axes_product_order(self):
        grid = ExperimentGrid.from_dict(
            grid_dict(m=[4, 6], eps=[0.0, 0.2, 0.4]))
        points = grid.points()
        assert len(points) == 6
        assert [p.grid_id for p in points] == list(range(6))
        # m is the outer axis, eps the inner one
        assert [(p.m, p.eps) for p in points] == [
            (4, 0.0), (4, 0.2), (4, 0.4), (6, 0.0), (6, 0.2), (6, 0.4)]

    def test_null_n_tracks_each_point(self):
        grid = ExperimentGrid.from_dict(grid_dict(m=[4, 6], n=[40, 80]))
        sizes = [(p.m, p.n, p.big_n) for p in grid.points()]
        assert sizes == [(4, 40, 160), (4, 80, 320),
                         (6, 40, 240), (6, 80, 480)]

    def test_unknown_key_rejected(self):
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(typo_key=3))

    def test_missing_required_axis_rejected(self):
        bad = grid_dict()
        del bad["m"]
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(bad)

    def test_bad_values_rejected(self):
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(replications=0))
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(eps=0.5))
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(estimators=[]))
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(estimators=["nonsense"]))
        with pytest.raises(SchemaError):
            ExperimentGrid.from_dict(grid_dict(metrics=["accuracy"]))

    def test_from_json_round_trip(self, tmp_path):
        path = tmp_path / "grid.json"
        path.write_text(json.dumps(grid_dict()))
        grid = ExperimentGrid.from_json(str(path))
        assert grid.replications == 2
        assert grid.estimators == ("average", "rod")


class TestRunExperimentGrid:
    def test_row_count_single_metric(self):
        # 3 grid points x 10 replications x 4 estimators, one metric each
        grid = ExperimentGrid.from_dict(grid_dict(
            m=4, n=100, eps=[0.0, 0.2, 0.4], replications=10,
            estimators=["single", "average", "trim", "rod"],
            metrics=["mse"]))
        rows = run_experiment_grid(grid)
        assert len(rows) == 120
        assert all(row[-1] == "ok" for row in rows)

    def test_canonical_row_order(self):
        grid = ExperimentGrid.from_dict(grid_dict(
            eps=[0.0, 0.2], replications=2,
            estimators=["rod", "average"], metrics=["fsn", "mse"]))
        rows = run_experiment_grid(grid)
        keys = [(row[0], row[6], row[7], row[8]) for row in rows]
        estimator_rank = {"rod": 0, "average": 1}
        metric_rank = {"fsn": 0, "mse": 1}
        ranked = [(g, r, estimator_rank[e], metric_rank[x])
                  for g, r, e, x in keys]
        assert ranked == sorted(ranked)

    def test_identical_reruns(self):
        grid = ExperimentGrid.from_dict(grid_dict())
        assert run_experiment_grid(grid) == run_experiment_grid(grid)

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        grid = ExperimentGrid.from_dict(grid_dict(
            m=5, n=40, eps=[0.0, 0.2], replications=2,
            estimators=["average", "rod", "oracle"]))
        solo = tmp_path / "solo.csv"
        pooled = tmp_path / "pooled.csv"
        write_results_csv(run_experiment_grid(grid, workers=1), str(solo))
        write_results_csv(run_experiment_grid(grid, workers=2), str(pooled))
        assert solo.read_bytes() == pooled.read_bytes()

    def test_oracle_fsn_is_zero(self):
        grid = ExperimentGrid.from_dict(grid_dict(
            m=5, n=40, eps=0.4, replications=3,
            estimators=["oracle"], metrics=["fsn"]))
        rows = run_experiment_grid(grid)
        assert len(rows) == 3
        assert all(float(row[9]) == 0.0 for row in rows)

    def test_failure_rows_keep_running(self):
        # n = 3 over 2 classes always leaves a class under 2 samples, so
        # every replication at that point fails while n = 40 still succeeds
        grid = ExperimentGrid.from_dict(grid_dict(
            m=4, n=[3, 40], eps=0.0, replications=2,
            estimators=["average"], metrics=["mse"]))
        rows = run_experiment_grid(grid)
        assert len(rows) == 4
        failed = [row for row in rows if row[2] == 3]
        clean = [row for row in rows if row[2] == 40]
        assert len(failed) == 2 and len(clean) == 2
        assert all(row[-1] == "ok" for row in clean)
        assert all(row[-1] == "degenerate_source" and row[9] is None
                   for row in failed)

    def test_missing_base_seed_rejected(self):
        grid = ExperimentGrid.from_dict(grid_dict(base_seed=None))
        with pytest.raises(ValueError):
            run_experiment_grid(grid)

    def test_seed_override(self):
        grid = ExperimentGrid.from_dict(grid_dict(base_seed=None))
        rows = run_experiment_grid(grid, base_seed=11)
        assert rows == run_experiment_grid(
            ExperimentGrid.from_dict(grid_dict()))


class TestResultsCsv:
    def test_round_trip(self, tmp_path):
        grid = ExperimentGrid.from_dict(grid_dict())
        rows = run_experiment_grid(grid)
        path = tmp_path / "results.csv"
        write_results_csv(rows, str(path))
        loaded = load_results_csv(str(path))
        assert loaded == rows

    def test_header_written(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results_csv([], str(path))
        assert path.read_text().strip() == ",".join(RESULTS_HEADER)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("grid_id,m,n\n")
        with pytest.raises(SchemaError):
            load_results_csv(str(path))
