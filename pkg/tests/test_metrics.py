import numpy as np
import pytest

from romtt.errors import DataError
from romtt.metrics import ErrorReport, aggregate_errors, relative_error


class TestRelativeError:
    def test_exact_prediction(self):
        u = np.array([1.0, 2.0, 3.0])
        assert relative_error(u, u) == 0.0

    def test_zero_prediction(self):
        assert relative_error(np.array([3.0, 4.0]), np.zeros(2)) == 1.0

    def test_orthogonal_unit_vectors(self):
        err = relative_error(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert err == pytest.approx(np.sqrt(2.0))

    def test_zero_reference_falls_back_to_absolute(self):
        err = relative_error(np.zeros(3), np.array([0.0, 3.0, 4.0]))
        assert err == pytest.approx(5.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            relative_error(np.zeros(3), np.zeros(4))


class TestAggregates:
    def test_constant_table(self):
        per_time, per_param, global_mean = aggregate_errors(
            np.full((4, 5), 0.25)
        )
        assert np.allclose(per_time, 0.25)
        assert np.allclose(per_param, 0.25)
        assert global_mean == pytest.approx(0.25)

    def test_hand_computed_two_by_two(self):
        table = np.array([[0.0, 1.0], [0.0, 1.0]])
        per_time, per_param, global_mean = aggregate_errors(table)
        assert per_time.tolist() == [0.0, 1.0]
        assert per_param.tolist() == [0.5, 0.5]
        assert global_mean == 0.5

    def test_global_is_time_mean_of_param_means(self):
        rng = np.random.default_rng(0)
        table = rng.uniform(0, 1, (7, 9))
        per_time, _, global_mean = aggregate_errors(table)
        assert global_mean == pytest.approx(per_time.mean(), rel=1e-15)

    def test_missing_cells_listed(self):
        table = np.ones((3, 3))
        table[1, 2] = np.nan
        with pytest.raises(DataError, match=r"\(1,2\)"):
            aggregate_errors(table)


class TestErrorReport:
    def test_aggregates_recomputable(self):
        rng = np.random.default_rng(1)
        errors = rng.uniform(0, 1, (5, 8))
        report = ErrorReport(
            method="LF-TTOI",
            params=rng.uniform(0, 1, (5, 2)),
            times=np.linspace(0, 1, 8),
            errors=errors,
        )
        per_time, per_param, global_mean = aggregate_errors(errors)
        assert np.max(np.abs(report.per_time - per_time)) <= 1e-12
        assert np.max(np.abs(report.per_param - per_param)) <= 1e-12
        assert abs(report.global_mean - global_mean) <= 1e-12
