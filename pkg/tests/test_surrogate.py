import numpy as np
import pytest

from romtt import nn
from romtt.errors import DataError
from romtt.surrogate import (
    fit_podnn,
    fit_podnn_slice,
    fit_rbf_slice,
    load_slice,
    pod_basis,
    pod_project_error,
    predict_podnn,
    save_slice,
)


class TestRbfSlice:
    def test_two_point_interpolation(self):
        params = np.array([[0.0, 0.0], [1.0, 1.0]])
        fields = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        s = fit_rbf_slice(params, fields, t_slice=0.5)
        for p, f in zip(params, fields):
            err = np.linalg.norm(s.predict(p) - f) / np.linalg.norm(f)
            assert err <= 1e-8

    def test_linear_field_at_centroid(self):
        # fields depend linearly on the parameters; a smooth interpolant
        # should land close to the linear map at the centroid
        params = np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.2]]
        )
        a = np.array([[2.0, -1.0], [0.5, 3.0], [1.0, 1.0]])
        fields = params @ a.T + 4.0
        s = fit_rbf_slice(params, fields, t_slice=0.0)
        centroid = params.mean(axis=0)
        expected = a @ centroid + 4.0
        err = np.linalg.norm(s.predict(centroid) - expected)
        assert err / np.linalg.norm(expected) <= 5e-2

    def test_constant_fields_reproduced(self):
        rng = np.random.default_rng(0)
        params = rng.uniform(0, 1, (6, 2))
        fields = np.full((6, 4), 7.0)
        s = fit_rbf_slice(params, fields, t_slice=0.0)
        query = np.array([0.4, 0.6])
        assert np.linalg.norm(s.predict(query) - 7.0) / 7.0 <= 1e-8

    def test_duplicate_points_rejected_with_names(self):
        params = np.array([[0.1, 0.2], [0.5, 0.5], [0.1, 0.2]])
        fields = np.zeros((3, 2))
        with pytest.raises(DataError, match="rows 0 and 2"):
            fit_rbf_slice(params, fields, t_slice=0.0)

    def test_train_fit_error_recorded(self):
        rng = np.random.default_rng(1)
        params = rng.uniform(0, 1, (10, 2))
        fields = rng.standard_normal((10, 5))
        s = fit_rbf_slice(params, fields, t_slice=1.0)
        assert s.train_fit_error <= 1e-6

    def test_serialization_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        params = rng.uniform(0, 1, (8, 2))
        fields = rng.standard_normal((8, 6))
        s = fit_rbf_slice(params, fields, t_slice=0.25)
        save_slice(s, tmp_path / "s0")
        back = load_slice(tmp_path / "s0")
        q = np.array([0.3, 0.7])
        assert np.array_equal(s.predict(q), back.predict(q))
        assert back.t_slice == 0.25


class TestPodBasis:
    def test_rank_one(self):
        rng = np.random.default_rng(3)
        s = np.outer(rng.standard_normal(8), rng.standard_normal(5))
        basis = pod_basis(s, 1e-8)
        assert basis.rank == 1
        assert not basis.degenerate

    def test_full_rank_zero_tolerance(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal((10, 6))
        basis = pod_basis(s, 0.0)
        assert basis.rank == 6
        proj = basis.modes @ (basis.modes.T @ s)
        assert np.max(np.abs(proj - s)) <= 1e-10

    def test_zero_matrix_flagged(self):
        basis = pod_basis(np.zeros((5, 3)), 1e-8)
        assert basis.rank == 1
        assert basis.degenerate

    def test_energy_rule_minimality(self):
        rng = np.random.default_rng(5)
        s = rng.standard_normal((12, 8)) @ np.diag([10, 5, 2, 1, .5, .2, .1, .05])
        tol = 1e-3
        basis = pod_basis(s, tol)
        sv2 = basis.singular_values**2
        total = sv2.sum()
        assert sv2[basis.rank:].sum() / total <= tol
        if basis.rank > 1:
            assert sv2[basis.rank - 1:].sum() / total > tol

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(6)
        basis = pod_basis(rng.standard_normal((9, 7)), 1e-6)
        gram = basis.modes.T @ basis.modes
        assert np.max(np.abs(gram - np.eye(basis.rank))) <= 1e-10


class TestProjectionError:
    def test_in_span_is_zero(self):
        rng = np.random.default_rng(7)
        basis = pod_basis(rng.standard_normal((8, 4)), 0.0)
        u = basis.modes @ rng.standard_normal(basis.rank)
        assert pod_project_error(basis, u) <= 1e-12

    def test_orthogonal_is_one(self):
        basis = pod_basis(np.eye(4)[:, :2], 0.0)
        u = np.array([0.0, 0.0, 1.0, 1.0])
        assert pod_project_error(basis, u) == pytest.approx(1.0, abs=1e-12)

    def test_zero_vector_defined_as_zero(self):
        basis = pod_basis(np.eye(3), 0.0)
        assert pod_project_error(basis, np.zeros(3)) == 0.0

    def test_matches_gram_schmidt_residual(self):
        rng = np.random.default_rng(8)
        basis = pod_basis(rng.standard_normal((10, 3)), 0.0)
        u = rng.standard_normal(10)
        resid = u.copy()
        for k in range(basis.rank):  # explicit one-column-at-a-time removal
            v = basis.modes[:, k]
            resid = resid - np.dot(resid, v) * v
        expected = np.linalg.norm(resid) / np.linalg.norm(u)
        assert pod_project_error(basis, u) == pytest.approx(expected, abs=1e-10)

    def test_bounded_by_one(self):
        rng = np.random.default_rng(9)
        basis = pod_basis(rng.standard_normal((7, 4)), 1e-2)
        for _ in range(20):
            err = pod_project_error(basis, rng.standard_normal(7))
            assert 0.0 <= err <= 1.0 + 1e-12


class TestPodnn:
    def test_constant_field_reproduced(self):
        params = np.array([[0.1], [0.4], [0.9]])
        times = np.array([0.0, 0.5, 1.0])
        field = np.full(6, 3.0)
        tensor = np.broadcast_to(field[None, :, None], (3, 6, 3)).copy()
        cfg = nn.TrainConfig(epochs=2500, learning_rate=0.02, seed=0)
        model = fit_podnn(params, times, tensor, 1e-8, cfg)
        pred = predict_podnn(model, np.array([0.6]), 0.7)
        assert np.linalg.norm(pred - field) / np.linalg.norm(field) <= 1e-3

    def test_training_points_fit_within_loss_bound(self):
        rng = np.random.default_rng(10)
        params = rng.uniform(0, 1, (4, 2))
        times = np.linspace(0, 1, 5)
        tensor = rng.standard_normal((4, 8, 5))
        cfg = nn.TrainConfig(epochs=3000, learning_rate=0.01, seed=1)
        model = fit_podnn(params, times, tensor, 1e-10, cfg)
        # self-consistency: recorded loss bounds the per-sample error
        worst = 0.0
        for i, mu in enumerate(params):
            for j, t in enumerate(times):
                pred = predict_podnn(model, mu, t)
                worst = max(worst, np.sum((pred - tensor[i, :, j]) ** 2))
        assert worst <= model.basis.rank * 8 * model.train_loss * tensor.size

    def test_podnn_slice_interface(self, tmp_path):
        rng = np.random.default_rng(11)
        params = rng.uniform(0, 1, (6, 2))
        fields = np.outer(params[:, 0], np.ones(5)) + 1.0
        cfg = nn.TrainConfig(epochs=1500, learning_rate=0.02, seed=2)
        s = fit_podnn_slice(params, fields, t_slice=0.5, cfg=cfg)
        assert s.t_slice == 0.5
        assert s.predict(params[0]).shape == (5,)
        save_slice(s, tmp_path / "pn")
        back = load_slice(tmp_path / "pn")
        q = params[2]
        assert np.allclose(back.predict(q), s.predict(q))
