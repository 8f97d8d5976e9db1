import numpy as np
import pytest

from romtt.tt import (
    TTCores,
    load_tt_cores,
    save_tt_cores,
    tt_eval,
    tt_reconstruct,
    tt_svd,
)


def rank_one_tensor(rng, shape):
    a = rng.standard_normal(shape[0])
    b = rng.standard_normal(shape[1])
    c = rng.standard_normal(shape[2])
    return np.einsum("i,j,k->ijk", a, b, c)


class TestTTSVD:
    def test_rank_one_exact(self):
        rng = np.random.default_rng(0)
        t = rank_one_tensor(rng, (4, 5, 6))
        cores = tt_svd(t, 1e-8)
        assert cores.ranks == (1, 1)
        err = np.linalg.norm(tt_reconstruct(cores) - t) / np.linalg.norm(t)
        assert err <= 1e-12

    def test_random_tensor_tight_tolerance(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal((4, 5, 6))
        cores = tt_svd(t, 1e-12)
        r1, r2 = cores.ranks
        assert r1 <= 4 and r2 <= 6  # caps from the two unfolding shapes
        err = np.linalg.norm(tt_reconstruct(cores) - t) / np.linalg.norm(t)
        assert err <= 1e-10

    def test_error_bound_holds_across_tolerances(self):
        rng = np.random.default_rng(2)
        t = rng.standard_normal((6, 7, 8))
        for eps in (1e-1, 1e-2, 1e-4, 1e-8):
            cores = tt_svd(t, eps)
            err = np.linalg.norm(tt_reconstruct(cores) - t) / np.linalg.norm(t)
            assert err <= eps
            assert cores.rel_error == pytest.approx(err, rel=1e-6, abs=1e-14)

    def test_rank_monotonicity_in_tolerance(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((6, 7, 8))
        prev = (0, 0)
        for eps in (1e-1, 1e-3, 1e-6, 1e-10):
            ranks = tt_svd(t, eps).ranks
            assert ranks[0] >= prev[0] and ranks[1] >= prev[1]
            prev = ranks

    def test_left_factors_orthonormal(self):
        rng = np.random.default_rng(4)
        cores = tt_svd(rng.standard_normal((5, 6, 7)), 1e-10)
        g1 = cores.param_core
        assert np.allclose(g1.T @ g1, np.eye(g1.shape[1]), atol=1e-12)
        left = cores.space_core.reshape(-1, cores.ranks[1])
        assert np.allclose(left.T @ left, np.eye(cores.ranks[1]), atol=1e-12)

    def test_degenerate_and_bad_args(self):
        with pytest.raises(ValueError):
            tt_svd(np.zeros((0, 2, 2)), 1e-8)
        with pytest.raises(ValueError):
            tt_svd(np.zeros((2, 2, 2)), 0.0)


class TestReconstructAndEval:
    def test_scalar_contraction(self):
        v = np.array([1.0, 2.0, 3.0])
        cores = TTCores(
            param_core=np.array([[2.0]]),
            space_core=v.reshape(1, 3, 1),
            time_core=np.array([[3.0]]),
            eps_tt=1e-8,
            rel_error=0.0,
        )
        assert np.allclose(tt_reconstruct(cores)[0, :, 0], 6.0 * v)

    def test_zero_time_core_annihilates(self):
        rng = np.random.default_rng(5)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-10)
        zeroed = TTCores(
            param_core=cores.param_core,
            space_core=cores.space_core,
            time_core=np.zeros_like(cores.time_core),
            eps_tt=cores.eps_tt,
            rel_error=0.0,
        )
        assert np.array_equal(tt_reconstruct(zeroed),
                              np.zeros((3, 4, 5)))

    def test_eval_matches_full_contraction(self):
        rng = np.random.default_rng(6)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-10)
        full = tt_reconstruct(cores)
        slice_ = tt_eval(
            cores.param_core[0], cores, cores.time_core[:, 0]
        )
        assert np.max(np.abs(slice_ - full[0, :, 0])) <= 1e-12

    def test_eval_zero_row(self):
        rng = np.random.default_rng(7)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-10)
        out = tt_eval(np.zeros(cores.ranks[0]), cores,
                      cores.time_core[:, 1])
        assert np.array_equal(out, np.zeros(4))

    def test_eval_bilinear(self):
        rng = np.random.default_rng(8)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-10)
        r1, r2 = cores.ranks
        g1 = rng.standard_normal(r1)
        g1b = rng.standard_normal(r1)
        g3 = rng.standard_normal(r2)
        double = tt_eval(2.0 * g1, cores, g3)
        assert np.allclose(double, 2.0 * tt_eval(g1, cores, g3), rtol=1e-12)
        add = tt_eval(g1 + g1b, cores, g3)
        assert np.allclose(
            add, tt_eval(g1, cores, g3) + tt_eval(g1b, cores, g3),
            rtol=1e-12, atol=1e-12,
        )

    def test_shape_mismatch(self):
        rng = np.random.default_rng(9)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-10)
        with pytest.raises(ValueError):
            tt_eval(np.zeros(cores.ranks[0] + 1), cores,
                    cores.time_core[:, 0])


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        cores = tt_svd(rng.standard_normal((3, 4, 5)), 1e-6)
        save_tt_cores(cores, tmp_path / "tt")
        back = load_tt_cores(tmp_path / "tt")
        assert np.array_equal(back.param_core, cores.param_core)
        assert np.array_equal(back.space_core, cores.space_core)
        assert np.array_equal(back.time_core, cores.time_core)
        assert back.eps_tt == cores.eps_tt
