import json
import os

import numpy as np
import pytest

from romtt.errors import ConfigError, DataError, FormatError
from romtt.fom import (
    FOMConfig,
    GridSpec,
    SnapshotDataset,
    generate_dataset,
    load_dataset,
    save_dataset,
    solve_advdiff,
    solve_heat,
    solve_heat_steady,
)

HEAT_GRID = GridSpec(20, 20, (-1, 1, -1, 1))
ADV_GRID = GridSpec(24, 24, (0, 1, 0, 1))


class TestHeatSolver:
    def test_null_forcing_stays_exactly_zero(self):
        states = solve_heat(1.0, 0.0, HEAT_GRID, 0.05, 1.0)
        assert np.max(np.abs(states)) == 0.0

    def test_converges_to_steady_state(self):
        steady = solve_heat_steady(1.0, 1.0, HEAT_GRID)
        states = solve_heat(1.0, 1.0, HEAT_GRID, 0.05, 12.0)
        rel = np.linalg.norm(states[-1] - steady) / np.linalg.norm(steady)
        assert rel <= 1e-3

    def test_spatial_convergence_order(self):
        # manufactured solution with uniform conductivity and zero flux:
        # u = exp(-t) cos(pi x) cos(pi (y+1)/4) satisfies every boundary
        # condition, and the matching source is proportional to u
        c = np.pi**2 + np.pi**2 / 16 - 1.0

        def exact(x, y, t):
            return np.exp(-t) * np.cos(np.pi * x) * np.cos(np.pi * (y + 1) / 4)

        def max_err(n):
            grid = GridSpec(n, n, (-1, 1, -1, 1))
            states = solve_heat(
                1.0, 0.0, grid, 1e-3, 0.2,
                source=lambda x, y, t: c * exact(x, y, t),
                initial=lambda x, y: exact(x, y, 0.0),
            )
            xs, ys = grid.nodes()
            return np.max(np.abs(states[-1] - exact(xs, ys, 0.2)))

        order = np.log2(max_err(16) / max_err(32))
        assert order >= 1.7

    def test_sign_follows_flux(self):
        down = solve_heat(3.0, -0.7, HEAT_GRID, 0.05, 3.0)
        assert down.max() <= 1e-12
        up = solve_heat(0.3, 0.9, HEAT_GRID, 0.05, 3.0)
        assert up.min() >= -1e-12

    def test_deterministic(self):
        a = solve_heat(2.0, 0.5, HEAT_GRID, 0.05, 1.0)
        b = solve_heat(2.0, 0.5, HEAT_GRID, 0.05, 1.0)
        assert np.array_equal(a, b)

    def test_out_of_range_warns(self):
        with pytest.warns(UserWarning):
            solve_heat(50.0, 0.5, HEAT_GRID, 0.05, 0.1)


class TestAdvdiffSolver:
    def test_frozen_dynamics_exact(self):
        states = solve_advdiff(
            0.35, 0.35, ADV_GRID, 0.02, 0.2,
            diffusion=0.0, advection_on=False,
        )
        assert np.max(np.abs(states - states[0])) == 0.0

    def test_discrete_maximum_principle_every_step(self):
        states = solve_advdiff(0.35, 0.35, ADV_GRID, 0.02, 2.0)
        # boundary data (x-1)^2+(y-1)^2 spans [0, 2] on the unit square
        for m in range(1, states.shape[0]):
            lo = min(states[m - 1].min(), 0.0)
            hi = max(states[m - 1].max(), 2.0)
            assert states[m].min() >= lo - 1e-10
            assert states[m].max() <= hi + 1e-10

    def test_grid_refinement_agreement(self):
        fine = GridSpec(48, 48, (0, 1, 0, 1))
        coarse_states = solve_advdiff(0.35, 0.35, ADV_GRID, 0.02, 1.0)
        fine_states = solve_advdiff(0.35, 0.35, fine, 0.02, 1.0)
        u24 = coarse_states[-1].reshape(25, 25)
        u48 = fine_states[-1].reshape(49, 49)[::2, ::2]
        rel = np.linalg.norm(u24 - u48) / np.linalg.norm(u48)
        assert rel <= 5e-2

    def test_obstacle_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            solve_advdiff(0.75, 0.2, ADV_GRID, 0.02, 0.1)

    def test_deterministic(self):
        a = solve_advdiff(0.2, 0.4, ADV_GRID, 0.02, 0.3)
        b = solve_advdiff(0.2, 0.4, ADV_GRID, 0.02, 0.3)
        assert np.array_equal(a, b)


def small_heat_config():
    return FOMConfig(
        problem="heat", nx=8, ny=8, dt=0.1, t_f=0.5,
        param_counts=(3, 3), n_train=5,
    )


class TestDatasetGeneration:
    def test_heat_default_shape(self):
        # default config: 10x10 parameters, [0, 3] at dt 0.05 incl. t=0
        cfg = FOMConfig(problem="heat")
        assert cfg.t_f == 3.0 and cfg.dt == 0.05
        n_t = int(round(cfg.t_f / cfg.dt)) + 1
        assert n_t == 61
        assert cfg.n_train == 50

    def test_small_generation(self):
        ds = generate_dataset(small_heat_config(), seed=1)
        assert ds.tensor.shape == (9, 81, 6)
        assert len(ds.train_indices) == 5
        assert len(ds.test_indices) == 4
        assert not set(ds.train_indices) & set(ds.test_indices)

    def test_split_deterministic(self):
        a = generate_dataset(small_heat_config(), seed=7)
        b = generate_dataset(small_heat_config(), seed=7)
        assert a.train_indices == b.train_indices
        assert np.array_equal(a.tensor, b.tensor)

    def test_include_t0_flag(self):
        cfg = small_heat_config()
        cfg.include_t0 = False
        ds = generate_dataset(cfg, seed=1)
        assert ds.tensor.shape[2] == 5
        assert ds.t_first == pytest.approx(0.1)

    def test_subset_window(self):
        ds = generate_dataset(small_heat_config(), seed=1)
        sub = ds.subset(ds.train_indices, t_end=0.3)
        assert sub.tensor.shape == (5, 81, 4)
        assert sub.train_indices == [0, 1, 2, 3, 4]
        assert sub.test_indices == []

    def test_inconsistent_split_rejected(self):
        ds = generate_dataset(small_heat_config(), seed=1)
        with pytest.raises(DataError):
            SnapshotDataset(
                params=ds.params, t_first=0.0, dt=0.1, tensor=ds.tensor,
                grid=ds.grid, problem="heat", seed=0,
                train_indices=[0, 1], test_indices=[1, 2],
            )

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ConfigError):
            FOMConfig.from_dict({"problem": "heat", "grid": 20})


class TestDatasetPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        ds = generate_dataset(small_heat_config(), seed=2)
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert np.array_equal(back.tensor, ds.tensor)
        assert np.array_equal(back.params, ds.params)
        assert back.train_indices == ds.train_indices
        assert back.dt == ds.dt and back.t_first == ds.t_first

    def test_truncated_payload_detected(self, tmp_path):
        ds = generate_dataset(small_heat_config(), seed=2)
        save_dataset(ds, tmp_path / "ds")
        payload = tmp_path / "ds" / "snapshots.f64"
        data = payload.read_bytes()
        payload.write_bytes(data[:-16])
        with pytest.raises(FormatError, match="bytes"):
            load_dataset(tmp_path / "ds")

    def test_version_mismatch_detected(self, tmp_path):
        ds = generate_dataset(small_heat_config(), seed=2)
        save_dataset(ds, tmp_path / "ds")
        meta_path = tmp_path / "ds" / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["format"] = "stf-0"
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(FormatError, match="format"):
            load_dataset(tmp_path / "ds")

    def test_independent_writer_loads_equal(self, tmp_path):
        # a from-scratch writer following the documented layout: little-
        # endian float64, row-major [param][node][time], JSON metadata
        rng = np.random.default_rng(3)
        tensor = rng.standard_normal((2, 3, 4))
        params = np.array([[0.5, -0.5], [1.5, 0.5]])
        path = tmp_path / "handmade"
        os.makedirs(path)
        meta = {
            "format": "stf-1",
            "problem": "heat",
            "dims": [2, 3, 4],
            "t_first": 0.0,
            "dt": 0.25,
            "seed": 0,
            "grid": {"nx": 4, "ny": 4, "bounds": [-1.0, 1.0, -1.0, 1.0]},
            "params": params.tolist(),
            "param_ranges": [[0.5, 1.5], [-0.5, 0.5]],
            "train_indices": [0],
            "test_indices": [1],
        }
        (path / "meta.json").write_text(json.dumps(meta))
        flat = []
        for p in range(2):
            for node in range(3):
                for t in range(4):
                    flat.append(tensor[p, node, t])
        (path / "snapshots.f64").write_bytes(
            np.array(flat, dtype="<f8").tobytes()
        )
        ds = load_dataset(path)
        assert np.array_equal(ds.tensor, tensor)
        assert np.array_equal(ds.params, params)
        assert ds.grid.nx == 4
