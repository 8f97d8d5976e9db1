"""Offline/online orchestration of the low- and multi-fidelity surrogates.

Offline, the training snapshot tensor is factorized into parameter,
space and time cores; one time-slice surrogate is trained per selected
time instance; and a polynomial ODE is identified for the time core and
integrated once across the full prediction window.

Online, a query parameter's core coefficients come from least-squares
fitting the slice-surrogate predictions against the fixed space/time
factors, and the field at any time is a single contraction.  The
multi-fidelity variant adds a branch network that corrects the fitted
parameter coefficients; it is pre-trained on surrogate fields at
Latin-hypercube parameters and fine-tuned against the high-fidelity
training snapshots.
"""

import os
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import arrayio, nn, opinf, surrogate, tt
from .errors import ConfigError, FormatError
from .linalg import solve_least_squares

__all__ = [
    "OpInfSettings",
    "MFSettings",
    "LFModel",
    "MFModel",
    "default_gca_times",
    "lf_offline",
    "lf_parametric_core",
    "lf_predict",
    "lf_predict_series",
    "mf_offline",
    "mf_predict",
    "mf_predict_series",
    "save_model",
    "load_model",
]

CoreFit = namedtuple("CoreFit", ["coeffs", "residual_norm"])


@dataclass
class OpInfSettings:
    order: int = 1
    lambda_grid: tuple = (0.0, 1e-8, 1e-6, 1e-4, 1e-2)
    dt_int: float = 0.0  # 0: use the training step


@dataclass
class MFSettings:
    pretrain_count: int = 50
    hidden: tuple = (32, 32)
    epochs_pretrain: int = 2000
    epochs_finetune: int = 2000
    learning_rate: float = 1e-3
    seed: int = 0


def default_gca_times(t_end, dt, n_gca):
    """Slice times for a training window: the first step plus n-1 points
    equally spaced up to the window end, snapped to the time grid."""
    if n_gca < 1:
        raise ConfigError(f"need at least one slice time, got {n_gca}")
    if n_gca == 1:
        return [t_end]
    ticks = [dt] + [k * t_end / (n_gca - 1) for k in range(1, n_gca)]
    return [round(t / dt) * dt for t in ticks]


@dataclass
class LFModel:
    """Everything the low-fidelity online stage needs.

    ``design`` maps parameter-core coefficients to the stacked slice
    fields (slice-major), and ``core_traj`` holds the eagerly integrated
    time-core path over [t_first, t_max].
    """

    cores: tt.TTCores
    slices: list
    gca_times: list
    gca_indices: list
    opinf_model: opinf.OpInfModel
    core_traj: opinf.Trajectory
    design: np.ndarray
    t_first: float
    dt_train: float
    t_max: float
    lam_selected: float
    param_ranges: list
    opinf_settings: OpInfSettings = field(default_factory=OpInfSettings)
    surrogate_kind: str = "rbf"

    @property
    def n_space(self):
        return self.cores.space_core.shape[1]

    def core_at(self, t):
        return opinf.evaluate_at(self.opinf_model, self.core_traj, t)


@dataclass
class MFModel:
    lf: LFModel
    branch: nn.MLP
    settings: MFSettings
    pretrain_params: np.ndarray = None


def _grid_indices(times, t_first, dt, n_times, what):
    indices = []
    for t in times:
        k = int(round((t - t_first) / dt))
        if k < 0 or k >= n_times or abs(t_first + k * dt - t) > 1e-12:
            raise ConfigError(
                f"{what} {t:g} is not a point of the time grid "
                f"(t_first={t_first:g}, dt={dt:g}, n={n_times})"
            )
        indices.append(k)
    return indices


def lf_offline(ds, gca_times, eps_tt, settings=None, t_max=None,
               surrogate_kind="rbf", slice_nn_cfg=None):
    """Build the low-fidelity model from a training dataset.

    ``ds`` holds the training parameters and the training-window tensor;
    ``gca_times`` must all lie on its time grid.  ``t_max`` extends the
    integrated time-core path beyond the window for extrapolation
    queries (default: the training window end).
    """
    settings = settings or OpInfSettings()
    gca_times = [float(t) for t in gca_times]
    gca_idx = _grid_indices(
        gca_times, ds.t_first, ds.dt, ds.n_times, "slice time"
    )

    cores = tt.tt_svd(ds.tensor, eps_tt)
    r1, _ = cores.ranks
    n_space = ds.tensor.shape[1]
    if len(gca_times) * n_space < r1:
        raise ConfigError(
            f"{len(gca_times)} slice(s) x {n_space} nodes cannot determine "
            f"{r1} parameter-core coefficients"
        )

    slices = []
    for t, k in zip(gca_times, gca_idx):
        fields = ds.tensor[:, :, k]
        if surrogate_kind == "rbf":
            slices.append(surrogate.fit_rbf_slice(ds.params, fields, t))
        elif surrogate_kind == "podnn-slice":
            cfg = slice_nn_cfg or nn.TrainConfig(epochs=2000)
            slices.append(
                surrogate.fit_podnn_slice(ds.params, fields, t, cfg)
            )
        else:
            raise ConfigError(f"unknown surrogate kind {surrogate_kind!r}")

    traj = opinf.Trajectory(ds.t_first, ds.dt, cores.time_core.T)
    lam = opinf.select_lambda(traj, settings.order, settings.lambda_grid)
    model = opinf.fit_opinf(traj, order=settings.order, lam=lam)

    t_max = float(t_max) if t_max is not None else ds.t_end
    dt_int = settings.dt_int or ds.dt
    core_traj = opinf.simulate(
        model, cores.time_core[:, 0], ds.t_first, t_max, dt_int
    )

    design = _design_matrix(cores, gca_idx)
    return LFModel(
        cores=cores,
        slices=slices,
        gca_times=gca_times,
        gca_indices=gca_idx,
        opinf_model=model,
        core_traj=core_traj,
        design=design,
        t_first=ds.t_first,
        dt_train=ds.dt,
        t_max=t_max,
        lam_selected=lam,
        param_ranges=[list(r) for r in ds.param_ranges],
        opinf_settings=settings,
        surrogate_kind=surrogate_kind,
    )


def _design_matrix(cores, gca_idx):
    """(n_gca * n_space, r1) map from parameter coefficients to the
    stacked slice fields, slice-major."""
    g3 = cores.time_core[:, gca_idx]
    m = np.einsum("anb,bj->jna", cores.space_core, g3, optimize=True)
    return m.reshape(-1, cores.ranks[0])


def lf_parametric_core(model, mu):
    """Parameter-core coefficients for a query parameter.

    The slice surrogates predict the field at each slice time; the
    coefficients minimizing the misfit to those fields in the factored
    format are returned together with the least-squares residual norm.
    """
    stacked = np.concatenate([s.predict(mu) for s in model.slices])
    solve = solve_least_squares(model.design, stacked, 0.0)
    return CoreFit(coeffs=solve.x, residual_norm=solve.residual_norm)


def lf_predict(model, mu, t):
    """Low-fidelity field prediction at one (parameter, time) query."""
    fit = lf_parametric_core(model, mu)
    return tt.tt_eval(fit.coeffs, model.cores, model.core_at(t))


def lf_predict_series(model, mu, times):
    """Fields at several times for one parameter, (n_space, n_times)."""
    fit = lf_parametric_core(model, mu)
    g3 = np.column_stack([model.core_at(t) for t in times])
    return np.einsum(
        "a,anb,bj->nj", fit.coeffs, model.cores.space_core, g3, optimize=True
    )


def _latin_hypercube(n, ranges, rng):
    cols = []
    for lo, hi in ranges:
        u = (rng.permutation(n) + rng.uniform(0.0, 1.0, n)) / n
        cols.append(lo + u * (hi - lo))
    return np.column_stack(cols)


def _composed_loss(design, floor):
    """Relative squared loss of corrections pushed through a linear map.

    Targets arrive as rows [residual_target | squared_norm]; the value is
    the batch mean of ||design @ y - target||^2 / norm^2.
    """

    def loss(pred, packed):
        b = packed[:, :-1]
        d = np.maximum(packed[:, -1], floor)
        resid = pred @ design.T - b
        value = float(np.mean(np.sum(resid**2, axis=1) / d))
        d_pred = (2.0 / pred.shape[0]) * (resid / d[:, None]) @ design
        return value, d_pred

    return loss


def mf_offline(lf, ds, settings=None):
    """Train the branch correction network in two stages.

    Stage 1 pre-trains against slice-surrogate fields at a seeded
    Latin-hypercube parameter sample (no extra high-fidelity solves);
    stage 2 fine-tunes against the high-fidelity training snapshots over
    the full training grid, with the time core replayed by the inferred
    ODE.  The branch output layer starts at zero, so an untrained branch
    reproduces the low-fidelity prediction exactly.
    """
    settings = settings or MFSettings()
    r1 = lf.cores.ranks[0]
    p = ds.params.shape[1]
    rng = np.random.default_rng(settings.seed)
    ds_norm = float(np.linalg.norm(ds.tensor.ravel()))
    floor = (1e-12 * max(ds_norm, 1.0)) ** 2

    # stage 1: surrogate fields at Latin-hypercube parameters
    pre_params = _latin_hypercube(settings.pretrain_count, lf.param_ranges, rng)
    inputs = np.empty((settings.pretrain_count, p + r1))
    resid_targets = np.empty((settings.pretrain_count, lf.design.shape[0] + 1))
    for k, mu in enumerate(pre_params):
        stacked = np.concatenate([s.predict(mu) for s in lf.slices])
        fit = lf_parametric_core(lf, mu)
        inputs[k] = np.concatenate([mu, fit.coeffs])
        resid_targets[k, :-1] = stacked - lf.design @ fit.coeffs
        resid_targets[k, -1] = float(np.dot(stacked, stacked))

    branch = nn.MLP([p + r1, *settings.hidden, r1], seed=settings.seed)
    branch.zero_last_layer()
    branch.fit_input_scaling(inputs)

    cfg1 = nn.TrainConfig(
        epochs=settings.epochs_pretrain,
        learning_rate=settings.learning_rate,
        seed=settings.seed,
    )
    branch, _ = nn.train(
        branch, inputs, resid_targets, cfg1,
        loss=_composed_loss(lf.design, floor),
    )

    # stage 2: high-fidelity snapshots over the training grid with the
    # replayed time core
    n_train, n_space, n_t = ds.tensor.shape
    replayed = lf.core_traj.states[:n_t].T  # (r2, n_t)
    train_map = np.einsum(
        "anb,bj->jna", lf.cores.space_core, replayed, optimize=True
    ).reshape(-1, r1)

    inputs2 = np.empty((n_train, p + r1))
    targets2 = np.empty((n_train, train_map.shape[0] + 1))
    for k in range(n_train):
        fit = lf_parametric_core(lf, ds.params[k])
        inputs2[k] = np.concatenate([ds.params[k], fit.coeffs])
        truth = ds.tensor[k].T.reshape(-1)  # time-major stacking
        targets2[k, :-1] = truth - train_map @ fit.coeffs
        targets2[k, -1] = float(np.dot(truth, truth))

    cfg2 = nn.TrainConfig(
        epochs=settings.epochs_finetune,
        learning_rate=settings.learning_rate,
        seed=settings.seed + 1,
    )
    branch, _ = nn.train(
        branch, inputs2, targets2, cfg2,
        loss=_composed_loss(train_map, floor),
    )
    return MFModel(
        lf=lf, branch=branch, settings=settings, pretrain_params=pre_params
    )


def mf_parametric_core(model, mu):
    """Corrected parameter-core coefficients for a query parameter."""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    fit = lf_parametric_core(model.lf, mu)
    correction = nn.forward(model.branch, np.concatenate([mu, fit.coeffs]))
    return fit.coeffs + correction


def mf_predict(model, mu, t):
    coeffs = mf_parametric_core(model, mu)
    return tt.tt_eval(coeffs, model.lf.cores, model.lf.core_at(t))


def mf_predict_series(model, mu, times):
    coeffs = mf_parametric_core(model, mu)
    g3 = np.column_stack([model.lf.core_at(t) for t in times])
    return np.einsum(
        "a,anb,bj->nj", coeffs, model.lf.cores.space_core, g3, optimize=True
    )


def save_model(model, path):
    """Persist an LF or MF model directory."""
    lf = model.lf if isinstance(model, MFModel) else model
    os.makedirs(path, exist_ok=True)
    meta = {
        "kind": "mf" if isinstance(model, MFModel) else "lf",
        "gca_times": lf.gca_times,
        "gca_indices": lf.gca_indices,
        "t_first": lf.t_first,
        "dt_train": lf.dt_train,
        "t_max": lf.t_max,
        "dt_int": lf.core_traj.dt,
        "lambda_selected": lf.lam_selected,
        "param_ranges": lf.param_ranges,
        "surrogate_kind": lf.surrogate_kind,
        "opinf_order": lf.opinf_settings.order,
        "n_slices": len(lf.slices),
    }
    if isinstance(model, MFModel):
        meta["pretrain_count"] = model.settings.pretrain_count
        meta["pretrain_seed"] = model.settings.seed
    arrayio.write_json(os.path.join(path, "pipeline_meta.json"), meta)
    tt.save_tt_cores(lf.cores, os.path.join(path, "tt"))
    opinf.save_opinf(lf.opinf_model, os.path.join(path, "opinf"))
    for k, s in enumerate(lf.slices):
        surrogate.save_slice(s, os.path.join(path, f"slices/slice_{k:03d}"))
    if isinstance(model, MFModel):
        nn.save_mlp(model.branch, os.path.join(path, "branch"))


def load_model(path):
    """Load a model directory; the time-core path is re-integrated."""
    meta = arrayio.read_json(os.path.join(path, "pipeline_meta.json"))
    kind = meta.get("kind")
    if kind not in ("lf", "mf"):
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    cores = tt.load_tt_cores(os.path.join(path, "tt"))
    model = opinf.load_opinf(os.path.join(path, "opinf"))
    slices = [
        surrogate.load_slice(os.path.join(path, f"slices/slice_{k:03d}"))
        for k in range(int(meta["n_slices"]))
    ]
    core_traj = opinf.simulate(
        model,
        cores.time_core[:, 0],
        float(meta["t_first"]),
        float(meta["t_max"]),
        float(meta["dt_int"]),
    )
    lf = LFModel(
        cores=cores,
        slices=slices,
        gca_times=[float(t) for t in meta["gca_times"]],
        gca_indices=[int(k) for k in meta["gca_indices"]],
        opinf_model=model,
        core_traj=core_traj,
        design=_design_matrix(cores, [int(k) for k in meta["gca_indices"]]),
        t_first=float(meta["t_first"]),
        dt_train=float(meta["dt_train"]),
        t_max=float(meta["t_max"]),
        lam_selected=float(meta["lambda_selected"]),
        param_ranges=[list(r) for r in meta["param_ranges"]],
        opinf_settings=OpInfSettings(order=int(meta["opinf_order"])),
        surrogate_kind=meta.get("surrogate_kind", "rbf"),
    )
    if kind == "lf":
        return lf
    branch = nn.load_mlp(os.path.join(path, "branch"))
    settings = MFSettings(
        pretrain_count=int(meta.get("pretrain_count", 50)),
        seed=int(meta.get("pretrain_seed", 0)),
    )
    return MFModel(lf=lf, branch=branch, settings=settings)
