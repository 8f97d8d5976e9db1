"""Parametric surrogates for full solution fields.

Two families live here.  Time-slice surrogates map a parameter vector to
the full field at one fixed time instance; the pipeline consumes them
through the small predict/t_slice interface, so any model with that
surface plugs in.  The POD-based baselines (orthogonal projection and a
network regressing POD coefficients from (parameter, time)) are used for
method comparison.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from . import arrayio, nn
from .errors import DataError, FormatError

__all__ = [
    "RbfSliceSurrogate",
    "PodnnSliceSurrogate",
    "fit_rbf_slice",
    "fit_podnn_slice",
    "PODBasis",
    "pod_basis",
    "pod_project_error",
    "PODNN",
    "fit_podnn",
    "predict_podnn",
    "save_slice",
    "load_slice",
]

_NUGGET = 1e-10


def _standardize_columns(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean, std


class RbfSliceSurrogate:
    """Gaussian-kernel interpolant from parameters to a field at one time.

    One kernel matrix is shared by all output components; the shape
    parameter is the reciprocal of the median pairwise distance between
    standardized parameter points, and a small nugget keeps the solve
    stable while preserving near-interpolation of the training fields.
    A constant tail (kernel weights constrained to sum to zero) makes the
    interpolant reproduce constant fields everywhere, not just at the
    training points.
    """

    kind = "rbf"

    def __init__(self, params, fields, t_slice):
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        fields = np.atleast_2d(np.asarray(fields, dtype=np.float64))
        if params.shape[0] < 2:
            raise DataError("need at least 2 training parameters")
        if params.shape[0] != fields.shape[0]:
            raise ValueError(
                f"{params.shape[0]} parameter rows vs {fields.shape[0]} fields"
            )
        dists_raw = squareform(pdist(params))
        np.fill_diagonal(dists_raw, np.inf)
        dup = np.argwhere(dists_raw == 0.0)
        if dup.size:
            i, j = dup[0]
            raise DataError(
                f"duplicate parameter points at rows {i} and {j}: "
                f"{params[i].tolist()}"
            )

        std_params, self.param_mean, self.param_std = _standardize_columns(params)
        dists = pdist(std_params)
        self.shape_param = 1.0 / float(np.median(dists))
        n = params.shape[0]
        kernel = np.exp(-((self.shape_param * squareform(dists)) ** 2))
        kernel[np.diag_indices_from(kernel)] += _NUGGET
        system = np.zeros((n + 1, n + 1))
        system[:n, :n] = kernel
        system[:n, n] = 1.0
        system[n, :n] = 1.0
        rhs = np.vstack([fields, np.zeros((1, fields.shape[1]))])
        coeffs = np.linalg.solve(system, rhs)
        self.weights = coeffs[:n]
        self.constant = coeffs[n]

        self.params = params
        self.centers = std_params
        self.t_slice = float(t_slice)
        self.n_outputs = fields.shape[1]
        errs = [
            np.linalg.norm(self.predict(p) - f) / max(np.linalg.norm(f), 1e-300)
            for p, f in zip(params, fields)
        ]
        self.train_fit_error = float(max(errs))

    def predict(self, mu):
        mu = np.asarray(mu, dtype=np.float64).reshape(1, -1)
        std = (mu - self.param_mean) / self.param_std
        k = np.exp(-((self.shape_param * cdist(std, self.centers)) ** 2))
        return (k @ self.weights)[0] + self.constant


def fit_rbf_slice(params, fields, t_slice):
    return RbfSliceSurrogate(params, fields, t_slice)


@dataclass
class PODBasis:
    """Orthonormal snapshot basis with the singular values that chose it.

    ``rank`` is the smallest r whose tail energy fraction
    (sum of squared discarded singular values over the total) is at most
    ``energy_tol``.  ``degenerate`` marks an all-zero snapshot matrix.
    """

    modes: np.ndarray            # (n_space, rank)
    singular_values: np.ndarray  # full spectrum
    energy_tol: float
    rank: int
    degenerate: bool = False


def pod_basis(snapshots, energy_tol):
    """Leading left singular vectors under the tail-energy rule."""
    snapshots = np.atleast_2d(np.asarray(snapshots, dtype=np.float64))
    if snapshots.shape[1] < 1:
        raise ValueError("need at least one snapshot column")
    u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    total = float(np.sum(s**2))
    if total == 0.0:
        return PODBasis(
            modes=u[:, :1].copy(),
            singular_values=s,
            energy_tol=float(energy_tol),
            rank=1,
            degenerate=True,
        )
    tail = np.concatenate([np.cumsum(s[::-1] ** 2)[::-1][1:], [0.0]]) / total
    rank = int(np.argmax(tail <= energy_tol)) + 1
    return PODBasis(
        modes=u[:, :rank].copy(),
        singular_values=s,
        energy_tol=float(energy_tol),
        rank=rank,
    )


def pod_project_error(basis, u):
    """Relative error of the orthogonal projection onto the basis.

    This is the best-linear-fit oracle: no surrogate sharing the basis
    can beat it.  A zero vector projects exactly, so its error is 0.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != basis.modes.shape[0]:
        raise ValueError(
            f"vector length {u.shape[0]} vs basis rows {basis.modes.shape[0]}"
        )
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return 0.0
    resid = u - basis.modes @ (basis.modes.T @ u)
    return float(np.linalg.norm(resid) / norm)


@dataclass
class PODNN:
    """Baseline regressing POD coefficients from (parameter, time)."""

    basis: PODBasis
    net: nn.MLP
    train_loss: float


def fit_podnn(params, times, tensor, energy_tol, cfg, hidden=(32, 32)):
    """Fit the (parameter, time) -> coefficients baseline.

    ``tensor`` is (n_params, n_space, n_times); all snapshots are stacked
    space-major into one matrix for the POD, and the network is trained
    on every (parameter, time) pair.
    """
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    tensor = np.asarray(tensor, dtype=np.float64)
    n_p, n_space, n_t = tensor.shape
    stacked = tensor.transpose(1, 0, 2).reshape(n_space, n_p * n_t)
    basis = pod_basis(stacked, energy_tol)

    coeffs = np.einsum("nr,pnt->ptr", basis.modes, tensor)
    inputs = np.empty((n_p * n_t, params.shape[1] + 1))
    targets = np.empty((n_p * n_t, basis.rank))
    row = 0
    for i in range(n_p):
        for j in range(n_t):
            inputs[row, :-1] = params[i]
            inputs[row, -1] = times[j]
            targets[row] = coeffs[i, j]
            row += 1

    net = nn.MLP([inputs.shape[1], *hidden, basis.rank], seed=cfg.seed)
    net.fit_input_scaling(inputs)
    net, history = nn.train(net, inputs, targets, cfg, loss="mse")
    return PODNN(basis=basis, net=net, train_loss=history[-1])


def predict_podnn(model, mu, t):
    x = np.concatenate([np.atleast_1d(np.asarray(mu, dtype=np.float64)), [t]])
    coeff = nn.forward(model.net, x)
    return model.basis.modes @ coeff


class PodnnSliceSurrogate:
    """Learned time-slice surrogate: POD of the slice fields plus a
    network from parameters to the projection coefficients."""

    kind = "podnn-slice"

    def __init__(self, params, fields, t_slice, cfg, energy_tol=1e-10,
                 hidden=(32, 32)):
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        fields = np.atleast_2d(np.asarray(fields, dtype=np.float64))
        self.basis = pod_basis(fields.T, energy_tol)
        coeffs = fields @ self.basis.modes
        net = nn.MLP([params.shape[1], *hidden, self.basis.rank], seed=cfg.seed)
        net.fit_input_scaling(params)
        self.net, history = nn.train(net, params, coeffs, cfg, loss="mse")
        self.t_slice = float(t_slice)
        self.n_outputs = fields.shape[1]
        errs = [
            np.linalg.norm(self.predict(p) - f) / max(np.linalg.norm(f), 1e-300)
            for p, f in zip(params, fields)
        ]
        self.train_fit_error = float(max(errs))

    def predict(self, mu):
        coeff = nn.forward(self.net, np.asarray(mu, dtype=np.float64))
        return self.basis.modes @ coeff


def fit_podnn_slice(params, fields, t_slice, cfg, **kwargs):
    return PodnnSliceSurrogate(params, fields, t_slice, cfg, **kwargs)


def save_slice(surrogate, path):
    """Persist one slice surrogate: slice_meta.json + payload arrays."""
    os.makedirs(path, exist_ok=True)
    if surrogate.kind == "rbf":
        arrayio.write_json(
            os.path.join(path, "slice_meta.json"),
            {
                "kind": "rbf",
                "t_slice": surrogate.t_slice,
                "n_train": surrogate.params.shape[0],
                "n_params": surrogate.params.shape[1],
                "n_outputs": surrogate.n_outputs,
                "shape_param": surrogate.shape_param,
                "param_mean": surrogate.param_mean.tolist(),
                "param_std": surrogate.param_std.tolist(),
                "train_fit_error": surrogate.train_fit_error,
            },
        )
        arrayio.write_array(os.path.join(path, "params.f64"), surrogate.params)
        arrayio.write_array(os.path.join(path, "weights.f64"), surrogate.weights)
        arrayio.write_array(os.path.join(path, "constant.f64"), surrogate.constant)
    elif surrogate.kind == "podnn-slice":
        arrayio.write_json(
            os.path.join(path, "slice_meta.json"),
            {
                "kind": "podnn-slice",
                "t_slice": surrogate.t_slice,
                "n_outputs": surrogate.n_outputs,
                "rank": surrogate.basis.rank,
                "energy_tol": surrogate.basis.energy_tol,
                "train_fit_error": surrogate.train_fit_error,
            },
        )
        arrayio.write_array(os.path.join(path, "basis.f64"), surrogate.basis.modes)
        arrayio.write_array(
            os.path.join(path, "singular_values.f64"),
            surrogate.basis.singular_values,
        )
        nn.save_mlp(surrogate.net, os.path.join(path, "net"))
    else:
        raise ValueError(f"unknown surrogate kind {surrogate.kind!r}")


def load_slice(path):
    meta = arrayio.read_json(os.path.join(path, "slice_meta.json"))
    kind = meta.get("kind")
    if kind == "rbf":
        obj = RbfSliceSurrogate.__new__(RbfSliceSurrogate)
        obj.t_slice = float(meta["t_slice"])
        obj.shape_param = float(meta["shape_param"])
        obj.param_mean = np.asarray(meta["param_mean"], dtype=np.float64)
        obj.param_std = np.asarray(meta["param_std"], dtype=np.float64)
        obj.n_outputs = int(meta["n_outputs"])
        obj.train_fit_error = float(meta["train_fit_error"])
        n, p = int(meta["n_train"]), int(meta["n_params"])
        obj.params = arrayio.read_array(os.path.join(path, "params.f64"), (n, p))
        obj.centers = (obj.params - obj.param_mean) / obj.param_std
        obj.weights = arrayio.read_array(
            os.path.join(path, "weights.f64"), (n, obj.n_outputs)
        )
        obj.constant = arrayio.read_array(
            os.path.join(path, "constant.f64"), (obj.n_outputs,)
        )
        return obj
    if kind == "podnn-slice":
        obj = PodnnSliceSurrogate.__new__(PodnnSliceSurrogate)
        obj.t_slice = float(meta["t_slice"])
        obj.n_outputs = int(meta["n_outputs"])
        obj.train_fit_error = float(meta["train_fit_error"])
        rank = int(meta["rank"])
        modes = arrayio.read_array(
            os.path.join(path, "basis.f64"), (obj.n_outputs, rank)
        )
        sv_path = os.path.join(path, "singular_values.f64")
        n_sv = os.path.getsize(sv_path) // 8
        obj.basis = PODBasis(
            modes=modes,
            singular_values=arrayio.read_array(sv_path, (n_sv,)),
            energy_tol=float(meta["energy_tol"]),
            rank=rank,
        )
        obj.net = nn.load_mlp(os.path.join(path, "net"))
        return obj
    raise FormatError(f"{path}: unknown slice kind {kind!r}")
