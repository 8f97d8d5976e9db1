"""Operator inference: learn a polynomial ODE for a low-dimensional state
from sampled trajectories, then integrate it forward for extrapolation.

The model is  dg/dt = c + A1 g + A2 q(g) + B u(t),  where q(g) collects
the unique degree-2 monomials g_i g_j (i <= j, lexicographic).  Operators
are identified by Tikhonov-damped least squares against finite-difference
time derivatives.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import arrayio
from .errors import BlowUpError, DataError
from .linalg import solve_least_squares

__all__ = [
    "Trajectory",
    "OpInfModel",
    "quadratic_features",
    "finite_diff_derivatives",
    "assemble_data_matrix",
    "fit_opinf",
    "select_lambda",
    "simulate",
    "rhs",
    "evaluate_at",
    "save_opinf",
    "load_opinf",
]


@dataclass
class Trajectory:
    """Uniformly sampled state history: row k is the state at t0 + k*dt."""

    t0: float
    dt: float
    states: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.states.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 samples")

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.states.shape[0] - 1)


@dataclass
class OpInfModel:
    """Inferred polynomial ODE operators for an r-dimensional state.

    ``quad`` is present only for order 2, ``input_op`` only when the
    training data carried external inputs.
    """

    const: np.ndarray              # (r,)
    linear: np.ndarray             # (r, r)
    quad: Optional[np.ndarray]     # (r, r(r+1)/2) or None
    input_op: Optional[np.ndarray] = None  # (r, p) or None
    order: int = 1
    lam: float = 0.0
    dt_train: float = 0.0
    rank_deficient: bool = field(default=False)

    @property
    def dim(self):
        return self.const.shape[0]

    @property
    def n_inputs(self):
        return 0 if self.input_op is None else self.input_op.shape[1]


def quadratic_features(g):
    """Unique degree-2 monomials g_i g_j for i <= j, lexicographic in (i, j).

    Accepts a single state (r,) or a batch (n, r); the batch form returns
    (n, r(r+1)/2).
    """
    g = np.asarray(g, dtype=np.float64)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    iu, ju = np.triu_indices(g.shape[1])
    feats = g[:, iu] * g[:, ju]
    return feats[0] if single else feats


def finite_diff_derivatives(traj):
    """Second-order time derivatives of the trajectory rows.

    Central differences at interior rows, three-point one-sided formulas
    at the two ends; exact on polynomials of degree <= 2.
    """
    g = traj.states
    n = g.shape[0]
    if n < 3:
        raise DataError(f"need at least 3 samples for derivatives, got {n}")
    d = np.empty_like(g)
    d[1:-1] = (g[2:] - g[:-2]) / (2.0 * traj.dt)
    d[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * traj.dt)
    d[-1] = (3.0 * g[-1] - 4.0 * g[-2] + g[-3]) / (2.0 * traj.dt)
    return d


def assemble_data_matrix(states, inputs=None, order=1):
    """Stack the regression blocks: [1 | states | quadratics | inputs].

    ``states`` is (n, r); the result is (n, nbar) with
    nbar = 1 + r + (order == 2) * r(r+1)/2 + p.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if order not in (1, 2):
        raise ValueError(f"polynomial order must be 1 or 2, got {order}")
    blocks = [np.ones((states.shape[0], 1)), states]
    if order == 2:
        blocks.append(quadratic_features(states))
    if inputs is not None:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs.shape[0] != states.shape[0]:
            raise ValueError(
                f"inputs have {inputs.shape[0]} rows, states {states.shape[0]}"
            )
        blocks.append(inputs)
    return np.hstack(blocks)


def fit_opinf(traj, inputs=None, order=1, lam=0.0, derivatives=None):
    """Identify the ODE operators from one trajectory.

    ``derivatives`` overrides the finite-difference estimate when exact
    time derivatives are available (rows aligned with the trajectory).
    """
    if derivatives is None:
        derivatives = finite_diff_derivatives(traj)
    else:
        derivatives = np.atleast_2d(np.asarray(derivatives, dtype=np.float64))
        if derivatives.shape != traj.states.shape:
            raise ValueError(
                f"derivative shape {derivatives.shape} does not match "
                f"states {traj.states.shape}"
            )
    d = assemble_data_matrix(traj.states, inputs, order)
    result = solve_least_squares(d, derivatives, lam)
    ops = result.x.T  # (r, nbar)

    r = traj.states.shape[1]
    n2 = r * (r + 1) // 2 if order == 2 else 0
    const = ops[:, 0].copy()
    linear = ops[:, 1 : 1 + r].copy()
    quad = ops[:, 1 + r : 1 + r + n2].copy() if order == 2 else None
    rest = ops[:, 1 + r + n2 :]
    input_op = rest.copy() if rest.shape[1] else None
    return OpInfModel(
        const=const,
        linear=linear,
        quad=quad,
        input_op=input_op,
        order=order,
        lam=float(lam),
        dt_train=traj.dt,
        rank_deficient=result.rank_deficient,
    )


def rhs(model, g, t=0.0, input_fn=None):
    """Right-hand side of the inferred ODE at state ``g``."""
    out = model.const + model.linear @ g
    if model.quad is not None:
        out = out + model.quad @ quadratic_features(g)
    if model.input_op is not None:
        if input_fn is None:
            raise ValueError("model has an input operator but no input_fn given")
        out = out + model.input_op @ np.asarray(input_fn(t), dtype=np.float64)
    return out


def simulate(model, g0, t0, t_end, dt_int, input_fn=None):
    """Integrate the model with classical fourth-order Runge-Kutta at a
    fixed step, returning states at t0, t0 + dt_int, ...

    Raises BlowUpError naming the first step that produced a non-finite
    state.
    """
    if dt_int <= 0:
        raise ValueError(f"dt_int must be positive, got {dt_int}")
    if t_end <= t0:
        raise ValueError(f"t_end={t_end} must exceed t0={t0}")
    g0 = np.asarray(g0, dtype=np.float64)
    n_steps = max(1, int(np.ceil((t_end - t0) / dt_int - 1e-9)))
    states = np.empty((n_steps + 1, g0.shape[0]))
    states[0] = g0
    g = g0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            t = t0 + k * dt_int
            k1 = rhs(model, g, t, input_fn)
            k2 = rhs(model, g + 0.5 * dt_int * k1, t + 0.5 * dt_int, input_fn)
            k3 = rhs(model, g + 0.5 * dt_int * k2, t + 0.5 * dt_int, input_fn)
            k4 = rhs(model, g + dt_int * k3, t + dt_int, input_fn)
            g = g + (dt_int / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(g).all():
                raise BlowUpError(
                    f"integration blew up at step {k + 1} "
                    f"(t = {t + dt_int:g})",
                    step=k + 1,
                    time=t + dt_int,
                )
            states[k + 1] = g
    return Trajectory(t0=t0, dt=dt_int, states=states)


def evaluate_at(model, traj, t, input_fn=None):
    """State at an arbitrary time inside the simulated window.

    Grid-aligned queries return the stored state; off-grid queries use
    cubic Hermite interpolation with the ODE right-hand side supplying
    the endpoint slopes.
    """
    rel = (t - traj.t0) / traj.dt
    n = traj.states.shape[0]
    if rel < -1e-9 or rel > n - 1 + 1e-9:
        raise ValueError(
            f"t={t:g} outside the simulated window "
            f"[{traj.t0:g}, {traj.t_end:g}]"
        )
    k = int(np.floor(rel))
    k = min(max(k, 0), n - 2)
    s = rel - k
    if abs(s) < 1e-9:
        return traj.states[k].copy()
    if abs(s - 1.0) < 1e-9:
        return traj.states[k + 1].copy()
    ga, gb = traj.states[k], traj.states[k + 1]
    ta = traj.t0 + k * traj.dt
    fa = rhs(model, ga, ta, input_fn)
    fb = rhs(model, gb, ta + traj.dt, input_fn)
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * ga + h10 * traj.dt * fa + h01 * gb + h11 * traj.dt * fb


def select_lambda(traj, order, grid, inputs=None):
    """Pick the damping weight by temporal holdout.

    The final 10% of rows (at least one) are withheld; each candidate is
    fitted on the rest and scored by the relative error of simulating
    from the last retained state across the held-out rows.  Ties within
    1e-9 go to the larger candidate.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("lambda grid must be nonempty")
    n = traj.states.shape[0]
    n_hold = max(1, int(round(0.1 * n)))
    n_fit = n - n_hold
    if n_fit < 3:
        raise DataError(
            f"holdout leaves {n_fit} rows; need at least 3 to fit"
        )
    fit_traj = Trajectory(traj.t0, traj.dt, traj.states[:n_fit])
    fit_inputs = None if inputs is None else inputs[:n_fit]
    held = traj.states[n_fit:]
    denom = np.linalg.norm(held)

    scores = []
    diagnostics = []
    for lam in grid:
        model = fit_opinf(fit_traj, fit_inputs, order, lam)
        t_start = traj.t0 + (n_fit - 1) * traj.dt
        try:
            sim = simulate(
                model,
                traj.states[n_fit - 1],
                t_start,
                traj.t0 + (n - 1) * traj.dt,
                traj.dt,
            )
            pred = sim.states[1 : n_hold + 1]
            err = np.linalg.norm(pred - held)
            err = err / denom if denom > 0 else err
        except BlowUpError as exc:
            err = np.inf
            diagnostics.append(f"lambda={lam:g}: {exc}")
        scores.append(err)

    scores = np.asarray(scores)
    if not np.isfinite(scores).any():
        raise DataError(
            "every candidate blew up during holdout simulation: "
            + "; ".join(diagnostics)
        )
    best = np.nanmin(scores[np.isfinite(scores)])
    tied = [lam for lam, e in zip(grid, scores) if e <= best + 1e-9]
    return max(tied)


def save_opinf(model, path):
    """Write the model to a directory: opinf.json + one .f64 per block."""
    os.makedirs(path, exist_ok=True)
    arrayio.write_json(
        os.path.join(path, "opinf.json"),
        {
            "dim": model.dim,
            "order": model.order,
            "n_inputs": model.n_inputs,
            "lambda": model.lam,
            "dt_train": model.dt_train,
            "rank_deficient": model.rank_deficient,
        },
    )
    arrayio.write_array(os.path.join(path, "c.f64"), model.const)
    arrayio.write_array(os.path.join(path, "A1.f64"), model.linear)
    if model.quad is not None:
        arrayio.write_array(os.path.join(path, "A2.f64"), model.quad)
    if model.input_op is not None:
        arrayio.write_array(os.path.join(path, "B.f64"), model.input_op)


def load_opinf(path):
    meta = arrayio.read_json(os.path.join(path, "opinf.json"))
    r = int(meta["dim"])
    order = int(meta["order"])
    p = int(meta["n_inputs"])
    quad = None
    if order == 2:
        quad = arrayio.read_array(
            os.path.join(path, "A2.f64"), (r, r * (r + 1) // 2)
        )
    input_op = None
    if p > 0:
        input_op = arrayio.read_array(os.path.join(path, "B.f64"), (r, p))
    return OpInfModel(
        const=arrayio.read_array(os.path.join(path, "c.f64"), (r,)),
        linear=arrayio.read_array(os.path.join(path, "A1.f64"), (r, r)),
        quad=quad,
        input_op=input_op,
        order=order,
        lam=float(meta["lambda"]),
        dt_train=float(meta["dt_train"]),
        rank_deficient=bool(meta.get("rank_deficient", False)),
    )
