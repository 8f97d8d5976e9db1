"""Desk-scale full-order solvers and snapshot dataset handling.

Two benchmark problems on structured node-centered grids:

* heat conduction on [-1, 1]^2 with a conductivity disk of radius 0.5 at
  the origin (value mu0 inside, 1 outside), zero Dirichlet on the top
  edge, zero-flux sides, prescribed flux mu1 on the base, zero initial
  condition;
* advection-diffusion on [0, 1]^2 with diffusivity D, advection field
  (1 - t) * [1, 1], Dirichlet data (x-1)^2 + (y-1)^2 on the outer
  boundary and on every node covered by a parameterized square obstacle
  of side 0.3, the same function as initial condition.

Both march with backward Euler and one sparse solve per step.  Snapshots
across a parameter grid stack into an order-3 tensor (parameter, node,
time) that the rest of the package consumes.
"""

import itertools
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import arrayio
from .errors import ConfigError, DataError, FormatError, SolverError
from .linalg import check_finite

__all__ = [
    "GridSpec",
    "FOMConfig",
    "SnapshotDataset",
    "solve_heat",
    "solve_heat_steady",
    "solve_advdiff",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

DATASET_FORMAT = "stf-1"

HEAT_RANGES = [[0.1, 10.0], [-1.0, 1.0]]
ADVDIFF_RANGES = [[0.1, 0.6], [0.1, 0.6]]


@dataclass
class GridSpec:
    """Structured node-centered grid: nx * ny cells, (nx+1)(ny+1) nodes,
    node index j * (nx + 1) + i at (x0 + i*hx, y0 + j*hy)."""

    nx: int
    ny: int
    bounds: tuple  # (x0, x1, y0, y1)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4 cells per side, got "
                             f"{self.nx}x{self.ny}")
        self.bounds = tuple(float(v) for v in self.bounds)

    @property
    def hx(self):
        return (self.bounds[1] - self.bounds[0]) / self.nx

    @property
    def hy(self):
        return (self.bounds[3] - self.bounds[2]) / self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    def nodes(self):
        """Flattened node coordinates (X, Y), x varying fastest."""
        x = self.bounds[0] + self.hx * np.arange(self.nx + 1)
        y = self.bounds[2] + self.hy * np.arange(self.ny + 1)
        xx, yy = np.meshgrid(x, y)  # rows indexed by j
        return xx.ravel(), yy.ravel()


def _heat_operator(grid, mu0):
    """Spatial operator and flux source layout for the heat problem.

    Returns (A, dirichlet_mask, base_mask) where A is the negative
    diffusion operator with empty Dirichlet rows (the step matrix is
    I + dt*A), and base_mask marks the nodes receiving the boundary-flux
    source 2*mu1/hy.

    Boundary closure is the ghost-node method throughout: the zero-flux
    sides reflect (doubling the interior face coefficient) and the base
    flux condition couples through the node conductivity, adding a
    constant source handled by the caller.
    """
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    xs, ys = grid.nodes()
    kappa = np.where(xs**2 + ys**2 < 0.25, mu0, 1.0)

    n = grid.n_nodes
    stride = nx + 1
    ii = np.arange(n)
    i = ii % stride
    j = ii // stride
    top = j == ny
    base = j == 0

    def harmonic(a, b):
        return 2.0 * a * b / (a + b)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def add_flux(mask, neighbor_offset, coeff):
        idx = ii[mask]
        diag[idx] += coeff
        rows.append(idx)
        cols.append(idx + neighbor_offset)
        vals.append(-coeff)

    def face(mask, neighbor_offset):
        idx = ii[mask]
        return harmonic(kappa[idx], kappa[idx + neighbor_offset])

    # x direction: interior faces plus reflected ghosts on both sides
    east_int = (i > 0) & (i < nx) & ~top
    add_flux(east_int, 1, face(east_int, 1) / hx**2)
    west_int = east_int
    add_flux(west_int, -1, face(west_int, -1) / hx**2)
    left = (i == 0) & ~top
    add_flux(left, 1, 2.0 * face(left, 1) / hx**2)
    right = (i == nx) & ~top
    add_flux(right, -1, 2.0 * face(right, -1) / hx**2)

    # y direction: north face exists for every non-top row
    north = ~top
    add_flux(north, stride, face(north, stride) / hy**2)
    south_int = (j > 0) & ~top
    add_flux(south_int, -stride, face(south_int, -stride) / hy**2)
    # base row: ghost value u_S = u_N + 2*hy*mu1/kappa closes the stencil
    add_flux(base, stride, kappa[ii[base]] / hy**2)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    a = sp.csr_matrix(
        (np.concatenate([vals, diag[~top]]),
         (np.concatenate([rows, ii[~top]]),
          np.concatenate([cols, ii[~top]]))),
        shape=(n, n),
    )
    return a, top, base


def solve_heat(mu0, mu1, grid, dt, t_f, source=None, initial=None):
    """March the heat problem, returning states (n_times, n_nodes) with
    the initial condition as row 0.

    ``source`` and ``initial`` are testing hooks: ``source(x, y, t)``
    adds a volumetric term, ``initial(x, y)`` overrides the zero start.
    """
    if not (HEAT_RANGES[0][0] <= mu0 <= HEAT_RANGES[0][1]):
        warnings.warn(f"conductivity {mu0} outside the benchmark range "
                      f"{HEAT_RANGES[0]}", stacklevel=2)
    if not (HEAT_RANGES[1][0] <= mu1 <= HEAT_RANGES[1][1]):
        warnings.warn(f"base flux {mu1} outside the benchmark range "
                      f"{HEAT_RANGES[1]}", stacklevel=2)
    if dt <= 0 or t_f <= 0:
        raise ValueError(f"dt and t_f must be positive, got {dt}, {t_f}")

    op, top, base = _heat_operator(grid, mu0)
    n = grid.n_nodes
    n_steps = int(round(t_f / dt))
    xs, ys = grid.nodes()

    flux_src = np.zeros(n)
    flux_src[base] = 2.0 * mu1 / grid.hy

    # op has empty Dirichlet rows, so I + dt*op is already the identity there
    system = sp.eye(n, format="csr") + dt * op
    try:
        factor = splu(system.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc

    u = np.zeros(n) if initial is None else np.asarray(initial(xs, ys), float)
    u = u.copy()
    u[top] = 0.0
    states = np.empty((n_steps + 1, n))
    states[0] = u
    for m in range(n_steps):
        t_new = (m + 1) * dt
        rhs = u + dt * flux_src
        if source is not None:
            rhs = rhs + dt * source(xs, ys, t_new)
        rhs[top] = 0.0
        u = factor.solve(rhs)
        if not np.isfinite(u).all():
            raise SolverError(f"heat solve produced non-finite values at "
                              f"step {m + 1}")
        states[m + 1] = u
    return states


def solve_heat_steady(mu0, mu1, grid):
    """Direct solve of the stationary problem with the same boundary data."""
    op, top, base = _heat_operator(grid, mu0)
    n = grid.n_nodes
    rhs = np.zeros(n)
    rhs[base] = 2.0 * mu1 / grid.hy
    rhs[top] = 0.0
    system = op + sp.diags(top.astype(np.float64))
    try:
        return splu(system.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"steady solve failed: {exc}") from exc


def _advdiff_setup(grid, mu0, mu1):
    """Fixed sparse pieces for the advection-diffusion march."""
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    n = grid.n_nodes
    stride = nx + 1
    ii = np.arange(n)
    i = ii % stride
    j = ii // stride
    xs, ys = grid.nodes()

    boundary = (i == 0) | (i == nx) | (j == 0) | (j == ny)
    tol = 1e-12
    obstacle = (
        (xs >= mu0 - tol)
        & (xs <= mu0 + 0.3 + tol)
        & (ys >= mu1 - tol)
        & (ys <= mu1 + 0.3 + tol)
    )
    dirichlet = boundary | obstacle
    interior = ~dirichlet

    def interior_matrix(entries):
        rows = np.concatenate([e[0] for e in entries])
        cols = np.concatenate([e[1] for e in entries])
        vals = np.concatenate([e[2] for e in entries])
        keep = interior[rows]
        return sp.csr_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(n, n)
        )

    idx = ii[interior]
    # negative Laplacian, 5-point
    lap = interior_matrix([
        (idx, idx, np.full(idx.size, 2.0 / hx**2 + 2.0 / hy**2)),
        (idx, idx + 1, np.full(idx.size, -1.0 / hx**2)),
        (idx, idx - 1, np.full(idx.size, -1.0 / hx**2)),
        (idx, idx + stride, np.full(idx.size, -1.0 / hy**2)),
        (idx, idx - stride, np.full(idx.size, -1.0 / hy**2)),
    ])
    # upwind first derivatives for unit-positive advection (backward) and
    # unit-negative advection (forward); the time loop scales by (1 - t)
    up_pos = interior_matrix([
        (idx, idx, np.full(idx.size, 1.0 / hx + 1.0 / hy)),
        (idx, idx - 1, np.full(idx.size, -1.0 / hx)),
        (idx, idx - stride, np.full(idx.size, -1.0 / hy)),
    ])
    up_neg = interior_matrix([
        (idx, idx, np.full(idx.size, -1.0 / hx - 1.0 / hy)),
        (idx, idx + 1, np.full(idx.size, 1.0 / hx)),
        (idx, idx + stride, np.full(idx.size, 1.0 / hy)),
    ])
    g = (xs - 1.0) ** 2 + (ys - 1.0) ** 2
    return lap, up_pos, up_neg, dirichlet, g


def solve_advdiff(mu0, mu1, grid, dt, t_f, diffusion=0.1, advection_on=True):
    """March the obstacle problem, returning (n_times, n_nodes).

    The obstacle corner (mu0, mu1) must keep the 0.3-sided square inside
    the unit square.  Covered nodes are pinned to the boundary function,
    so the node count is the same for every parameter value.
    """
    lo, hi = ADVDIFF_RANGES[0][0], ADVDIFF_RANGES[0][1]
    if not (0.0 <= mu0 and mu0 + 0.3 <= 1.0 and 0.0 <= mu1 and mu1 + 0.3 <= 1.0):
        raise ValueError(
            f"obstacle corner ({mu0}, {mu1}) puts the square outside the "
            f"unit domain"
        )
    if not (lo <= mu0 <= hi and lo <= mu1 <= hi):
        warnings.warn(
            f"obstacle corner ({mu0}, {mu1}) outside the benchmark range "
            f"[{lo}, {hi}]^2",
            stacklevel=2,
        )
    if dt <= 0 or t_f <= 0:
        raise ValueError(f"dt and t_f must be positive, got {dt}, {t_f}")

    lap, up_pos, up_neg, dirichlet, g = _advdiff_setup(grid, mu0, mu1)
    n = grid.n_nodes
    n_steps = int(round(t_f / dt))

    base = sp.eye(n, format="csr") + dt * diffusion * lap

    u = g.copy()
    states = np.empty((n_steps + 1, n))
    states[0] = u
    for m in range(n_steps):
        t_new = (m + 1) * dt
        speed = (1.0 - t_new) if advection_on else 0.0
        system = base + (dt * speed) * (up_pos if speed >= 0 else up_neg)
        rhs = np.where(dirichlet, g, u)
        try:
            u = splu(system.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SolverError(
                f"advection-diffusion solve failed at step {m + 1}: {exc}"
            ) from exc
        if not np.isfinite(u).all():
            raise SolverError(
                f"advection-diffusion produced non-finite values at step "
                f"{m + 1}"
            )
        states[m + 1] = u
    return states


@dataclass
class FOMConfig:
    """Problem + sampling description; JSON documents map 1:1 onto this."""

    problem: str = "heat"
    nx: int = 0                # 0: per-problem default
    ny: int = 0
    dt: float = 0.0
    t_f: float = 0.0
    param_counts: tuple = (10, 10)
    param_ranges: Optional[list] = None
    n_train: int = 0
    include_t0: bool = True
    diffusion: float = 0.1

    _DEFAULTS = {
        "heat": dict(nx=20, ny=20, dt=0.05, t_f=3.0, n_train=50,
                     ranges=HEAT_RANGES, bounds=(-1.0, 1.0, -1.0, 1.0)),
        "advdiff": dict(nx=24, ny=24, dt=0.02, t_f=2.0, n_train=30,
                        ranges=ADVDIFF_RANGES, bounds=(0.0, 1.0, 0.0, 1.0)),
    }

    def __post_init__(self):
        if self.problem not in self._DEFAULTS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        d = self._DEFAULTS[self.problem]
        self.nx = self.nx or d["nx"]
        self.ny = self.ny or d["ny"]
        self.dt = self.dt or d["dt"]
        self.t_f = self.t_f or d["t_f"]
        self.n_train = self.n_train or d["n_train"]
        if self.param_ranges is None:
            self.param_ranges = [list(r) for r in d["ranges"]]
        if self.dt <= 0 or self.t_f <= 0:
            raise ConfigError("dt and t_f must be positive")

    @property
    def bounds(self):
        return self._DEFAULTS[self.problem]["bounds"]

    @classmethod
    def from_dict(cls, doc):
        known = {
            "problem", "nx", "ny", "dt", "t_f", "param_counts",
            "param_ranges", "n_train", "include_t0", "diffusion",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        doc = dict(doc)
        if "param_counts" in doc:
            doc["param_counts"] = tuple(doc["param_counts"])
        return cls(**doc)


@dataclass
class SnapshotDataset:
    """Parameter samples, time grid and the (parameter, node, time) tensor."""

    params: np.ndarray
    t_first: float
    dt: float
    tensor: np.ndarray
    grid: GridSpec
    problem: str
    seed: int
    train_indices: list
    test_indices: list
    param_ranges: list = field(default_factory=list)

    def __post_init__(self):
        self.params = np.atleast_2d(np.asarray(self.params, dtype=np.float64))
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        check_finite(self.tensor, "snapshot tensor")
        n = self.params.shape[0]
        combined = sorted(list(self.train_indices) + list(self.test_indices))
        if combined != list(range(n)):
            raise DataError(
                "train/test indices must be disjoint and cover every sample"
            )
        if not self.param_ranges:
            self.param_ranges = [
                [float(c.min()), float(c.max())] for c in self.params.T
            ]

    @property
    def n_times(self):
        return self.tensor.shape[2]

    @property
    def times(self):
        return self.t_first + self.dt * np.arange(self.n_times)

    @property
    def t_end(self):
        return self.t_first + self.dt * (self.n_times - 1)

    def subset(self, param_indices, t_end=None):
        """Restrict to the given samples and (optionally) an end time."""
        param_indices = list(param_indices)
        n_t = self.n_times
        if t_end is not None:
            n_t = int(np.round((t_end - self.t_first) / self.dt)) + 1
            if n_t < 2 or n_t > self.n_times:
                raise ConfigError(
                    f"t_end={t_end} outside the stored window "
                    f"[{self.t_first}, {self.t_end}]"
                )
        return SnapshotDataset(
            params=self.params[param_indices].copy(),
            t_first=self.t_first,
            dt=self.dt,
            tensor=self.tensor[param_indices, :, :n_t].copy(),
            grid=self.grid,
            problem=self.problem,
            seed=self.seed,
            train_indices=list(range(len(param_indices))),
            test_indices=[],
            param_ranges=[list(r) for r in self.param_ranges],
        )


def _parameter_grid(cfg):
    axes = [
        np.linspace(lo, hi, cnt)
        for (lo, hi), cnt in zip(cfg.param_ranges, cfg.param_counts)
    ]
    return np.array(list(itertools.product(*axes)))


def generate_dataset(cfg, seed=0):
    """Run the solver over the uniform parameter grid and split by a
    seeded shuffle."""
    grid = GridSpec(cfg.nx, cfg.ny, cfg.bounds)
    params = _parameter_grid(cfg)
    n_mu = params.shape[0]

    fields = []
    for k, mu in enumerate(params):
        try:
            if cfg.problem == "heat":
                states = solve_heat(mu[0], mu[1], grid, cfg.dt, cfg.t_f)
            else:
                states = solve_advdiff(
                    mu[0], mu[1], grid, cfg.dt, cfg.t_f, cfg.diffusion
                )
        except SolverError as exc:
            raise SolverError(
                f"parameter {k} ({mu.tolist()}) failed: {exc}"
            ) from exc
        fields.append(states.T)  # (n_nodes, n_times)

    tensor = np.stack(fields)
    t_first = 0.0
    if not cfg.include_t0:
        tensor = tensor[:, :, 1:].copy()
        t_first = cfg.dt

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_mu)
    train = sorted(int(v) for v in perm[: cfg.n_train])
    test = sorted(int(v) for v in perm[cfg.n_train :])
    return SnapshotDataset(
        params=params,
        t_first=t_first,
        dt=cfg.dt,
        tensor=tensor,
        grid=grid,
        problem=cfg.problem,
        seed=seed,
        train_indices=train,
        test_indices=test,
        param_ranges=[list(r) for r in cfg.param_ranges],
    )


def save_dataset(ds, path):
    """Directory layout: meta.json + snapshots.f64 ([param][node][time])."""
    os.makedirs(path, exist_ok=True)
    arrayio.write_json(
        os.path.join(path, "meta.json"),
        {
            "format": DATASET_FORMAT,
            "problem": ds.problem,
            "dims": list(ds.tensor.shape),
            "t_first": ds.t_first,
            "dt": ds.dt,
            "seed": ds.seed,
            "grid": {"nx": ds.grid.nx, "ny": ds.grid.ny,
                     "bounds": list(ds.grid.bounds)},
            "params": ds.params.tolist(),
            "param_ranges": [list(r) for r in ds.param_ranges],
            "train_indices": list(ds.train_indices),
            "test_indices": list(ds.test_indices),
        },
    )
    arrayio.write_array(os.path.join(path, "snapshots.f64"), ds.tensor)


def load_dataset(path):
    meta = arrayio.read_json(os.path.join(path, "meta.json"))
    version = meta.get("format")
    if version != DATASET_FORMAT:
        raise FormatError(
            f"{path}: format {version!r} is not {DATASET_FORMAT!r}"
        )
    dims = tuple(meta["dims"])
    tensor = arrayio.read_array(os.path.join(path, "snapshots.f64"), dims)
    g = meta["grid"]
    return SnapshotDataset(
        params=np.asarray(meta["params"], dtype=np.float64),
        t_first=float(meta["t_first"]),
        dt=float(meta["dt"]),
        tensor=tensor,
        grid=GridSpec(int(g["nx"]), int(g["ny"]), tuple(g["bounds"])),
        problem=meta["problem"],
        seed=int(meta["seed"]),
        train_indices=[int(v) for v in meta["train_indices"]],
        test_indices=[int(v) for v in meta["test_indices"]],
        param_ranges=[list(r) for r in meta.get("param_ranges", [])],
    )
