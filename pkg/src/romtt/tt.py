"""Tensor-train factorization of snapshot tensors.

A snapshot tensor indexed (parameter, space, time) factorizes into a
parameter core (matrix), a space core (order-3 tensor) and a time core
(matrix), chained by contraction.  Two sequential truncated SVDs build
the chain; the per-step tolerance delta = eps * ||s||_F / sqrt(2) makes
the aggregate relative reconstruction error at most ``eps``.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import arrayio
from .errors import FormatError
from .linalg import check_finite, frobenius_norm, truncated_svd

__all__ = ["TTCores", "tt_svd", "tt_reconstruct", "tt_eval",
           "save_tt_cores", "load_tt_cores"]


@dataclass
class TTCores:
    """The three cores of a (parameter, space, time) snapshot tensor.

    param_core : (n_samples, r1) matrix, one row per parameter sample
    space_core : (r1, n_space, r2) tensor
    time_core  : (r2, n_time) matrix, one column per time instant
    eps_tt     : relative tolerance the decomposition was built with
    rel_error  : realized relative reconstruction error
    """

    param_core: np.ndarray
    space_core: np.ndarray
    time_core: np.ndarray
    eps_tt: float
    rel_error: float

    @property
    def ranks(self):
        return (self.param_core.shape[1], self.time_core.shape[0])

    @property
    def dims(self):
        return (
            self.param_core.shape[0],
            self.space_core.shape[1],
            self.time_core.shape[1],
        )


def tt_svd(s, eps_tt):
    """Decompose an order-3 tensor, truncating so the relative Frobenius
    reconstruction error stays below ``eps_tt``.

    Left factors are orthonormal: the parameter core has orthonormal
    columns and the space core's left unfolding has orthonormal columns.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 3:
        raise ValueError(f"expected an order-3 tensor, got ndim={s.ndim}")
    n1, n2, n3 = s.shape
    if min(n1, n2, n3) == 0:
        raise ValueError(f"degenerate tensor dims {s.shape}")
    if eps_tt <= 0:
        raise ValueError(f"eps_tt must be positive, got {eps_tt}")
    check_finite(s, "snapshot tensor")

    total = frobenius_norm(s)
    delta = eps_tt * total / np.sqrt(2.0)

    first = truncated_svd(s.reshape(n1, n2 * n3), delta)
    r1 = first.rank
    param_core = first.u
    remainder = first.s[:, None] * first.vt  # r1 x (n2*n3)

    second = truncated_svd(remainder.reshape(r1 * n2, n3), delta)
    r2 = second.rank
    space_core = second.u.reshape(r1, n2, r2)
    time_core = second.s[:, None] * second.vt

    # Stage errors are orthogonal, so the realized error is the root sum
    # of squares of the two discarded tails.
    tail1 = float(np.linalg.norm(first.spectrum[r1:]))
    tail2 = float(np.linalg.norm(second.spectrum[r2:]))
    err = np.hypot(tail1, tail2)
    rel = err / total if total > 0 else 0.0

    return TTCores(
        param_core=param_core,
        space_core=space_core,
        time_core=time_core,
        eps_tt=float(eps_tt),
        rel_error=rel,
    )


def tt_reconstruct(cores):
    """Contract the three cores back into the full tensor."""
    g1, g2, g3 = cores.param_core, cores.space_core, cores.time_core
    if g1.shape[1] != g2.shape[0] or g2.shape[2] != g3.shape[0]:
        raise ValueError(
            f"inconsistent core shapes {g1.shape}, {g2.shape}, {g3.shape}"
        )
    return np.einsum("ia,anb,bj->inj", g1, g2, g3, optimize=True)


def tt_eval(param_vec, cores, time_vec):
    """Evaluate one (parameter, time) slice of the contraction.

    Returns the length-n_space field for the given parameter-core row and
    time-core column; bilinear in the two vectors.
    """
    g2 = cores.space_core
    param_vec = np.asarray(param_vec, dtype=np.float64)
    time_vec = np.asarray(time_vec, dtype=np.float64)
    if param_vec.shape != (g2.shape[0],):
        raise ValueError(
            f"parameter vector length {param_vec.shape} does not match rank "
            f"{g2.shape[0]}"
        )
    if time_vec.shape != (g2.shape[2],):
        raise ValueError(
            f"time vector length {time_vec.shape} does not match rank "
            f"{g2.shape[2]}"
        )
    return np.einsum("a,anb,b->n", param_vec, g2, time_vec, optimize=True)


def save_tt_cores(cores, path):
    """Write cores to a directory: tt_meta.json + G1.f64 / G2.f64 / G3.f64."""
    os.makedirs(path, exist_ok=True)
    arrayio.write_json(
        os.path.join(path, "tt_meta.json"),
        {
            "ranks": list(cores.ranks),
            "dims": list(cores.dims),
            "eps_tt": cores.eps_tt,
            "rel_error": cores.rel_error,
        },
    )
    arrayio.write_array(os.path.join(path, "G1.f64"), cores.param_core)
    arrayio.write_array(os.path.join(path, "G2.f64"), cores.space_core)
    arrayio.write_array(os.path.join(path, "G3.f64"), cores.time_core)


def load_tt_cores(path):
    meta = arrayio.read_json(os.path.join(path, "tt_meta.json"))
    try:
        r1, r2 = meta["ranks"]
        n1, n2, n3 = meta["dims"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed tt_meta.json ({exc})") from exc
    return TTCores(
        param_core=arrayio.read_array(os.path.join(path, "G1.f64"), (n1, r1)),
        space_core=arrayio.read_array(os.path.join(path, "G2.f64"), (r1, n2, r2)),
        time_core=arrayio.read_array(os.path.join(path, "G3.f64"), (r2, n3)),
        eps_tt=float(meta["eps_tt"]),
        rel_error=float(meta.get("rel_error", 0.0)),
    )
