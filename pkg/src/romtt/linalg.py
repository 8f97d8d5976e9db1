"""Dense tensor/matrix kernels used by every other module.

Order-3 tensors are C-contiguous float64 ndarrays of shape (n1, n2, n3);
matrices are 2-D float64 ndarrays.  All functions here are pure and never
mutate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "check_finite",
    "unfold",
    "fold",
    "frobenius_norm",
    "truncated_svd",
    "TruncatedSVD",
    "solve_least_squares",
    "LstsqResult",
]


def check_finite(arr, name="array"):
    """Raise DataError if ``arr`` contains NaN or Inf."""
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite entries")
    return arr


def unfold(t, mode):
    """Matricize an order-3 tensor along one mode.

    Mode 1 gives n1 x (n2*n3) with row i the row-major flattening of
    t[i, :, :]; mode 2 gives n2 x (n1*n3) with row j the flattening of
    t[:, j, :]; mode 3 gives (n1*n2) x n3 with column k the flattening
    of t[:, :, k].
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ValueError(f"expected an order-3 tensor, got ndim={t.ndim}")
    n1, n2, n3 = t.shape
    if mode == 1:
        return t.reshape(n1, n2 * n3).copy()
    if mode == 2:
        return np.ascontiguousarray(t.transpose(1, 0, 2)).reshape(n2, n1 * n3)
    if mode == 3:
        return t.reshape(n1 * n2, n3).copy()
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def fold(m, mode, dims):
    """Inverse of :func:`unfold`; exact element-for-element round trip."""
    m = np.asarray(m, dtype=np.float64)
    n1, n2, n3 = dims
    if mode == 1:
        return m.reshape(n1, n2, n3).copy()
    if mode == 2:
        return np.ascontiguousarray(m.reshape(n2, n1, n3).transpose(1, 0, 2))
    if mode == 3:
        return m.reshape(n1, n2, n3).copy()
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def frobenius_norm(t):
    """sqrt of the sum of squared entries, for any array shape."""
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


@dataclass
class TruncatedSVD:
    """Rank-truncated SVD.

    ``u`` is rows x rank with orthonormal columns, ``vt`` rank x cols with
    orthonormal rows, ``s`` the kept singular values.  ``spectrum`` holds
    the full set of singular values with sub-roundoff values snapped to
    exact zero, so the truncation rule can be audited directly.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank: int
    spectrum: np.ndarray


def truncated_svd(m, delta):
    """SVD truncated by absolute Frobenius tail: the returned rank is the
    smallest r >= 1 with sqrt(sum_{i>r} s_i^2) <= delta.

    Ties at the threshold keep the smaller rank.  Singular values below
    max(rows, cols) * eps * s_max count as exact zeros, so numerically
    rank-deficient inputs truncate at their true rank even for delta=0.
    Sign convention: the first nonzero entry of each left singular vector
    is nonnegative.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    check_finite(m, "matrix")

    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size and s[0] > 0:
        floor = max(m.shape) * np.finfo(np.float64).eps * s[0]
        s = np.where(s < floor, 0.0, s)

    tails = np.sqrt(np.concatenate([np.cumsum(s[::-1] ** 2)[::-1][1:], [0.0]]))
    rank = int(np.argmax(tails <= delta)) + 1  # first index satisfying the rule
    rank = max(1, min(rank, s.size))

    u = u[:, :rank].copy()
    vt = vt[:rank, :].copy()
    for j in range(rank):
        nz = np.nonzero(u[:, j])[0]
        if nz.size and u[nz[0], j] < 0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return TruncatedSVD(u=u, s=s[:rank].copy(), vt=vt, rank=rank, spectrum=s)


@dataclass
class LstsqResult:
    """Solution of a (possibly Tikhonov-damped) least-squares system."""

    x: np.ndarray
    rank: int
    rank_deficient: bool
    residual_norm: float


def solve_least_squares(a, b, lam=0.0):
    """Minimize ||A X - B||_F^2 + lam^2 ||X||_F^2.

    Solved through an orthogonal factorization of the damped system with
    lam * I appended below A.  Rank-deficient systems return the
    minimum-norm solution with ``rank_deficient`` set instead of raising.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    b = np.atleast_2d(b.reshape(-1, 1) if squeeze else b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"row mismatch: A has {a.shape[0]} rows, B has {b.shape[0]}"
        )
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    check_finite(a, "A")
    check_finite(b, "B")

    n = a.shape[1]
    if lam > 0:
        a_aug = np.vstack([a, lam * np.eye(n)])
        b_aug = np.vstack([b, np.zeros((n, b.shape[1]))])
    else:
        a_aug, b_aug = a, b

    x, _, rank, _ = np.linalg.lstsq(a_aug, b_aug, rcond=None)
    residual = float(np.linalg.norm(a @ x - b))
    if squeeze:
        x = x[:, 0]
    return LstsqResult(
        x=x,
        rank=int(rank),
        rank_deficient=bool(rank < n),
        residual_norm=residual,
    )
