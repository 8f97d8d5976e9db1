"""Relative-error metrics and their aggregates over (parameter, time)
error tables."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = ["relative_error", "aggregate_errors", "ErrorReport"]


def relative_error(u_true, u_pred):
    """l2 relative error ||true - pred|| / ||true||.

    A zero reference vector falls back to the absolute l2 norm of the
    prediction; report writers flag rows where that happened.
    """
    u_true = np.asarray(u_true, dtype=np.float64)
    u_pred = np.asarray(u_pred, dtype=np.float64)
    if u_true.shape != u_pred.shape:
        raise ValueError(
            f"shape mismatch {u_true.shape} vs {u_pred.shape}"
        )
    denom = np.linalg.norm(u_true)
    diff = np.linalg.norm(u_true - u_pred)
    return float(diff / denom) if denom > 0 else float(np.linalg.norm(u_pred))


def aggregate_errors(table):
    """Means of a complete (n_params, n_times) error table.

    Returns (per_time, per_param, global_mean) where the global mean is
    the time average of the per-time parameter means.
    """
    table = np.atleast_2d(np.asarray(table, dtype=np.float64))
    bad = np.argwhere(~np.isfinite(table))
    if bad.size:
        cells = ", ".join(f"({i},{j})" for i, j in bad[:10])
        more = "" if bad.shape[0] <= 10 else f" and {bad.shape[0] - 10} more"
        raise DataError(f"error table has missing cells at {cells}{more}")
    per_time = table.mean(axis=0)
    per_param = table.mean(axis=1)
    return per_time, per_param, float(per_time.mean())


@dataclass
class ErrorReport:
    """Per-point errors for one method plus the derived aggregates."""

    method: str
    params: np.ndarray        # (n_params, p) test parameters
    times: np.ndarray         # (n_times,)
    errors: np.ndarray        # (n_params, n_times)
    timings: dict = field(default_factory=dict)
    zero_norm_cells: int = 0

    def __post_init__(self):
        self.errors = np.atleast_2d(np.asarray(self.errors, dtype=np.float64))
        per_time, per_param, global_mean = aggregate_errors(self.errors)
        self.per_time = per_time
        self.per_param = per_param
        self.global_mean = global_mean
