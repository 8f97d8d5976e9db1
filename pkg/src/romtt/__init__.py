"""romtt: time-extrapolating reduced-order models for parametric PDEs.

Snapshot tensors indexed (parameter, space, time) are factorized into
three cores; a polynomial ODE learned for the time core extrapolates the
dynamics, parametric time-slice surrogates recover the parameter core
for unseen parameters, and an optional branch network corrects it with
multi-fidelity training.
"""

from .errors import (
    BlowUpError,
    ConfigError,
    DataError,
    FormatError,
    RomttError,
    SolverError,
)
from .fom import FOMConfig, GridSpec, SnapshotDataset, generate_dataset
from .linalg import fold, frobenius_norm, solve_least_squares, truncated_svd, unfold
from .metrics import aggregate_errors, relative_error
from .opinf import OpInfModel, Trajectory, fit_opinf, simulate
from .pipeline import (
    LFModel,
    MFModel,
    lf_offline,
    lf_predict,
    mf_offline,
    mf_predict,
)
from .surrogate import fit_rbf_slice, pod_basis, pod_project_error
from .tt import TTCores, tt_eval, tt_reconstruct, tt_svd

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "ConfigError", "DataError", "FormatError", "RomttError",
    "SolverError",
    "FOMConfig", "GridSpec", "SnapshotDataset", "generate_dataset",
    "fold", "frobenius_norm", "solve_least_squares", "truncated_svd",
    "unfold",
    "aggregate_errors", "relative_error",
    "OpInfModel", "Trajectory", "fit_opinf", "simulate",
    "LFModel", "MFModel", "lf_offline", "lf_predict", "mf_offline",
    "mf_predict",
    "fit_rbf_slice", "pod_basis", "pod_project_error",
    "TTCores", "tt_eval", "tt_reconstruct", "tt_svd",
    "__version__",
]
