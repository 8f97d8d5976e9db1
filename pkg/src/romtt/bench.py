"""Experiment orchestration: run the surrogate methods over a benchmark
dataset and emit plot-ready CSV/JSON reports.

A single experiment fixes one dataset, one training window, one slice
count, one seed.  Config documents may instead give a list for
``train_t_end`` or ``n_gca``; the runner then sweeps that axis into
per-run subdirectories and writes a combined trend summary.
"""

import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fom, metrics, nn, pipeline, surrogate
from .errors import ConfigError

__all__ = ["ExperimentConfig", "run_experiment", "run_sweep", "METHODS"]

METHODS = ("LF-TTOI", "MF-TTOI", "POD-Proj", "POD-NN")
REPORT_HEADER = "# romtt-report v1"


@dataclass
class ExperimentConfig:
    """One benchmark run; mirrors the JSON config document."""

    dataset: dict                      # FOMConfig fields or {"path": dir}
    methods: tuple = ("LF-TTOI",)
    train_t_end: float = 0.0           # 0: problem default
    test_window: Optional[tuple] = None
    n_gca: int = 6
    gca_times: Optional[list] = None
    eps_tt: float = 1e-8
    opinf: dict = field(default_factory=dict)
    mf: dict = field(default_factory=dict)
    podnn: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("method list is empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc):
        known = {
            "dataset", "methods", "train_t_end", "test_window", "n_gca",
            "gca_times", "eps_tt", "opinf", "mf", "podnn", "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)


_TRAIN_DEFAULTS = {"heat": 1.0, "advdiff": 1.5}


def _load_or_generate(cfg):
    if "path" in cfg.dataset:
        return fom.load_dataset(cfg.dataset["path"])
    return fom.generate_dataset(fom.FOMConfig.from_dict(cfg.dataset), cfg.seed)


def _resolve_windows(cfg, ds):
    train_end = cfg.train_t_end or _TRAIN_DEFAULTS.get(ds.problem, ds.t_end)
    test_lo, test_hi = cfg.test_window or (ds.t_first, ds.t_end)
    eps = 1e-9
    if not (ds.t_first - eps <= test_lo <= test_hi <= ds.t_end + eps):
        raise ConfigError(
            f"test window [{test_lo}, {test_hi}] outside the dataset window "
            f"[{ds.t_first}, {ds.t_end}]"
        )
    if train_end > test_hi + eps:
        raise ConfigError(
            f"training window end {train_end} exceeds the test window end "
            f"{test_hi}"
        )
    return train_end, (test_lo, test_hi)


def _test_grid(ds, window):
    lo, hi = window
    times = ds.times
    mask = (times >= lo - 1e-9) & (times <= hi + 1e-9)
    return times[mask]


def run_experiment(cfg, out_dir):
    """Run every requested method once and write report.csv, summary.json
    and the per-method model directories into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    ds = _load_or_generate(cfg)
    timings["generate"] = time.perf_counter() - t0

    train_end, test_window = _resolve_windows(cfg, ds)
    ds_train = ds.subset(ds.train_indices, t_end=train_end)
    test_times = _test_grid(ds, test_window)
    test_params = ds.params[ds.test_indices]
    test_tensor = ds.tensor[ds.test_indices]
    time_cols = _grid_cols(ds, test_times)

    gca_times = cfg.gca_times or pipeline.default_gca_times(
        train_end, ds.dt, cfg.n_gca
    )

    reports = []
    failures = []
    cache = {}
    summary = {
        "problem": ds.problem,
        "seed": cfg.seed,
        "train_t_end": train_end,
        "test_window": list(test_window),
        "gca_times": [float(t) for t in gca_times],
        "eps_tt": cfg.eps_tt,
        "error_window_note": (
            "global means average over the full test window, the training "
            "range included"
        ),
        "methods": {},
    }

    for method in cfg.methods:
        try:
            report, extra = _run_method(
                method, cfg, ds, ds_train, gca_times, test_params,
                test_tensor, test_times, time_cols, out_dir, cache,
            )
            reports.append(report)
            summary["methods"][method] = {
                "global_mean": report.global_mean,
                "per_time": report.per_time.tolist(),
                "zero_norm_cells": report.zero_norm_cells,
                "timings": report.timings,
                **extra,
            }
        except Exception as exc:  # keep partial results, record the failure
            failures.append({"method": method, "error": str(exc)})

    if failures:
        summary["failures"] = failures
    _write_report_csv(os.path.join(out_dir, "report.csv"),
                      reports, test_params, test_times)
    ranking = sorted(
        (r.global_mean, r.method) for r in reports
    )
    summary["ranking"] = [m for _, m in ranking]
    summary["timings"] = timings
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failures and not reports:
        raise ConfigError(
            "every method failed: "
            + "; ".join(f"{f['method']}: {f['error']}" for f in failures)
        )
    return reports, summary


def _grid_cols(ds, test_times):
    return [int(round((t - ds.t_first) / ds.dt)) for t in test_times]


def _run_method(method, cfg, ds, ds_train, gca_times, test_params,
                test_tensor, test_times, time_cols, out_dir, cache):
    timings = {}
    extra = {}
    t0 = time.perf_counter()

    if method in ("LF-TTOI", "MF-TTOI"):
        if "lf" not in cache:
            settings = pipeline.OpInfSettings(**cfg.opinf)
            cache["lf"] = pipeline.lf_offline(
                ds_train, gca_times, cfg.eps_tt, settings,
                t_max=float(test_times[-1]),
            )
        lf_model = cache["lf"]
        model = lf_model
        if method == "MF-TTOI":
            mf_settings = pipeline.MFSettings(
                **{"seed": cfg.seed, **cfg.mf}
            )
            model = pipeline.mf_offline(lf_model, ds_train, mf_settings)
        timings["train"] = time.perf_counter() - t0
        extra["ranks"] = list(lf_model.cores.ranks)
        extra["lambda_selected"] = lf_model.lam_selected

        t0 = time.perf_counter()
        predict = (
            pipeline.lf_predict_series
            if method == "LF-TTOI"
            else pipeline.mf_predict_series
        )
        errors, zero_cells = _error_table(
            lambda mu: predict(model, mu, test_times),
            test_params, test_tensor, time_cols,
        )
        timings["predict"] = time.perf_counter() - t0
        pipeline.save_model(model, os.path.join(out_dir, f"model_{method}"))

    elif method == "POD-Proj":
        stacked = ds_train.tensor.transpose(1, 0, 2).reshape(
            ds_train.tensor.shape[1], -1
        )
        basis = surrogate.pod_basis(stacked, cfg.eps_tt)
        timings["train"] = time.perf_counter() - t0
        extra["r_pod"] = basis.rank

        t0 = time.perf_counter()
        errors = np.empty((test_params.shape[0], len(test_times)))
        zero_cells = 0
        for i in range(test_params.shape[0]):
            for j, col in enumerate(time_cols):
                truth = test_tensor[i, :, col]
                if not np.any(truth):
                    zero_cells += 1
                errors[i, j] = surrogate.pod_project_error(basis, truth)
        timings["predict"] = time.perf_counter() - t0

    elif method == "POD-NN":
        podnn_cfg = dict(cfg.podnn)
        hidden = tuple(podnn_cfg.pop("hidden", (32, 32)))
        train_cfg = nn.TrainConfig(**{"seed": cfg.seed, **podnn_cfg})
        model = surrogate.fit_podnn(
            ds_train.params, ds_train.times, ds_train.tensor,
            cfg.eps_tt, train_cfg, hidden=hidden,
        )
        timings["train"] = time.perf_counter() - t0
        extra["r_pod"] = model.basis.rank

        t0 = time.perf_counter()

        def predict_all(mu):
            return np.column_stack(
                [surrogate.predict_podnn(model, mu, t) for t in test_times]
            )

        errors, zero_cells = _error_table(
            predict_all, test_params, test_tensor, time_cols
        )
        timings["predict"] = time.perf_counter() - t0
    else:
        raise ConfigError(f"unknown method {method!r}")

    report = metrics.ErrorReport(
        method=method,
        params=test_params,
        times=np.asarray(test_times, dtype=np.float64),
        errors=errors,
        timings={k: round(v, 6) for k, v in timings.items()},
        zero_norm_cells=zero_cells,
    )
    return report, extra


def _error_table(predict_series, test_params, test_tensor, time_cols):
    errors = np.empty((test_params.shape[0], len(time_cols)))
    zero_cells = 0
    for i, mu in enumerate(test_params):
        fields = predict_series(mu)
        for j, col in enumerate(time_cols):
            truth = test_tensor[i, :, col]
            if not np.any(truth):
                zero_cells += 1
            errors[i, j] = metrics.relative_error(truth, fields[:, j])
    return errors, zero_cells


def _write_report_csv(path, reports, test_params, test_times):
    p = test_params.shape[1] if reports else 0
    mu_cols = ",".join(f"mu{k}" for k in range(p))
    with open(path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        fh.write(f"method,{mu_cols},t,rel_error\n")
        for report in reports:
            for i, mu in enumerate(test_params):
                mu_txt = ",".join(f"{v:.17g}" for v in mu)
                for j, t in enumerate(test_times):
                    fh.write(
                        f"{report.method},{mu_txt},{t:.17g},"
                        f"{report.errors[i, j]:.17g}\n"
                    )


def read_report_csv(path):
    """Parse report.csv back into per-method dictionaries of rows."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != REPORT_HEADER:
            raise ConfigError(f"{path}: unexpected header {header!r}")
        columns = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            rows.append({
                "method": parts[0],
                "mu": [float(v) for v in parts[1:-2]],
                "t": float(parts[-2]),
                "rel_error": float(parts[-1]),
            })
    return columns, rows


def run_sweep(base_doc, axis, values, out_dir):
    """Run one experiment per value of ``axis`` into subdirectories and
    write a combined trend summary."""
    os.makedirs(out_dir, exist_ok=True)
    trend = []
    for k, value in enumerate(values):
        doc = dict(base_doc)
        doc[axis] = value
        cfg = ExperimentConfig.from_dict(doc)
        sub = os.path.join(out_dir, f"run_{k:02d}")
        reports, summary = run_experiment(cfg, sub)
        trend.append({
            "value": value,
            "out": sub,
            "global_means": {
                r.method: r.global_mean for r in reports
            },
        })
    with open(os.path.join(out_dir, "sweep_summary.json"), "w") as fh:
        json.dump({"axis": axis, "trend": trend}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return trend
