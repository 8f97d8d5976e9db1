"""Command-line interface.

    romtt generate  --config c.json --out dir [--seed N]
    romtt benchmark --config c.json --out dir [--seed N]
    romtt predict   --model dir --mu "0.1,-1" --t 3.0 [--out field.f64]
    romtt report    --in dir --format csv|json

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from . import arrayio, bench, fom, pipeline
from .errors import ConfigError, DataError, FormatError, SolverError


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, exit 1 rather than 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def cmd_generate(args):
    doc = _load_config(args.config)
    cfg = fom.FOMConfig.from_dict(doc)
    ds = fom.generate_dataset(cfg, args.seed)
    fom.save_dataset(ds, args.out)
    print(f"wrote {ds.tensor.shape[0]}x{ds.tensor.shape[1]}"
          f"x{ds.tensor.shape[2]} dataset to {args.out}")
    return 0


def cmd_benchmark(args):
    doc = _load_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    sweep_axes = [k for k in ("train_t_end", "n_gca")
                  if isinstance(doc.get(k), list)]
    if len(sweep_axes) > 1:
        raise ConfigError(f"only one sweep axis allowed, got {sweep_axes}")
    if sweep_axes:
        axis = sweep_axes[0]
        values = doc.pop(axis)
        bench.run_sweep(doc, axis, values, args.out)
        print(f"swept {axis} over {values}; results in {args.out}")
    else:
        cfg = bench.ExperimentConfig.from_dict(doc)
        reports, _ = bench.run_experiment(cfg, args.out)
        for r in reports:
            print(f"{r.method}: global mean relative error "
                  f"{r.global_mean:.3e}")
    return 0


def cmd_predict(args):
    model = pipeline.load_model(args.model)
    mu = np.array([float(v) for v in args.mu.split(",")])
    if isinstance(model, pipeline.MFModel):
        field = pipeline.mf_predict(model, mu, args.t)
    else:
        field = pipeline.lf_predict(model, mu, args.t)
    if args.out:
        arrayio.write_array(args.out, field)
    print(json.dumps({
        "mu": mu.tolist(),
        "t": args.t,
        "n_nodes": int(field.shape[0]),
        "norm": float(np.linalg.norm(field)),
        "min": float(field.min()),
        "max": float(field.max()),
        "saved_to": args.out,
    }))
    return 0


def cmd_report(args):
    import os

    if args.format == "csv":
        path = os.path.join(args.indir, "report.csv")
        if not os.path.exists(path):
            raise ConfigError(f"no report.csv under {args.indir}")
        with open(path) as fh:
            sys.stdout.write(fh.read())
    else:
        for name in ("summary.json", "sweep_summary.json"):
            path = os.path.join(args.indir, name)
            if os.path.exists(path):
                with open(path) as fh:
                    sys.stdout.write(fh.read())
                return 0
        raise ConfigError(f"no summary under {args.indir}")
    return 0


def build_parser():
    parser = _Parser(prog="romtt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="solve and store a dataset")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_generate)

    ben = sub.add_parser("benchmark", help="run methods and write reports")
    ben.add_argument("--config", required=True)
    ben.add_argument("--out", required=True)
    ben.add_argument("--seed", type=int, default=None)
    ben.set_defaults(func=cmd_benchmark)

    pre = sub.add_parser("predict", help="evaluate a stored model")
    pre.add_argument("--model", required=True)
    pre.add_argument("--mu", required=True,
                     help="comma-separated parameter values")
    pre.add_argument("--t", type=float, required=True)
    pre.add_argument("--out", default=None,
                     help="optional raw float64 output file")
    pre.set_defaults(func=cmd_predict)

    rep = sub.add_parser("report", help="print stored reports")
    rep.add_argument("--in", dest="indir", required=True)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, DataError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
