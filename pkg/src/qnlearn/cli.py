"""Command-line surface binding the library into experiment pipelines.

Verbs: generate, simulate, train, predict, whatif, eval,
transform-selfloop, benchmark.  Configuration files are JSON; ``--seed``
and ``--out-dir`` are accepted by every verb that uses them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import Scenario, prediction_error, summarize_errors, whatif
from .experiment import BenchmarkSpec, ExperimentSpec, run_benchmark, run_generate
from .fluid import forward_trajectory
from .model import QnModel, SelfLoopSpec, selfloop_transform, validate_model
from .simulate import EnsembleConfig, ensemble_average
from .trace import GridSpec
from .training import TrainConfig, train


def _parse_vector(text: str, dtype=float) -> np.ndarray:
    return np.array([dtype(v) for v in text.split(",")])


def _grid_from_args(args) -> GridSpec:
    return GridSpec(dt=args.dt, H=args.steps)


def cmd_generate(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = ExperimentSpec.from_json(doc)
    manifest = run_generate(spec, args.out_dir)
    print(f"wrote {manifest}")
    return 0


def cmd_simulate(args) -> int:
    m = io.load_model(args.model)
    x0 = _parse_vector(args.x0, int)
    cfg = EnsembleConfig(
        replications=args.replications,
        T=(args.steps - 1) * args.dt,
        dt=args.dt,
        master_seed=args.seed if args.seed is not None else 0,
    )
    trace = ensemble_average(m, x0, cfg)
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_trace(trace, out)
    print(f"wrote {out} ({trace.H} rows, N={trace.N:g})")
    return 0


def cmd_train(args) -> int:
    dataset = io.load_dataset(args.dataset)
    s = _parse_vector(args.servers, int) if args.servers else dataset.s
    if s is None:
        print("error: dataset manifest has no concurrency levels; pass --servers", file=sys.stderr)
        return 2
    cfg_doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        cfg_doc["init_seed"] = args.seed
    cfg = TrainConfig(**cfg_doc)
    report = train(dataset, s, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.save_model(report.learned_model, out_dir / "learned_model.json")
    io.save_report(report, out_dir / "train_report.json")
    print(
        f"trained in {report.iterations} iterations (stop: {report.stop_reason}), "
        f"validation error {report.final_validation_err_pct:.4g}%"
    )
    print(f"wrote {out_dir / 'learned_model.json'} and {out_dir / 'train_report.json'}")
    return 0


def cmd_predict(args) -> int:
    m = io.load_model(args.model)
    x0 = _parse_vector(args.x0)
    trace = forward_trajectory(m, x0, _grid_from_args(args))
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_trace(trace, out)
    print(f"wrote {out}")
    return 0


def cmd_whatif(args) -> int:
    m = io.load_model(args.model)
    doc = json.loads(Path(args.scenario).read_text())
    scenario = Scenario(
        base_model=m,
        x0=np.asarray(doc["x0"], dtype=float),
        s=np.asarray(doc["s"], dtype=np.int64) if "s" in doc else None,
        P=np.asarray(doc["P"], dtype=float) if "P" in doc else None,
        population_scale=doc.get("population_scale"),
    )
    if "grid" in doc:
        grid = GridSpec(dt=float(doc["grid"]["dt"]), H=int(doc["grid"]["H"]))
    elif args.dt and args.steps:
        grid = _grid_from_args(args)
    else:
        print("error: no grid: put a 'grid' section in the scenario or pass --dt/--steps", file=sys.stderr)
        return 2
    predicted = whatif(scenario, grid)
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_trace(predicted, out)
    print(f"wrote {out}")
    if args.truth:
        truth = io.load_trace(args.truth)
        err = prediction_error(predicted, truth)
        print(f"err = {err:.4g}%")
    return 0


def cmd_eval(args) -> int:
    if len(args.predicted) != len(args.measured):
        print("error: --predicted and --measured need the same number of files", file=sys.stderr)
        return 2
    errors = []
    for pred_file, meas_file in zip(args.predicted, args.measured):
        err = prediction_error(io.load_trace(pred_file), io.load_trace(meas_file))
        errors.append(err)
        print(f"{pred_file} vs {meas_file}: err = {err:.4g}%")
    if args.summary:
        out = Path(args.out_dir) / args.summary
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(io.summary_to_json(summarize_errors(errors)))
        print(f"wrote {out}")
    return 0


def cmd_transform_selfloop(args) -> int:
    doc = json.loads(Path(args.model).read_text())
    pi = _parse_vector(args.pi)
    P_hat, mu_hat = selfloop_transform(doc["P"], doc["mu"], SelfLoopSpec(pi=pi))
    m = QnModel(s=doc["s"], mu=mu_hat, P=P_hat)
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_model(m, out)
    if np.all(pi == 0):
        violations = validate_model(m)
        if violations:  # pi = 0 must yield a canonical loop-free model
            print("warning: " + "; ".join(violations), file=sys.stderr)
    print(f"wrote {out}")
    return 0


def cmd_benchmark(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = BenchmarkSpec.from_json(doc)
    result = run_benchmark(spec, args.out_dir)
    for i, res in enumerate(result.models):
        print(
            f"model {i}: validation {res.report.final_validation_err_pct:.3g}%, "
            f"population what-if max {res.population_errors.max():.3g}%, "
            f"concurrency what-if max {res.concurrency_errors.max():.3g}% "
            f"(bottleneck {res.bottleneck_before + 1} -> {res.bottleneck_after + 1})"
        )
    print(f"wrote scatter and summary files under {args.out_dir}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qnlearn",
        description="Learn closed queuing-network models from queue-length traces "
        "and evaluate them under what-if scenarios.",
    )
    # flags shared by every verb; --seed is a no-op for the deterministic ones
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed override")
    common.add_argument("--out-dir", default=".", help="directory for outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate", parents=[common], help="simulate a dataset of ensemble-averaged traces"
    )
    p.add_argument("--config", required=True, help="experiment spec JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", parents=[common], help="one ensemble-averaged trace for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--x0", required=True, help="comma-separated initial queue lengths")
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=1001, help="grid points H")
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit routing and rates to a dataset")
    p.add_argument("--dataset", required=True, help="manifest path or dataset directory")
    p.add_argument("--servers", default=None, help="comma-separated concurrency levels")
    p.add_argument("--config", default=None, help="train config JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="fluid trajectory of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=1001)
    p.add_argument("--out", default="prediction.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("whatif", parents=[common], help="predict under scenario overrides")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--truth", default=None, help="ground-truth trace CSV to score against")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="whatif.csv")
    p.set_defaults(func=cmd_whatif)

    p = sub.add_parser("eval", parents=[common], help="score predicted traces against measured ones")
    p.add_argument("--predicted", nargs="+", required=True)
    p.add_argument("--measured", nargs="+", required=True)
    p.add_argument("--summary", default=None, help="write box-plot summary JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "transform-selfloop",
        parents=[common],
        help="rewrite a model with self loops to target diagonal",
    )
    p.add_argument("--model", required=True, help="model JSON, diagonal may be nonzero")
    p.add_argument("--pi", required=True, help="comma-separated target self-loop probabilities")
    p.add_argument("--out", default="transformed_model.json")
    p.set_defaults(func=cmd_transform_selfloop)

    p = sub.add_parser(
        "benchmark", parents=[common], help="full synthetic study: generate, train, what-ifs"
    )
    p.add_argument("--config", default=None, help="benchmark spec JSON (defaults: desk scale)")
    p.set_defaults(func=cmd_benchmark, out_dir="benchmark_out")

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
