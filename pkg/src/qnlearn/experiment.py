"""Reproducible experiment pipelines: dataset generation from a model,
and the full synthetic benchmark (random networks, training, what-if
sweeps over populations and concurrency levels).

Every pipeline draws all of its randomness from one master seed through
named substreams, so a single integer reproduces an entire experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import prediction_error, shift_bottleneck, summarize_errors
from .fluid import forward_trajectory
from .model import QnModel, RandomQnConfig, random_model
from .simulate import EnsembleConfig, ensemble_average
from .trace import Dataset, GridSpec, Trace
from .training import TrainConfig, TrainReport, train
from . import io

# substream index under a pipeline's master seed
_STREAM_GENERATE = 0


def _substream(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TraceGenSpec:
    """How many traces to build and how: per-station initial populations
    are uniform on the closed integer ``population_range``; each trace is
    an ensemble average of ``replications`` paths."""

    count: int
    population_range: tuple[int, int] = (0, 40)
    replications: int = 500
    dt: float = 0.01
    H: int = 1001

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("need at least one trace")
        lo, hi = self.population_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad population range {self.population_range}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @property
    def T(self) -> float:
        return (self.H - 1) * self.dt


def draw_initial_populations(M: int, spec: TraceGenSpec, seed_seq) -> np.ndarray:
    """Initial population vectors, one per trace; all-zero draws are
    redone (an empty network has no dynamics and no defined error)."""
    rng = np.random.default_rng(seed_seq)
    lo, hi = spec.population_range
    out = np.empty((spec.count, M), dtype=np.int64)
    for i in range(spec.count):
        x0 = rng.integers(lo, hi + 1, M)
        while x0.sum() == 0:
            x0 = rng.integers(lo, hi + 1, M)
        out[i] = x0
    return out


def generate_dataset(m: QnModel, spec: TraceGenSpec, master_seed: int) -> Dataset:
    """Simulate ``spec.count`` ensemble-averaged traces of model ``m``."""
    gen = _substream(master_seed, _STREAM_GENERATE)
    pop_seq, ens_seq = gen.spawn(2)
    x0s = draw_initial_populations(m.M, spec, pop_seq)
    ens_children = ens_seq.spawn(spec.count)
    traces = []
    for i in range(spec.count):
        cfg = EnsembleConfig(
            replications=spec.replications,
            T=spec.T,
            dt=spec.dt,
            master_seed=_seed_int(ens_children[i]),
        )
        traces.append(ensemble_average(m, x0s[i], cfg))
    return Dataset(traces=tuple(traces), s=m.s)


@dataclass(frozen=True)
class ExperimentSpec:
    """A generate-dataset run: the source model (file or random config),
    the trace generation parameters, and the master seed."""

    traces: TraceGenSpec
    model_file: str | None = None
    random_model_cfg: RandomQnConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.model_file is None) == (self.random_model_cfg is None):
            raise ValueError("specify exactly one of model_file / random_model_cfg")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentSpec":
        tr = doc.get("traces")
        if tr is None:
            raise ValueError("experiment spec missing 'traces' section")
        spec = TraceGenSpec(
            count=int(tr["count"]),
            population_range=tuple(tr.get("population_range", (0, 40))),
            replications=int(tr.get("replications", 500)),
            dt=float(tr.get("dt", 0.01)),
            H=int(tr.get("H", 1001)),
        )
        model = doc.get("model", {})
        model_file = model.get("file")
        random_cfg = None
        if "random" in model:
            r = model["random"]
            random_cfg = RandomQnConfig(
                M=int(r["M"]),
                rate_range=tuple(r.get("rate_range", (4.0, 30.0))),
                server_range=tuple(r.get("server_range", (15, 30))),
                seed=int(r.get("seed", 0)),
            )
        return cls(
            traces=spec,
            model_file=model_file,
            random_model_cfg=random_cfg,
            seed=int(doc.get("seed", 0)),
        )

    def resolve_model(self) -> QnModel:
        if self.model_file is not None:
            return io.load_model(self.model_file)
        return random_model(self.random_model_cfg)


def run_generate(spec: ExperimentSpec, out_dir) -> Path:
    """Generate a dataset on disk; returns the manifest path.

    Besides the manifest and trace CSVs, the resolved model and the seed
    are written next to them for provenance.
    """
    out_dir = Path(out_dir)
    m = spec.resolve_model()
    dataset = generate_dataset(m, spec.traces, spec.seed)
    manifest = io.save_dataset(dataset, out_dir)
    io.save_model(m, out_dir / "source_model.json")
    provenance = {
        "seed": spec.seed,
        "traces": {
            "count": spec.traces.count,
            "population_range": list(spec.traces.population_range),
            "replications": spec.traces.replications,
            "dt": spec.traces.dt,
            "H": spec.traces.H,
        },
    }
    (out_dir / "experiment.json").write_text(json.dumps(provenance, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# synthetic benchmark: random models -> train -> what-if sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkSpec:
    """The synthetic study, parameterized so it can run at desk scale."""

    n_models: int = 2
    M: int = 5
    rate_range: tuple[float, float] = (4.0, 30.0)
    server_range: tuple[int, int] = (15, 30)
    traces: TraceGenSpec = field(
        default_factory=lambda: TraceGenSpec(count=40, replications=200)
    )
    train: TrainConfig = field(default_factory=TrainConfig)
    whatif_populations: int = 30
    whatif_concurrency_populations: int = 5
    server_increment: int = 20
    seed: int = 0

    @classmethod
    def from_json(cls, doc: dict) -> "BenchmarkSpec":
        tr = doc.get("traces", {})
        traces = TraceGenSpec(
            count=int(tr.get("count", 40)),
            population_range=tuple(tr.get("population_range", (0, 40))),
            replications=int(tr.get("replications", 200)),
            dt=float(tr.get("dt", 0.01)),
            H=int(tr.get("H", 1001)),
        )
        tc = doc.get("train", {})
        train_cfg = TrainConfig(
            learning_rate=float(tc.get("learning_rate", 0.05)),
            patience_iters=int(tc.get("patience_iters", 50)),
            min_improvement_pct=float(tc.get("min_improvement_pct", 0.01)),
            max_iters=int(tc.get("max_iters", 10_000)),
            train_fraction=float(tc.get("train_fraction", 0.5)),
        )
        return cls(
            n_models=int(doc.get("n_models", 2)),
            M=int(doc.get("M", 5)),
            rate_range=tuple(doc.get("rate_range", (4.0, 30.0))),
            server_range=tuple(doc.get("server_range", (15, 30))),
            traces=traces,
            train=train_cfg,
            whatif_populations=int(doc.get("whatif_populations", 30)),
            whatif_concurrency_populations=int(doc.get("whatif_concurrency_populations", 5)),
            server_increment=int(doc.get("server_increment", 20)),
            seed=int(doc.get("seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class BenchmarkModelResult:
    ground_truth: QnModel
    report: TrainReport
    population_errors: np.ndarray  # (n, ) err per unseen x0
    population_Ns: np.ndarray
    concurrency_errors: np.ndarray
    concurrency_Ns: np.ndarray
    shifted_s: np.ndarray
    bottleneck_before: int
    bottleneck_after: int
    worst_population_case: tuple[Trace, Trace]  # (measured, predicted)


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    spec: BenchmarkSpec
    models: tuple[BenchmarkModelResult, ...]


def _whatif_population_sweep(
    truth: QnModel, learned: QnModel, spec: BenchmarkSpec, eval_seq
) -> tuple[np.ndarray, np.ndarray, tuple[Trace, Trace]]:
    grid = GridSpec(dt=spec.traces.dt, H=spec.traces.H)
    gen = TraceGenSpec(
        count=spec.whatif_populations,
        population_range=spec.traces.population_range,
        replications=spec.traces.replications,
        dt=spec.traces.dt,
        H=spec.traces.H,
    )
    pop_seq, ens_seq = eval_seq.spawn(2)
    x0s = draw_initial_populations(truth.M, gen, pop_seq)
    children = ens_seq.spawn(gen.count)
    errors = np.empty(gen.count)
    Ns = np.empty(gen.count)
    worst = None
    worst_err = -1.0
    for i in range(gen.count):
        cfg = EnsembleConfig(
            replications=gen.replications, T=gen.T, dt=gen.dt, master_seed=_seed_int(children[i])
        )
        measured = ensemble_average(truth, x0s[i], cfg)
        predicted = forward_trajectory(learned, x0s[i].astype(np.float64), grid)
        errors[i] = prediction_error(predicted, measured)
        Ns[i] = measured.N
        if errors[i] > worst_err:
            worst_err = errors[i]
            worst = (measured, predicted)
    return errors, Ns, worst


def _whatif_concurrency_sweep(
    truth: QnModel, learned: QnModel, spec: BenchmarkSpec, eval_seq
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    grid = GridSpec(dt=spec.traces.dt, H=spec.traces.H)
    gen = TraceGenSpec(
        count=spec.whatif_concurrency_populations,
        population_range=spec.traces.population_range,
        replications=spec.traces.replications,
        dt=spec.traces.dt,
        H=spec.traces.H,
    )
    pop_seq, ens_seq = eval_seq.spawn(2)
    x0s = draw_initial_populations(truth.M, gen, pop_seq)
    # the capacity plan comes from the learned model; ground truth only
    # scores it
    ref_x0 = x0s[0].astype(np.float64)
    new_s, before, after = shift_bottleneck(learned, ref_x0, increment=spec.server_increment)
    truth_shifted = QnModel(s=new_s, mu=truth.mu, P=truth.P)
    learned_shifted = QnModel(s=new_s, mu=learned.mu, P=learned.P)
    children = ens_seq.spawn(gen.count)
    errors = np.empty(gen.count)
    Ns = np.empty(gen.count)
    for i in range(gen.count):
        cfg = EnsembleConfig(
            replications=gen.replications, T=gen.T, dt=gen.dt, master_seed=_seed_int(children[i])
        )
        measured = ensemble_average(truth_shifted, x0s[i], cfg)
        predicted = forward_trajectory(learned_shifted, x0s[i].astype(np.float64), grid)
        errors[i] = prediction_error(predicted, measured)
        Ns[i] = measured.N
    return errors, Ns, new_s, before, after


def run_benchmark_model(spec: BenchmarkSpec, index: int) -> BenchmarkModelResult:
    """One benchmark instance: generate, train, run both what-if sweeps."""
    root = np.random.SeedSequence(spec.seed, spawn_key=(index,))
    model_seq, data_seq, init_seq, eval_root = root.spawn(4)
    truth = random_model(
        RandomQnConfig(
            M=spec.M,
            rate_range=spec.rate_range,
            server_range=spec.server_range,
            seed=_seed_int(model_seq),
        )
    )
    dataset = generate_dataset(truth, spec.traces, _seed_int(data_seq))
    train_cfg = TrainConfig(
        learning_rate=spec.train.learning_rate,
        adam_beta1=spec.train.adam_beta1,
        adam_beta2=spec.train.adam_beta2,
        adam_epsilon=spec.train.adam_epsilon,
        patience_iters=spec.train.patience_iters,
        min_improvement_pct=spec.train.min_improvement_pct,
        max_iters=spec.train.max_iters,
        init_seed=_seed_int(init_seq),
        train_fraction=spec.train.train_fraction,
    )
    report = train(dataset, truth.s, train_cfg)
    learned = report.learned_model

    pop_seq, conc_seq = eval_root.spawn(2)
    pop_errors, pop_Ns, worst = _whatif_population_sweep(truth, learned, spec, pop_seq)
    conc_errors, conc_Ns, new_s, before, after = _whatif_concurrency_sweep(
        truth, learned, spec, conc_seq
    )
    return BenchmarkModelResult(
        ground_truth=truth,
        report=report,
        population_errors=pop_errors,
        population_Ns=pop_Ns,
        concurrency_errors=conc_errors,
        concurrency_Ns=conc_Ns,
        shifted_s=new_s,
        bottleneck_before=before,
        bottleneck_after=after,
        worst_population_case=worst,
    )


def run_benchmark(spec: BenchmarkSpec, out_dir=None) -> BenchmarkResult:
    """Run the full synthetic study; optionally write plot-ready outputs."""
    results = tuple(run_benchmark_model(spec, i) for i in range(spec.n_models))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        provenance = {
            "seed": spec.seed,
            "n_models": spec.n_models,
            "M": spec.M,
            "rate_range": list(spec.rate_range),
            "server_range": list(spec.server_range),
            "traces": {
                "count": spec.traces.count,
                "population_range": list(spec.traces.population_range),
                "replications": spec.traces.replications,
                "dt": spec.traces.dt,
                "H": spec.traces.H,
            },
            "train": {
                "learning_rate": spec.train.learning_rate,
                "patience_iters": spec.train.patience_iters,
                "min_improvement_pct": spec.train.min_improvement_pct,
                "max_iters": spec.train.max_iters,
                "train_fraction": spec.train.train_fraction,
            },
            "whatif_populations": spec.whatif_populations,
            "whatif_concurrency_populations": spec.whatif_concurrency_populations,
            "server_increment": spec.server_increment,
        }
        (out_dir / "experiment.json").write_text(json.dumps(provenance, indent=2) + "\n")
        pop_rows = []
        conc_rows = []
        for i, res in enumerate(results):
            io.save_model(res.ground_truth, out_dir / f"model_{i}_truth.json")
            io.save_model(res.report.learned_model, out_dir / f"model_{i}_learned.json")
            io.save_report(res.report, out_dir / f"model_{i}_report.json")
            io.save_comparison(*res.worst_population_case, out_dir / f"model_{i}_worst_population.csv")
            pop_rows += [
                (N, e, spec.M) for N, e in zip(res.population_Ns, res.population_errors)
            ]
            conc_rows += [
                (N, e, spec.M) for N, e in zip(res.concurrency_Ns, res.concurrency_errors)
            ]
        io.save_scatter(pop_rows, out_dir / "whatif_population_scatter.csv")
        io.save_scatter(conc_rows, out_dir / "whatif_concurrency_scatter.csv")
        pop_summary = summarize_errors([e for _, e, _ in pop_rows])
        conc_summary = summarize_errors([e for _, e, _ in conc_rows])
        (out_dir / "whatif_population_summary.json").write_text(io.summary_to_json(pop_summary))
        (out_dir / "whatif_concurrency_summary.json").write_text(io.summary_to_json(conc_summary))
    return BenchmarkResult(spec=spec, models=results)
