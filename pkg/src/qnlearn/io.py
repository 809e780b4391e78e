"""Persistence: model JSON, trace CSV, dataset manifests, train reports.

All writers are canonical -- fixed key order, fixed float formatting --
so saving a loaded file reproduces it byte for byte.  Model JSON carries
floats at 17 significant digits (full double precision); trace CSVs use
the shortest round-tripping representation.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .model import QnModel
from .trace import Dataset, Trace
from .training import TrainReport


def _f17(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return format(x, ".17g")


def _float_list(values) -> str:
    return "[" + ", ".join(_f17(v) for v in values) + "]"


def _int_list(values) -> str:
    return "[" + ", ".join(str(int(v)) for v in values) + "]"


# ---------------------------------------------------------------------------
# model JSON: {"M": int, "s": [int], "mu": [float], "P": [[float]]}
# ---------------------------------------------------------------------------


def dumps_model(m: QnModel) -> str:
    rows = ",\n    ".join(_float_list(row) for row in m.P)
    return (
        "{\n"
        f'  "M": {m.M},\n'
        f'  "s": {_int_list(m.s)},\n'
        f'  "mu": {_float_list(m.mu)},\n'
        f'  "P": [\n    {rows}\n  ]\n'
        "}\n"
    )


def save_model(m: QnModel, path) -> None:
    Path(path).write_text(dumps_model(m))


def loads_model(text: str) -> QnModel:
    doc = json.loads(text)
    for key in ("M", "s", "mu", "P"):
        if key not in doc:
            raise ValueError(f"model JSON missing field {key!r}")
    m = QnModel(s=doc["s"], mu=doc["mu"], P=doc["P"])
    if m.M != doc["M"] or m.s.shape != (doc["M"],) or m.mu.shape != (doc["M"],):
        raise ValueError(f"model JSON dimensions inconsistent with M={doc['M']}")
    return m


def load_model(path) -> QnModel:
    return loads_model(Path(path).read_text())


# ---------------------------------------------------------------------------
# trace CSV: header t,x1,...,xM
# ---------------------------------------------------------------------------


def save_trace(trace: Trace, path) -> None:
    lines = ["t," + ",".join(f"x{i + 1}" for i in range(trace.M))]
    for h in range(trace.H):
        t = h * trace.dt
        lines.append(repr(float(t)) + "," + ",".join(repr(float(v)) for v in trace.samples[h]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path, dt: float | None = None) -> Trace:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if cols[0] != "t" or len(cols) < 2:
            raise ValueError(f"{path}: expected header t,x1,...,xM, got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(cols):
        raise ValueError(f"{path}: rows have {data.shape[1]} columns, header has {len(cols)}")
    times = data[:, 0]
    if dt is None:
        if data.shape[0] < 2:
            raise ValueError(f"{path}: need at least 2 rows to infer dt")
        dt = float(times[1] - times[0])
    expected = np.arange(data.shape[0]) * dt
    if np.max(np.abs(times - expected)) > 1e-9 * max(dt, 1.0):
        raise ValueError(f"{path}: time column is not a uniform grid with dt={dt}")
    return Trace(dt=dt, samples=data[:, 1:])


# ---------------------------------------------------------------------------
# dataset manifest JSON
# ---------------------------------------------------------------------------


def dumps_manifest(M: int, s, dt: float, H: int, N: float, trace_files: list[str]) -> str:
    files = ", ".join(json.dumps(f) for f in trace_files)
    return (
        "{\n"
        f'  "M": {int(M)},\n'
        f'  "s": {_int_list(s)},\n'
        f'  "dt": {_f17(dt)},\n'
        f'  "H": {int(H)},\n'
        f'  "N": {_f17(N)},\n'
        f'  "traces": [{files}]\n'
        "}\n"
    )


def save_dataset(dataset: Dataset, out_dir, prefix: str = "trace") -> Path:
    """Write one CSV per trace plus the manifest; returns the manifest path.

    The manifest's N is the mean population across traces (traces may
    carry different populations; per-trace N is recovered from row sums).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dataset.s is None:
        raise ValueError("dataset needs concurrency levels s to be persisted")
    width = max(4, len(str(len(dataset) - 1)))
    names = []
    for idx, tr in enumerate(dataset.traces):
        name = f"{prefix}_{idx:0{width}d}.csv"
        save_trace(tr, out_dir / name)
        names.append(name)
    mean_N = float(np.mean([tr.N for tr in dataset.traces]))
    manifest = out_dir / "manifest.json"
    manifest.write_text(
        dumps_manifest(dataset.M, dataset.s, dataset.dt, dataset.H, mean_N, names)
    )
    return manifest


def load_dataset(path) -> Dataset:
    """Load a dataset from a manifest file or a directory containing
    ``manifest.json``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    for key in ("M", "s", "dt", "H", "N", "traces"):
        if key not in doc:
            raise ValueError(f"{path}: manifest missing field {key!r}")
    base = path.parent
    traces = []
    for name in doc["traces"]:
        tr = load_trace(base / name, dt=float(doc["dt"]))
        if tr.M != doc["M"]:
            raise ValueError(f"{name}: has {tr.M} stations, manifest says {doc['M']}")
        if tr.H != doc["H"]:
            raise ValueError(f"{name}: has {tr.H} rows, manifest says {doc['H']}")
        traces.append(tr)
    return Dataset(traces=tuple(traces), s=np.asarray(doc["s"], dtype=np.int64))


def ingest_external_trace(files, dt: float, H: int, s, out_dir=None) -> Dataset:
    """Build a dataset from externally measured trace CSVs.

    Each row must conserve the population within 1e-3*N (looser than for
    simulated data: log-derived averages may drop in-flight requests);
    offending files are rejected with their row numbers.  When ``out_dir``
    is given a manifest referencing the source files is written there.
    """
    files = [Path(f) for f in files]
    if not files:
        raise ValueError("no trace files given")
    traces = []
    for f in files:
        tr = load_trace(f, dt=dt)
        if tr.H != H:
            raise ValueError(f"{f}: has {tr.H} rows, expected {H}")
        violations = tr.validate(conservation_tol=1e-3 * max(tr.N, 1.0))
        if violations:
            raise ValueError(f"{f}: " + "; ".join(violations))
        traces.append(tr)
    dataset = Dataset(traces=tuple(traces), s=s)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        names = [os.path.relpath(f, out_dir) for f in files]
        mean_N = float(np.mean([tr.N for tr in traces]))
        (out_dir / "manifest.json").write_text(
            dumps_manifest(dataset.M, dataset.s, dt, H, mean_N, names)
        )
    return dataset


# ---------------------------------------------------------------------------
# train report JSON: model fields + run metadata
# ---------------------------------------------------------------------------


def dumps_report(report: TrainReport) -> str:
    model_part = dumps_model(report.learned_model).strip()[1:-1].rstrip()
    history = ",\n    ".join(
        f"[{it}, {_f17(tl)}, {_f17(ve)}]" for it, tl, ve in report.loss_history
    )
    return (
        "{" + model_part + ",\n"
        f'  "iterations": {report.iterations},\n'
        f'  "stop_reason": {json.dumps(report.stop_reason)},\n'
        f'  "validation_err_pct": {_f17(report.final_validation_err_pct)},\n'
        f'  "loss_history": [\n    {history}\n  ]\n'
        "}\n"
    )


def save_report(report: TrainReport, path) -> None:
    Path(path).write_text(dumps_report(report))


# ---------------------------------------------------------------------------
# plot-ready outputs
# ---------------------------------------------------------------------------


def save_scatter(rows, path) -> None:
    """Write (N, err_pct, M) rows as CSV for scatter plotting."""
    lines = ["N,err_pct,M"]
    for N, err, M in rows:
        lines.append(f"{repr(float(N))},{repr(float(err))},{int(M)}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_comparison(measured: Trace, predicted: Trace, path) -> None:
    """Side-by-side CSV of a measured and a predicted trace."""
    if measured.M != predicted.M or measured.H != predicted.H or measured.dt != predicted.dt:
        raise ValueError("traces must share grid and station count")
    M = measured.M
    header = (
        "t,"
        + ",".join(f"measured_{i + 1}" for i in range(M))
        + ","
        + ",".join(f"predicted_{i + 1}" for i in range(M))
    )
    lines = [header]
    for h in range(measured.H):
        t = h * measured.dt
        lines.append(
            repr(float(t))
            + ","
            + ",".join(repr(float(v)) for v in measured.samples[h])
            + ","
            + ",".join(repr(float(v)) for v in predicted.samples[h])
        )
    Path(path).write_text("\n".join(lines) + "\n")


def summary_to_json(summary) -> str:
    values = ", ".join(_f17(v) for v in summary.values)
    outliers = ", ".join(_f17(v) for v in summary.outliers)
    return (
        "{\n"
        f'  "median": {_f17(summary.median)},\n'
        f'  "p25": {_f17(summary.p25)},\n'
        f'  "p75": {_f17(summary.p75)},\n'
        f'  "whisker_low": {_f17(summary.whisker_low)},\n'
        f'  "whisker_high": {_f17(summary.whisker_high)},\n'
        f'  "outliers": [{outliers}],\n'
        f'  "values": [{values}]\n'
        "}\n"
    )
