import json

import numpy as np
import pytest

from qnlearn import (
    GridSpec,
    QnModel,
    Trace,
    TrainConfig,
    forward_trajectory,
    train,
    validate_model,
)
from qnlearn import io

from conftest import fluid_dataset


class TestModelJson:
    def test_round_trip_is_byte_identical(self, tmp_path, lb_model):
        path = tmp_path / "m.json"
        io.save_model(lb_model, path)
        first = path.read_bytes()
        io.save_model(io.load_model(path), path)
        assert path.read_bytes() == first

    def test_full_precision(self, tmp_path):
        m = QnModel(s=(1, 1), mu=(1 / 3, 0.1), P=[[0, 1], [1, 0]])
        path = tmp_path / "m.json"
        io.save_model(m, path)
        text = path.read_text()
        assert "0.33333333333333331" in text
        loaded = io.load_model(path)
        assert loaded.mu[0] == 1 / 3 and loaded.mu[1] == 0.1

    def test_field_names_and_order(self, tmp_path, lb_model):
        path = tmp_path / "m.json"
        io.save_model(lb_model, path)
        doc = json.loads(path.read_text())
        assert list(doc.keys()) == ["M", "s", "mu", "P"]
        assert doc["M"] == 3
        assert doc["s"] == [1000, 30, 25]

    def test_missing_field_rejected(self):
        with pytest.raises(ValueError, match="missing field"):
            io.loads_model('{"M": 2, "s": [1, 1], "mu": [1, 1]}')

    def test_inconsistent_m_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            io.loads_model('{"M": 3, "s": [1, 1], "mu": [1, 1], "P": [[0, 1], [1, 0]]}')


class TestTraceCsv:
    def test_round_trip_values_exact(self, tmp_path, lb_model):
        trace = forward_trajectory(lb_model, (26.0, 86.0, 0.0), GridSpec(dt=0.01, H=40))
        path = tmp_path / "t.csv"
        io.save_trace(trace, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x1,x2,x3"
        loaded = io.load_trace(path)
        assert loaded.dt == trace.dt
        assert np.array_equal(loaded.samples, trace.samples)

    def test_rewrite_is_byte_identical(self, tmp_path, lb_model):
        trace = forward_trajectory(lb_model, (5.0, 1.0, 0.0), GridSpec(dt=0.02, H=10))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        io.save_trace(trace, a)
        io.save_trace(io.load_trace(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,q1\n0.0,1.0\n0.1,1.0\n")
        with pytest.raises(ValueError, match="header"):
            io.load_trace(path)

    def test_non_uniform_grid_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,x1\n0.0,1.0\n0.1,1.0\n0.3,1.0\n")
        with pytest.raises(ValueError, match="uniform grid"):
            io.load_trace(path)


class TestDataset:
    def test_save_and_load(self, tmp_path):
        truth = QnModel(s=(3, 3), mu=(1.0, 2.0), P=[[0, 1], [1, 0]])
        dataset = fluid_dataset(truth, 3, seed=5, H=20)
        manifest = io.save_dataset(dataset, tmp_path / "ds")
        doc = json.loads(manifest.read_text())
        assert list(doc.keys()) == ["M", "s", "dt", "H", "N", "traces"]
        assert doc["M"] == 2 and doc["H"] == 20 and len(doc["traces"]) == 3
        loaded = io.load_dataset(tmp_path / "ds")
        assert len(loaded) == 3
        assert np.array_equal(loaded.s, dataset.s)
        for a, b in zip(loaded.traces, dataset.traces):
            assert np.array_equal(a.samples, b.samples)

    def test_load_from_manifest_path(self, tmp_path):
        truth = QnModel(s=(3, 3), mu=(1.0, 2.0), P=[[0, 1], [1, 0]])
        io.save_dataset(fluid_dataset(truth, 2, seed=5, H=20), tmp_path / "ds")
        loaded = io.load_dataset(tmp_path / "ds" / "manifest.json")
        assert len(loaded) == 2


class TestIngest:
    def _write_measured(self, path, samples, dt=0.1):
        io.save_trace(Trace(dt=dt, samples=samples), path)

    def test_accepts_mild_conservation_drift(self, tmp_path):
        # measured rows may leak up to 1e-3 * N
        rng = np.random.default_rng(1)
        files = []
        for k in range(3):
            base = rng.uniform(1, 5, (10, 2))
            base *= 20.0 / base.sum(axis=1, keepdims=True)
            base[4] *= 1.0 + 4e-4  # within tolerance
            f = tmp_path / f"measured_{k}.csv"
            self._write_measured(f, base)
            files.append(f)
        dataset = io.ingest_external_trace(files, dt=0.1, H=10, s=(2, 3), out_dir=tmp_path / "ds")
        assert len(dataset) == 3
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        assert manifest["s"] == [2, 3]
        assert manifest["N"] == pytest.approx(20.0, rel=1e-3)

    def test_rejects_broken_row_naming_it(self, tmp_path):
        samples = np.tile((10.0, 10.0), (10, 1))
        samples[6] = (3.0, 7.0)  # half the population vanished
        f = tmp_path / "broken.csv"
        self._write_measured(f, samples)
        with pytest.raises(ValueError, match="row 6"):
            io.ingest_external_trace([f], dt=0.1, H=10, s=(1, 1))

    def test_rejects_empty_file_list(self):
        with pytest.raises(ValueError, match="no trace files"):
            io.ingest_external_trace([], dt=0.1, H=10, s=(1, 1))

    def test_rejects_wrong_length(self, tmp_path):
        f = tmp_path / "short.csv"
        self._write_measured(f, np.tile((5.0, 5.0), (6, 1)))
        with pytest.raises(ValueError, match="rows"):
            io.ingest_external_trace([f], dt=0.1, H=10, s=(1, 1))


class TestReport:
    def test_report_json_contents(self, tmp_path):
        truth = QnModel(s=(3, 3), mu=(1.0, 2.0), P=[[0, 1], [1, 0]])
        report = train(fluid_dataset(truth, 4, seed=3, H=30), truth.s, TrainConfig(max_iters=5))
        path = tmp_path / "report.json"
        io.save_report(report, path)
        doc = json.loads(path.read_text())
        for key in ("M", "s", "mu", "P", "iterations", "stop_reason", "validation_err_pct", "loss_history"):
            assert key in doc
        assert doc["iterations"] == 5
        assert len(doc["loss_history"]) == 6  # row 0 plus one per iteration
        embedded = QnModel(s=doc["s"], mu=doc["mu"], P=doc["P"])
        assert validate_model(embedded) == []


class TestPlotOutputs:
    def test_scatter(self, tmp_path):
        path = tmp_path / "scatter.csv"
        io.save_scatter([(96.0, 1.5, 5), (120.0, 3.25, 5)], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "N,err_pct,M"
        assert lines[1] == "96.0,1.5,5"

    def test_comparison(self, tmp_path, lb_model):
        grid = GridSpec(dt=0.01, H=5)
        a = forward_trajectory(lb_model, (5.0, 1.0, 0.0), grid)
        b = forward_trajectory(lb_model, (5.0, 1.0, 0.0), grid)
        path = tmp_path / "cmp.csv"
        io.save_comparison(a, b, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,measured_1,measured_2,measured_3,predicted_1,predicted_2,predicted_3"
        assert len(lines) == 6
