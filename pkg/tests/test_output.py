# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import json
import threading

import numpy as np
import pytest

from freezegun import freeze_time

from jacncde import _output
from jacncde._output import (
    ARTIFACT_VERSION,
    read_checkpoint,
    read_json,
    read_metrics_csv,
    write_checkpoint,
    write_json,
    write_metrics_csv,
    write_report,
)
from jacncde._utils import get_version
from jacncde.exceptions import ParseError
from jacncde.odesolver import SolverConfig
from jacncde.training import (
    EpochMetrics,
    ModelConfig,
    TrainReport,
    init_model,
)


EPOCHS = [
    EpochMetrics(1, 0.75, 0.5, 0.7, 0.625),
    EpochMetrics(2, 0.5, 0.875, 0.6, 0.75),
]


@pytest.fixture(name="model")
def _model(rng):
    cfg = ModelConfig(u=2, v=3, d=4, classes=2, solver=SolverConfig("euler"))

    return init_model(cfg, rng)


class TestWriteJson:
    def test_header(self, tmp_path):
        """
        Every artifact carries the version stamp, config hash and seed.
        """
        p = tmp_path / "a.json"

        write_json(p, {"x": 1}, config_hash="abc", seed=3)

        assert {
            "version": get_version(),
            "artifact_version": ARTIFACT_VERSION,
            "config_hash": "abc",
            "seed": 3,
            "x": 1,
        } == json.loads(p.read_text())

    def test_no_temporary_left(self, tmp_path):
        """
        Writes go through a temporary file that's renamed into place.
        """
        p = tmp_path / "a.json"

        write_json(p, {}, config_hash="abc", seed=None)
        write_json(p, {"x": 2}, config_hash="abc", seed=None)

        assert ["a.json"] == [f.name for f in tmp_path.iterdir()]
        assert 2 == read_json(p)["x"]

    def test_one_lock_per_path(self, tmp_path):
        """
        All writers of a path share a lock.
        """
        p = tmp_path / "a.json"

        lock = _output._get_lock_for_path(p)

        assert isinstance(lock, type(threading.Lock()))
        assert lock is _output._get_lock_for_path(str(p))


class TestReadJson:
    def test_invalid(self, tmp_path):
        """
        Broken JSON raises ParseError with the line.
        """
        p = tmp_path / "a.json"
        p.write_text('{\n  "a": \n}')

        with pytest.raises(ParseError, match="invalid JSON") as ei:
            read_json(p)

        assert 3 == ei.value.line

    def test_not_an_object(self, tmp_path):
        """
        Top-level values other than objects raise ParseError.
        """
        p = tmp_path / "a.json"
        p.write_text("[1, 2]")

        with pytest.raises(ParseError, match="JSON object"):
            read_json(p)


class TestMetricsCsv:
    def test_layout(self, tmp_path):
        """
        Header comments precede one row per epoch and split.
        """
        p = tmp_path / "metrics.csv"

        write_metrics_csv(p, EPOCHS, config_hash="abc", seed=0)

        lines = p.read_text().splitlines()
        assert [
            "# config_hash=abc",
            "# seed=0",
            f"# version={get_version()}",
            f"# artifact_version={ARTIFACT_VERSION}",
            "epoch,split,loss,accuracy",
            "1,train,0.75,0.5",
            "1,val,0.69999999999999996,0.625",
            "2,train,0.5,0.875",
            "2,val,0.59999999999999998,0.75",
        ] == lines

    def test_roundtrip(self, tmp_path):
        """
        Values read back exactly.
        """
        p = tmp_path / "metrics.csv"
        write_metrics_csv(p, EPOCHS, config_hash="abc", seed=0)

        df = read_metrics_csv(p)

        assert [0.75, 0.7, 0.5, 0.6] == df["loss"].tolist()
        assert ["train", "val", "train", "val"] == df["split"].tolist()

    def test_deterministic(self, tmp_path):
        """
        Identical inputs give identical bytes.
        """
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"

        write_metrics_csv(a, EPOCHS, config_hash="abc", seed=0)
        write_metrics_csv(b, EPOCHS, config_hash="abc", seed=0)

        assert a.read_bytes() == b.read_bytes()


class TestReport:
    @freeze_time("2026-03-01 12:00:00")
    def test_report(self, tmp_path, model):
        """
        Reports hold the run summary plus a UTC creation time.
        """
        p = tmp_path / "report.json"
        report = TrainReport(
            epochs=EPOCHS[:1],
            wall_time=1.5,
            test_accuracy=0.5,
            test_loss=0.75,
            param_count=model.config.param_count,
            best_epoch=1,
            seed=7,
            model=model,
        )

        write_report(p, report, config_hash="abc", seed=7)

        doc = read_json(p)
        assert "2026-03-01T12:00:00+00:00" == doc["created_at"]
        assert "jacobian-truncated" == doc["field"]
        assert 1 == doc["best_epoch"]
        assert [
            {
                "epoch": 1,
                "train_loss": 0.75,
                "train_accuracy": 0.5,
                "val_loss": 0.7,
                "val_accuracy": 0.625,
            }
        ] == doc["epochs"]


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, model):
        """
        A checkpoint restores config and parameters exactly.
        """
        p = tmp_path / "checkpoint.json"

        write_checkpoint(p, model, config_hash="abc", seed=0)
        back = read_checkpoint(p)

        assert model.config == back.config
        assert sorted(model.params) == sorted(back.params)
        for name, a in model.params.items():
            assert a.shape == back.params[name].shape
            assert np.array_equal(a, back.params[name])

    def test_not_a_checkpoint(self, tmp_path):
        """
        Other JSON artifacts are rejected.
        """
        p = tmp_path / "summary.json"
        write_json(p, {"acc_mean": 0.5}, config_hash="abc", seed=None)

        with pytest.raises(ParseError, match="not a checkpoint"):
            read_checkpoint(p)

    def test_unsupported_version(self, tmp_path, model):
        """
        Checkpoints from another artifact version are rejected.
        """
        p = tmp_path / "checkpoint.json"
        write_checkpoint(p, model, config_hash="abc", seed=0)
        doc = json.loads(p.read_text())
        doc["artifact_version"] = ARTIFACT_VERSION + 1
        p.write_text(json.dumps(doc))

        with pytest.raises(ParseError, match="unsupported artifact version"):
            read_checkpoint(p)

    def test_malformed(self, tmp_path, model):
        """
        Parameter data that doesn't fit its shape is rejected.
        """
        p = tmp_path / "checkpoint.json"
        write_checkpoint(p, model, config_hash="abc", seed=0)
        doc = json.loads(p.read_text())
        doc["params"]["lift.b"]["shape"] = [7]
        p.write_text(json.dumps(doc))

        with pytest.raises(ParseError, match="malformed checkpoint"):
            read_checkpoint(p)
