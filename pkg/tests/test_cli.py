# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import json
import os
import re

import pytest

from jacncde import cli
from jacncde.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, main
from jacncde.exceptions import NumericError
from jacncde.fields import count_params
from jacncde.testing import corrupt_jvp_sign

from .utils import write_config


TINY = {
    "dataset": {"kind": "synth", "n": 8, "length": 5, "noise": 0.0},
    "model": {"v": 2, "d": 2, "solver": {"method": "euler"}},
    "training": {"epochs": 1, "batch": 4, "lr": 0.01},
    "seeds": [0],
}


@pytest.fixture(name="tiny")
def _tiny(tmp_path):
    """
    Path to a run configuration that trains in a blink.
    """
    return write_config(tmp_path / "tiny.json", **TINY)


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


class TestParams:
    def test_smallest(self, capsys):
        """
        With every size 1, the matrix model has 8 parameters and the
        Jacobian model 9, lift and readout included.
        """
        rv = main(
            ["params", "--u", "1", "--v", "1", "--d", "1", "--classes", "1"]
            + ["--json"]
        )

        out = _json_out(capsys)
        assert EXIT_OK == rv
        assert [("matrix", 8), ("jacobian-truncated", 9)] == [
            (r["field"], r["total"]) for r in out["fields"]
        ]
        assert [2, 2] == [r["lift"] for r in out["fields"]]
        assert [2, 2] == [r["readout"] for r in out["fields"]]

    def test_default_ratio(self, capsys):
        """
        The default sizes give a field-part ratio of about 2.34.
        """
        assert EXIT_OK == main(["params"])

        out = capsys.readouterr().out
        assert "u=4 v=32 d=128 classes=20" in out
        assert "field-part ratio matrix/jacobian: 2.339" in out

    def test_find_ratio(self, capsys):
        """
        A ratio search reports the sizes it found.
        """
        assert EXIT_OK == main(["params", "--find-ratio", "2.0", "--json"])

        out = _json_out(capsys)
        assert 2.0 == out["search"]["target"]
        assert 1.9 <= out["field_ratio"] <= 2.1
        assert out["search"]["u"] == out["u"]

    def test_find_ratio_tol(self, capsys):
        """
        An unreachable ratio within a tolerance is an input error.
        """
        assert EXIT_OK == main(
            ["params", "--find-ratio", "2.0", "--ratio-tol", "0.1", "--json"]
        )
        assert 0.1 == _json_out(capsys)["search"]["tol"]

        assert EXIT_CONFIG == main(
            ["params", "--find-ratio", "1000", "--ratio-tol", "0.1"]
        )

    def test_non_positive(self, capsys):
        """
        Non-positive sizes are input errors.
        """
        assert EXIT_CONFIG == main(["params", "--v", "0"])


class TestTrain:
    def test_dry_run(self, tiny, out_dir, capsys):
        """
        A dry run prints the resolved plan and writes nothing.
        """
        rv = main(["train", "--config", tiny, "--dry-run"])

        (run,) = _json_out(capsys)["runs"]
        assert EXIT_OK == rv
        assert 64 == len(run["config_hash"])
        assert [0] == run["config"]["seeds"]
        assert [
            os.path.join(
                str(out_dir),
                f"jacobian-truncated-{run['config_hash'][:12]}",
                "seed-0",
            )
        ] == run["dirs"]
        assert not out_dir.exists()

    def test_missing_dataset(self, tmp_path, out_dir, capsys):
        """
        A missing dataset file exits with 2 and leaves no output.
        """
        cfg = write_config(
            tmp_path / "run.json",
            dataset={"kind": "csv", "path": str(tmp_path / "nope.csv")},
        )

        assert EXIT_CONFIG == main(["train", "--config", cfg])
        assert "invalid_input" in capsys.readouterr().err
        assert not out_dir.exists()

    def test_artifacts(self, tiny, out_dir, capsys):
        """
        A run writes metrics, report and checkpoint per seed and a summary.
        """
        rv = main(["train", "--config", tiny, "--seed", "3", "--json"])

        summary = _json_out(capsys)
        assert EXIT_OK == rv
        assert "jacobian-truncated" == summary["field"]
        assert [3] == [r["seed"] for r in summary["runs"]]
        assert 0.0 == summary["acc_std"]
        assert count_params("jacobian-truncated", 2, 2, 2, 2) == (
            summary["param_count"]
        )
        run_dir = summary["dir"]
        assert str(out_dir) == os.path.dirname(run_dir)
        assert ["seed-3", "summary.json"] == sorted(os.listdir(run_dir))
        assert ["checkpoint.json", "metrics.csv", "report.json"] == sorted(
            os.listdir(os.path.join(run_dir, "seed-3"))
        )

    def test_reproducible(self, tiny, out_dir, capsys):
        """
        The same configuration run twice gives identical metrics files.
        """
        assert EXIT_OK == main(["train", "--config", tiny, "--json"])
        metrics = os.path.join(
            _json_out(capsys)["dir"], "seed-0", "metrics.csv"
        )
        with open(metrics, "rb") as f:
            first = f.read()

        assert EXIT_OK == main(["train", "--config", tiny])
        with open(metrics, "rb") as f:
            assert first == f.read()

    def test_text_output(self, tiny, out_dir, capsys):
        """
        Without --json, one line summarizes the run.
        """
        assert EXIT_OK == main(
            ["train", "--config", tiny, "--field", "matrix"]
        )

        out = capsys.readouterr().out
        assert out.startswith("matrix: acc_mean=")
        assert "over 1 seed(s)" in out

    def test_exact_field_refused(self, tiny, out_dir):
        """
        The forward-only field can't be trained.
        """
        assert EXIT_CONFIG == main(
            ["train", "--config", tiny, "--field", "jacobian-exact"]
        )
        assert not out_dir.exists()

    def test_numeric_abort(self, tiny, out_dir, capsys, monkeypatch):
        """
        A numerical failure exits with 3 and logs its context.
        """

        def boom(*a, **kw):
            msg = "training loss is not finite"
            raise NumericError(msg, {"epoch": 1, "batch": 0})

        monkeypatch.setattr(cli, "train", boom)

        assert EXIT_NUMERIC == main(
            ["train", "--config", tiny, "--log-json"]
        )

        (event,) = [
            e
            for e in map(json.loads, capsys.readouterr().err.splitlines())
            if e["event"] == "numeric_abort"
        ]
        assert 1 == event["epoch"]
        assert "error" == event["level"]
        assert not out_dir.exists()

    def test_bad_log_level(self, tiny, capsys):
        """
        An unknown log level is a configuration error.
        """
        assert EXIT_CONFIG == main(
            ["train", "--config", tiny, "--log-level", "loud"]
        )
        assert "jacncde: error: unknown log level" in capsys.readouterr().err


class TestCompare:
    def test_compare(self, tiny, out_dir, capsys):
        """
        Both fields are trained with the same sizes and compared.
        """
        rv = main(["compare", "--config", tiny, "--json"])

        rows = _json_out(capsys)["fields"]
        assert EXIT_OK == rv
        assert [
            ("matrix", count_params("matrix", 2, 2, 2, 2)),
            (
                "jacobian-truncated",
                count_params("jacobian-truncated", 2, 2, 2, 2),
            ),
        ] == [(r["field"], r["param_count"]) for r in rows]
        (compare_dir,) = [
            p for p in os.listdir(out_dir) if p.startswith("compare-")
        ]
        with open(os.path.join(out_dir, compare_dir, "compare.json")) as f:
            assert rows == json.load(f)["fields"]
        assert 3 == len(os.listdir(out_dir))

    def test_dry_run(self, tiny, out_dir, capsys):
        """
        A dry run plans one run per field.
        """
        assert EXIT_OK == main(["compare", "--config", tiny, "--dry-run"])

        runs = _json_out(capsys)["runs"]
        assert ["matrix", "jacobian-truncated"] == [
            r["config"]["model"]["field"] for r in runs
        ]
        assert not out_dir.exists()


class TestEval:
    @pytest.fixture(name="checkpoint")
    def _checkpoint(self, tiny, out_dir, capsys):
        main(["train", "--config", tiny, "--json"])

        return os.path.join(
            _json_out(capsys)["dir"], "seed-0", "checkpoint.json"
        )

    def test_eval(self, tiny, checkpoint, capsys):
        """
        A checkpoint is evaluated on the test split by default.
        """
        rv = main(["eval", "--config", tiny, "--checkpoint", checkpoint])

        out = _json_out(capsys)
        assert EXIT_OK == rv
        assert "test" == out["split"]
        assert 2 == out["count"]
        assert 0.0 <= out["accuracy"] <= 1.0

    def test_exact_field(self, tiny, checkpoint, capsys):
        """
        A truncated checkpoint can be evaluated with the exact field.
        """
        rv = main(
            ["eval", "--config", tiny, "--checkpoint", checkpoint]
            + ["--field", "jacobian-exact", "--split", "train"]
        )

        out = _json_out(capsys)
        assert EXIT_OK == rv
        assert "jacobian-exact" == out["field"]
        assert 6 == out["count"]

    def test_other_family_refused(self, tiny, checkpoint):
        """
        A Jacobian checkpoint can't be read as a matrix field.
        """
        assert EXIT_CONFIG == main(
            ["eval", "--config", tiny, "--checkpoint", checkpoint]
            + ["--field", "matrix"]
        )

    def test_dataset_mismatch(self, tmp_path, data_dir, checkpoint):
        """
        Data with other channels than the checkpoint is an input error.
        """
        cfg = write_config(
            tmp_path / "csv.json",
            dataset={
                "kind": "csv",
                "path": os.path.join(data_dir, "obs.csv"),
            },
        )

        assert EXIT_CONFIG == main(
            ["eval", "--config", cfg, "--checkpoint", checkpoint]
        )

    def test_not_a_checkpoint(self, tmp_path):
        """
        Broken checkpoints are input errors.
        """
        p = tmp_path / "x.json"
        p.write_text("[]")

        assert EXIT_CONFIG == main(["eval", "--checkpoint", str(p)])


class TestVerify:
    def test_single_check(self, capsys):
        """
        A passing check exits with 0.
        """
        rv = main(["verify", "--check", "solver_order_rk4"])

        out = capsys.readouterr().out
        assert EXIT_OK == rv
        assert re.search(r"PASS\s+solver_order_rk4", out)
        assert "failed:" not in out

    def test_json(self, capsys):
        """
        JSON output lists checks and failures.
        """
        rv = main(["verify", "--check", "param_counts", "--json"])

        out = _json_out(capsys)
        assert EXIT_OK == rv
        assert [] == out["failed"]
        assert ["param_counts"] == [c["name"] for c in out["checks"]]

    def test_corrupted_jacobian(self, capsys):
        """
        A flipped Jacobian-vector product fails the Jacobian check and
        exits with 1.
        """
        with corrupt_jvp_sign():
            rv = main(["verify", "--check", "jacobian_fd"])

        assert EXIT_VERIFY == rv
        assert "failed: jacobian_fd" in capsys.readouterr().out

    def test_unknown_check(self, capsys):
        """
        Unknown check names are rejected by the parser.
        """
        with pytest.raises(SystemExit) as ei:
            main(["verify", "--check", "nope"])

        assert 2 == ei.value.code
