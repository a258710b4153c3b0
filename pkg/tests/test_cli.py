"""
Tests for the command-line entry point.
"""

import pandas as pd
import pytest
from sqlmodel import Session, select

from app.cli.commands import parse_members
from app.core.exceptions import GroupError
from app.db.database import get_engine
from app.db.models import RunLog
from app.main import build_parser, main

pytestmark = pytest.mark.integration


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def ledger() -> list[RunLog]:
    with Session(get_engine()) as session:
        return list(session.exec(select(RunLog)).all())


class TestParser:
    """Test argument parsing."""

    def test_subcommands(self):
        """Test every subcommand is registered."""
        parser = build_parser()
        for command in ("predict-eval", "group-eval", "novelty-eval", "split"):
            assert parser.parse_args([command, "--preset", "filmtrust"]).command == command
        assert parser.parse_args(["recommend", "--preset", "filmtrust", "--members", "1,2"]).members == "1,2"

    def test_config_and_preset_exclusive(self, capsys):
        """Test --config and --preset cannot be combined."""
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["split", "--config", "a.toml", "--preset", "filmtrust"])
        assert exc.value.code == 2

    def test_baseline_flags_exclusive(self, capsys):
        """Test the two baseline variants cannot be combined."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["group-eval", "--preset", "filmtrust", "--baseline", "--baseline-borda"])

    def test_parse_members(self):
        """Test member list parsing."""
        assert parse_members("12, 40,7") == [12, 40, 7]
        with pytest.raises(GroupError):
            parse_members("a,b")
        with pytest.raises(GroupError):
            parse_members(",")


class TestSplitCommand:
    """Test the split manifest subcommand."""

    def test_manifest(self, capsys, movielens_config_file, random_rows):
        """Test the manifest covers every rating."""
        code, out, _ = run(capsys, "split", "--config", str(movielens_config_file))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "user,item,role"
        assert len(lines) == len(random_rows) + 1

    def test_seed_override(self, capsys, movielens_config_file):
        """Test --seed changes the split."""
        _, first, _ = run(capsys, "split", "--config", str(movielens_config_file))
        _, again, _ = run(capsys, "split", "--config", str(movielens_config_file))
        _, other, _ = run(capsys, "split", "--config", str(movielens_config_file), "--seed", "77")
        assert first == again
        assert first != other

    def test_negative_seed(self, capsys, movielens_config_file):
        """Test a negative --seed exits with the config code and is recorded."""
        code, out, err = run(capsys, "split", "--config", str(movielens_config_file), "--seed", "-1")
        assert code == 2
        assert out == ""
        assert err.startswith("error[config]:")
        assert [(e.command, e.status) for e in ledger()] == [("split", "error")]

    def test_missing_config(self, capsys, tmp_path):
        """Test an absent config file exits with the config code."""
        code, out, err = run(capsys, "split", "--config", str(tmp_path / "none.toml"))
        assert code == 2
        assert out == ""
        assert err.startswith("error[config]:")

    def test_missing_dataset(self, capsys, movielens_config_file, tmp_path):
        """Test an absent ratings file names the field."""
        (tmp_path / "ratings.data").unlink()
        code, _, err = run(capsys, "split", "--config", str(movielens_config_file))
        assert code == 2
        assert "dataset.ratings_path" in err


class TestPredictEval:
    """Test the prediction accuracy subcommand."""

    def test_report(self, capsys, movielens_config_file):
        """Test one row per measure x strategy with finite errors."""
        code, out, _ = run(capsys, "predict-eval", "--config", str(movielens_config_file))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "dataset,method,strategy,k,rmse,mae,evaluated,skipped"
        rows = [line.split(",") for line in lines[1:]]
        assert [(r[1], r[2]) for r in rows] == [
            ("cosine", "knn"), ("cosine", "topsis"), ("cbs", "knn"), ("cbs", "topsis"),
        ]
        for row in rows:
            assert float(row[4]) >= float(row[5]) >= 0


class TestGroupEval:
    """Test the group evaluation subcommand."""

    def test_report(self, capsys, movielens_config_file):
        """Test one row per n_top with bounded fairness."""
        code, out, _ = run(capsys, "group-eval", "--config", str(movielens_config_file))
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("dataset,method,strategy,n_top,satisfaction,rmse_g,mae_g,fairness1,fairness2")
        rows = [line.split(",") for line in lines[1:]]
        assert [int(r[3]) for r in rows] == [2, 4, 8]
        for row in rows:
            assert row[1] == "cbs"
            assert row[2] == "topsis"
            assert 0 < float(row[7]) <= 1
            assert float(row[8]) <= 1
            assert float(row[5]) >= float(row[6]) - 1e-12

    @pytest.mark.parametrize("flag, method", [
        ("--baseline", "cosine-reimplementation"),
        ("--baseline-borda", "cosine-reimplementation-borda"),
    ])
    def test_baselines(self, capsys, movielens_config_file, flag, method):
        """Test the baseline variants label their rows."""
        code, out, _ = run(capsys, "group-eval", "--config", str(movielens_config_file), flag)
        assert code == 0
        assert {line.split(",")[1] for line in out.splitlines()[1:]} == {method}

    def test_strategy_override(self, capsys, movielens_config_file):
        """Test --strategy replaces the configured neighbour strategy."""
        _, out, _ = run(capsys, "group-eval", "--config", str(movielens_config_file), "--strategy", "knn")
        assert {line.split(",")[2] for line in out.splitlines()[1:]} == {"knn"}


class TestNoveltyEval:
    """Test the trust-based novelty subcommand."""

    def test_report(self, capsys, filmtrust_config_file, tmp_path):
        """Test novelty columns are filled and bounded."""
        target = tmp_path / "novelty.csv"
        code, _, _ = run(capsys, "novelty-eval", "--config", str(filmtrust_config_file), "--out", str(target))
        assert code == 0
        report = pd.read_csv(target)
        assert report["n_top"].tolist() == [2, 4, 8]
        assert set(report["method"]) == {"cbs"}
        assert report["novelty"].between(0, 1).all()
        assert report["ntc"].between(0, 1).all()
        assert report["ntr"].notna().all()

    def test_requires_trust(self, capsys, movielens_config_file):
        """Test a config without trust data exits with a config error."""
        code, out, err = run(capsys, "novelty-eval", "--config", str(movielens_config_file))
        assert code == 2
        assert out == ""
        assert err.startswith("error[config]:")
        assert "trust" in err


class TestRecommend:
    """Test the single-group subcommand."""

    def test_list(self, capsys, movielens_config_file):
        """Test the ranked list with provenance columns."""
        code, out, _ = run(capsys, "recommend", "--config", str(movielens_config_file), "--members", "3,1,2")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "group_id,rank,item,choquet_score,observed,predicted,missing"
        rows = [line.split(",") for line in lines[1:]]
        assert 0 < len(rows) <= 8
        assert [int(r[1]) for r in rows] == list(range(1, len(rows) + 1))
        scores = [float(r[3]) for r in rows]
        assert scores == sorted(scores, reverse=True)
        for row in rows:
            assert sum(int(x) for x in row[4:]) == 3

    def test_unknown_member(self, capsys, movielens_config_file):
        """Test an unknown user exits with a validation error."""
        code, _, err = run(capsys, "recommend", "--config", str(movielens_config_file), "--members", "1,9999")
        assert code == 2
        assert err.startswith("error[validation]:")
        assert "9999" in err

    def test_duplicate_member(self, capsys, movielens_config_file):
        """Test repeated members are rejected."""
        code, _, err = run(capsys, "recommend", "--config", str(movielens_config_file), "--members", "1,1")
        assert code == 2
        assert err.startswith("error[validation]:")


class TestWorkerIndependence:
    """Test reports do not depend on the thread count."""

    @pytest.mark.parametrize("argv", [
        ("predict-eval",),
        ("group-eval",),
        ("group-eval", "--baseline-borda"),
        ("novelty-eval",),
        ("recommend", "--members", "4,9,17"),
        ("split",),
    ])
    def test_byte_identical_reports(self, capsys, filmtrust_config_file, tmp_path, argv):
        """Test 1, 4 and 8 workers write byte-identical reports."""
        outputs = []
        for workers in (1, 4, 8):
            target = tmp_path / f"{argv[0]}-{workers}.csv"
            code, _, _ = run(capsys, *argv, "--config", str(filmtrust_config_file),
                             "--workers", str(workers), "--out", str(target))
            assert code == 0
            outputs.append(target.read_bytes())
        assert outputs[0]
        assert outputs[0] == outputs[1] == outputs[2]


class TestRunLedger:
    """Test that runs are recorded."""

    def test_success_and_failure_logged(self, capsys, movielens_config_file):
        """Test a success and a failure each leave one ledger row."""
        run(capsys, "split", "--config", str(movielens_config_file))
        run(capsys, "novelty-eval", "--config", str(movielens_config_file))
        entries = sorted(ledger(), key=lambda e: e.created_at)
        assert [(e.command, e.status) for e in entries] == [("split", "success"), ("novelty-eval", "error")]
        assert entries[0].rows_written > 0
        assert entries[0].seed == 5
        assert "trust" in entries[1].error_message

    def test_ledger_disabled(self, capsys, monkeypatch, movielens_config_file, tmp_path):
        """Test RUN_AUDIT_ENABLED=false skips the ledger."""
        from app.core.config import get_settings

        monkeypatch.setenv("RUN_AUDIT_ENABLED", "false")
        get_settings.cache_clear()
        assert run(capsys, "split", "--config", str(movielens_config_file))[0] == 0
        assert not (tmp_path / "runs.db").exists()
