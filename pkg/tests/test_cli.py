import json

import pytest

from temporal_pyramid.cli import (
    ABLATIONS,
    EXIT_DATA,
    EXIT_DIMENSION,
    EXIT_NUMERIC,
    EXIT_USAGE,
    run,
)
from temporal_pyramid.feature_store import load_checkpoint

FAST = ["--segments", "8", "--batch-size", "16", "--iters", "60", "--eval-interval", "20"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    wd = tmp_path_factory.mktemp("cli")
    assert run(["--workdir", str(wd), "gen-synthetic", "--structure", "separable", "--classes", "3",
                "--dim", "6", "--frames", "10", "--train-per-class", "20", "--val-per-class", "5",
                "--test-per-class", "10", "--seed", "2"]) == 0
    return wd


def _train(wd, stream, out, *extra):
    return run(["--workdir", str(wd), "train", "--manifest", "data/train.jsonl",
                "--val-manifest", "data/validation.jsonl", "--stream", stream, "--out", out,
                "--log", out + ".log", *FAST, *extra])


def test_train_eval_separable(workdir, capsys):
    assert _train(workdir, "spatial", "s.dtpc") == 0
    assert _train(workdir, "temporal", "t.dtpc") == 0
    ck = load_checkpoint(workdir / "s.dtpc")
    assert ck.pyramid.bins == (1, 2, 4) and ck.pyramid.kernel == "max"
    assert ck.dropout_rate == 0.8 and ck.segments == 8
    log = [json.loads(x) for x in (workdir / "s.dtpc.log").read_text().splitlines()]
    assert {"iteration", "split", "loss", "accuracy", "lr"} <= set(log[0])
    assert any(r["split"] == "validation" for r in log)

    assert run(["--workdir", str(workdir), "eval", "--manifest", "data/test.jsonl",
                "--spatial-checkpoint", "s.dtpc", "--temporal-checkpoint", "t.dtpc",
                "--segments", "8"]) == 0
    text = (workdir / "report.txt").read_text()
    acc = float(text.splitlines()[0].split()[-1])
    assert acc >= 0.99
    assert "confusion matrix" in text and "per-class accuracy" in text
    assert capsys.readouterr().out.startswith("accuracy")


def test_eval_then_fuse_matches_joint_eval(workdir):
    base = ["--workdir", str(workdir), "eval", "--manifest", "data/test.jsonl", "--segments", "8"]
    if not (workdir / "s.dtpc").exists():
        _train(workdir, "spatial", "s.dtpc")
        _train(workdir, "temporal", "t.dtpc")
    assert run(base + ["--checkpoint", "s.dtpc", "--scores", "s.jsonl", "--report", "s.txt"]) == 0
    assert run(base + ["--checkpoint", "t.dtpc", "--stream", "temporal", "--scores", "t.jsonl",
                       "--report", "t.txt"]) == 0
    assert run(base + ["--spatial-checkpoint", "s.dtpc", "--temporal-checkpoint", "t.dtpc",
                       "--weights", "0.4", "0.6", "--report", "joint.txt"]) == 0
    assert run(["--workdir", str(workdir), "fuse", "--spatial-scores", "s.jsonl",
                "--temporal-scores", "t.jsonl", "--weights", "0.4", "0.6"]) == 0
    assert (workdir / "fused_report.txt").read_text() == (workdir / "joint.txt").read_text()


def test_train_is_reproducible(workdir):
    assert _train(workdir, "spatial", "r1.dtpc", "--iters", "20", "--seed", "5") == 0
    assert _train(workdir, "spatial", "r2.dtpc", "--iters", "20", "--seed", "5") == 0
    assert (workdir / "r1.dtpc").read_bytes() == (workdir / "r2.dtpc").read_bytes()
    assert (workdir / "r1.dtpc.log").read_text() == (workdir / "r2.dtpc.log").read_text()


def test_frame_average_mode(workdir):
    assert _train(workdir, "spatial", "fa.dtpc", "--mode", "frame-average") == 0
    ck = load_checkpoint(workdir / "fa.dtpc")
    assert ck.aggregation == "frame-average" and ck.W.shape == (3, 6)


def test_dimension_mismatch_exit(workdir, capsys):
    if not (workdir / "s.dtpc").exists():
        _train(workdir, "spatial", "s.dtpc")
    assert run(["--workdir", str(workdir), "gen-synthetic", "--structure", "separable", "--classes", "3",
                "--dim", "4", "--out", "d4", "--streams", "spatial"]) == 0
    code = run(["--workdir", str(workdir), "eval", "--manifest", "d4/test.jsonl",
                "--checkpoint", "s.dtpc", "--segments", "8"])
    assert code == EXIT_DIMENSION
    err = capsys.readouterr().err
    assert "d=4" in err and "d=6" in err


def test_missing_file_exit(workdir):
    assert run(["--workdir", str(workdir), "train", "--manifest", "nope.jsonl"]) == EXIT_DATA


def test_unknown_flag_exit(workdir):
    assert run(["--workdir", str(workdir), "train", "--bogus"]) == EXIT_USAGE


def test_bad_value_exit(workdir):
    assert _train(workdir, "spatial", "x.dtpc", "--dropout", "1.5") == EXIT_USAGE


def test_codes_are_distinct():
    assert len({EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_DIMENSION, 0}) == 5


def test_gradcheck_command(tmp_path, capsys):
    assert run(["--workdir", str(tmp_path), "gradcheck", "--instances", "4"]) == 0
    assert "worst relative error" in (tmp_path / "gradcheck.txt").read_text()
    assert run(["--workdir", str(tmp_path), "gradcheck", "--instances", "2", "--tolerance", "1e-30"]) == EXIT_NUMERIC


def test_ablate_table_rows(workdir, capsys):
    assert run(["--workdir", str(workdir), "ablate", "--manifest", "data/train.jsonl",
                "--test-manifest", "data/test.jsonl", "--segments", "8", "--batch-size", "8",
                "--iters", "10"]) == 0
    lines = (workdir / "ablation.txt").read_text().splitlines()
    assert lines[0].split() == ["levels", "Spatial", "Temporal", "Two-stream"]
    assert [ln.split()[0] for ln in lines[1:]] == ["1", "1,2", "1,2,4", "1,2,4,8", "3", "1,2,4(Ave)"]
    assert len(ABLATIONS) == 6
