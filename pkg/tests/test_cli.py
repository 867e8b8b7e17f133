import json

import pytest

from ofsulr.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "400", "--d", "3", "--out", str(d / "blobs.csv")]) == 0
    return d


FAST = ["--k-range", "2..5", "--set", "grid.C=1", "--set", "classifiers.forest_trees=5",
        "--set", "classifiers.gbt_stages=10"]


def test_train_evaluate_stream(workdir, capsys):
    out = workdir / "run"
    assert main(["train", "--input", str(workdir / "blobs.csv"), "--out", str(out), *FAST]) == 0
    assert "k=2" in capsys.readouterr().out
    assert main(["evaluate", "--model", str(out / "bundle.model"), "--input", str(out / "test.csv"),
                 "--out", str(workdir / "eval.json")]) == 0
    batch = json.loads((workdir / "eval.json").read_text())
    rep = workdir / "stream.json"
    assert main(["stream-eval", "--model", str(out / "bundle.model"), "--input", str(out / "test.csv"),
                 "--batch-size", "7", "--out", str(rep)]) == 0
    streamed = json.loads(rep.read_text())
    assert streamed["cumulative"]["confusion"] == batch["confusion"]
    lines = (workdir / "stream.json.jsonl").read_text().splitlines()
    assert len(lines) == streamed["n_batches"] == -(-80 // 7)


def test_inspection_verbs(workdir, capsys):
    src = str(workdir / "blobs.csv")
    assert main(["profile", "--input", src]) == 0
    assert "x1,0,400,real,100.00" in capsys.readouterr().out
    assert main(["prepare", "--input", src, "--out", str(workdir / "clean.csv")]) == 0
    assert main(["cluster", "--input", src, "--k", "2", "--out", str(workdir / "lab.csv")]) == 0
    assert "chosen k: 2" in capsys.readouterr().out
    assert main(["pca", "--input", src, "--components", "2"]) == 0
    assert "selected N = 2 of 3" in capsys.readouterr().out
    grid = workdir / "grid.cfg"
    grid.write_text("[grid]\nsolver = gd\npenalty = l2\nC = 0.1, 1\n")
    assert main(["tune", "--input", src, "--grid", str(grid), "--folds", "3", "--k", "2"]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].startswith("cell,solver,penalty,C,fold0")
    assert len(table) == 3


def test_compare(workdir, capsys):
    assert main(["compare", "--input", str(workdir / "blobs.csv"), "--classifiers", "logreg,tree",
                 "--stream", "--out", str(workdir / "cmp"), *FAST]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 5
    assert (workdir / "cmp" / "comparison.csv").exists()


@pytest.mark.parametrize("argv,code", [
    (["train", "--bogus"], 1),
    (["frobnicate"], 1),
    (["train", "--input", "/nonexistent.csv"], 2),
    (["train", "--set", "grid.nope=1"], 1),
    (["evaluate", "--model", "/nonexistent.model", "--input", "x.csv"], 2),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exit_code(workdir, monkeypatch):
    from ofsulr import pipeline
    from ofsulr.errors import NumericalError

    def boom(*a, **kw):
        raise NumericalError("no convergence")

    monkeypatch.setattr(pipeline, "pca_fit", boom)
    assert main(["train", "--input", str(workdir / "blobs.csv"), "--k", "2",
                 "--out", str(workdir / "fail")]) == 3
