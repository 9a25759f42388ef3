import json

import pytest

from lrknn.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def data_dir(tmp_path, capsys):
    cb = tmp_path / "cb.csv"
    assert run(capsys, "synth", "--seed", 4, "--out", cb)[0] == 0
    assert run(capsys, "split", "--data", cb, "--sizes", "379,379,379", "--seed", 4, "--out", tmp_path)[0] == 0
    return tmp_path


def test_synth_default(capsys):
    code, out, _ = run(capsys, "synth", "--n-cases", 20, "--seed", 2)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("id,label,age_ge60,") and len(lines) == 21


def test_split_manifest(data_dir):
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["sizes"] == [379, 379, 379]
    assert len(manifest["chi_square"]["attributes"]) == 19
    for name in ("training.csv", "setting.csv", "evaluation.csv"):
        assert (data_dir / name).read_text().count("\n") == 380


def test_pipeline(data_dir, capsys):
    d = data_dir
    assert run(capsys, "fit", "--train", d / "training.csv", "--out", d / "model.json")[0] == 0
    model = json.loads((d / "model.json").read_text())
    assert len(model["selected_attributes"]) == 19

    code, out, _ = run(capsys, "weights", "--model", d / "model.json", "--train", d / "training.csv",
                       "--case-out", d / "cw.csv")
    assert code == 0 and out.splitlines()[0] == "attribute,weight,source"
    assert (d / "cw.csv").read_text().count("\n") == 380

    code, out, _ = run(capsys, "tune-k", "--train", d / "training.csv", "--setting", d / "setting.csv",
                       "--model", d / "model.json", "--k-max", 10)
    tuned = json.loads(out)
    assert code == 0 and 1 <= tuned["k"] <= 10 and len(tuned["metric_values"]) == 10

    code, _, _ = run(capsys, "predict", "--train", d / "training.csv", "--query", d / "evaluation.csv",
                     "--model", d / "model.json", "--k", tuned["k"], "--out", d / "scores.csv",
                     "--trace", d / "trace.json")
    assert code == 0
    assert len(json.loads((d / "trace.json").read_text())) == 379

    code, out, _ = run(capsys, "eval", "--scores", d / "scores.csv", "--replicates", 500, "--dump", d / "reps.csv")
    report = json.loads(out)
    assert code == 0 and report["replicates"] == 500
    assert report["ci_low"] <= report["boot_mean"] <= report["ci_high"]
    assert (d / "reps.csv").read_text().count("\n") == 501


def test_stepwise_separation_exit_1(tmp_path, capsys):
    rows = ["id,label,a,b"] + [f"p{i},{y},{a},{b}" for i, (y, a, b) in enumerate(
        [(1, 1, 0), (1, 1, 1), (1, 1, 0), (0, 0, 1), (1, 0, 0), (0, 0, 1), (0, 0, 0), (0, 0, 1), (1, 0, 1)])]
    (tmp_path / "t.csv").write_text("\n".join(rows) + "\n")
    code, _, err = run(capsys, "fit", "--train", tmp_path / "t.csv", "--stepwise")
    assert code == 1
    first = err.splitlines()[0]
    assert first.startswith("error: logistic:") and "a" in first.split("for:")[-1]
    assert json.loads(err.splitlines()[1])["exit"] == 1


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--train", tmp_path / "nope.csv")
    assert code == 2 and "not found" in err


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["predict", "--k", "3"])
    assert e.value.code == 2


def test_domain_error_exit_1(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("id,label,a\np1,1,2\n")
    code, _, err = run(capsys, "fit", "--train", tmp_path / "bad.csv")
    assert code == 1 and "non-binary value" in err


PLAN = """[experiment]
data = synthetic:cohort
seed = 1
replicates = 10
noise = 0, 50
modes = all
variants = LR, CBR, CBR+WA+WP
"""


def test_experiment_byte_identical(tmp_path, capsys):
    plan = tmp_path / "plan.cfg"
    plan.write_text(PLAN)
    for out in ("a", "b"):
        assert run(capsys, "experiment", "--plan", plan, "--seed", 7, "--out", tmp_path / out)[0] == 0
    a = sorted((tmp_path / "a").iterdir())
    assert [p.name for p in a] == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert len(a) == 5
    for p in a:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["plan"]["seed"] == 7
