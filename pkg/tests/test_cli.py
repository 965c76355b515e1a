import csv
import subprocess
import sys

import pytest

from rcisep.cli import main
from rcisep.instances import generate_random, write_cvrplib


@pytest.fixture
def vrp(tmp_path):
    inst = generate_random(8, 3)
    path = tmp_path / "a.vrp"
    write_cvrplib(inst, path)
    return inst, path


def test_generate(tmp_path, capsys):
    assert main(["--seed", "5", "generate", "--n", "10", "12", "--count", "2", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.vrp"))) == 4
    assert "random-n10-s5" in capsys.readouterr().out


def test_solve_writes_trace(vrp, tmp_path):
    _, path = vrp
    out = tmp_path / "t.csv"
    assert main(["solve", "--instance", str(path), "--separator", "exact", "--max-iter", "50", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["iteration", "lb", "cuts_added", "sep_time_s", "lp_pivots"]
    assert len(rows) >= 2


def test_global_flags_before_subcommand(vrp, tmp_path):
    _, path = vrp
    out = tmp_path / "t.csv"
    assert main(["--max-iter", "0", "--out", str(out), "solve", "--instance", str(path)]) == 0
    assert len(list(csv.reader(out.open()))) == 2


def test_compare_gap_column(vrp, tmp_path):
    inst, path = vrp
    out = tmp_path / "s.csv"
    assert main(["compare", "--instances", str(path), "--out", str(out)]) == 0
    header = next(csv.reader(out.open()))
    assert "gap_pct" not in header
    ub = tmp_path / "ub.csv"
    ub.write_text(f"{inst.name},{10**7}\n")
    assert main(["compare", "--instances", str(path), "--ub-file", str(ub), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["separator"] for r in rows] == ["exact", "components"]
    assert all(float(r["gap_pct"]) > 0 for r in rows)


def test_neural_without_checkpoint(vrp, capsys):
    _, path = vrp
    assert main(["solve", "--instance", str(path), "--separator", "neural"]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["solve", "--instance", "x.vrp", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_instance_file(tmp_path):
    assert main(["solve", "--instance", str(tmp_path / "none.vrp")]) == 2


def test_labels_train_sepbench(tmp_path, vrp):
    _, path = vrp
    data = tmp_path / "d.jsonl"
    ckpt = tmp_path / "p.json"
    assert main(["--max-iter", "5", "labels", "--instances", str(path), "--out", str(data)]) == 0
    assert main(["train", "--dataset", str(data), "--epochs", "1", "--out", str(ckpt)]) == 0
    assert main(["--checkpoint", str(ckpt), "sepbench", "--dataset", str(data),
                 "--separators", "exact,neural", "--out", str(tmp_path / "b.csv")]) == 0
    rows = list(csv.DictReader((tmp_path / "b.csv").open()))
    assert [r["separator"] for r in rows] == ["exact", "neural"]
    assert main(["solve", "--instance", str(path), "--separator", "neural", "--checkpoint", str(ckpt),
                 "--out", str(tmp_path / "n.csv")]) == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rcisep", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "sepbench" in res.stdout
