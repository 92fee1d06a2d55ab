import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from finecluster import io as fio
from finecluster.cli import SWEEP_COLUMNS, main


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def _gen(tmp_path, name="data", preset="a1", n=900, seed=0, extra=()):
    out = tmp_path / name
    assert main(["generate", "--preset", preset, "--n", str(n), "--seed", str(seed), "--out", str(out), *extra]) == 0
    return out


def test_generate_a1_byte_identical(tmp_path):
    a = _gen(tmp_path, "a")
    b = _gen(tmp_path, "b")
    assert _files(a) == _files(b)
    m = json.loads((a / "manifest.json").read_text())
    assert m["preset"] == "a1" and m["n"] == 900 and len(m["truths"]) == 1
    assert set(m["sha256"]) == {"data.fcds", "labels.fclb"}


def test_generate_tight_pair_manifest(tmp_path):
    out = _gen(tmp_path, preset="fig1")
    m = json.loads((out / "manifest.json").read_text())
    means = np.array(m["truths"][0]["means"])
    assert means.shape == (3, 10)
    tight = sorted(np.linalg.norm(means[i] - means[j]) for i in range(3) for j in range(i + 1, 3))[0]
    assert tight == pytest.approx(0.6)


def test_generate_point_masses_two_truths(tmp_path):
    out = _gen(tmp_path, preset="fig2", n=400)
    assert (out / "labels_1.fclb").exists()
    assert len(json.loads((out / "manifest.json").read_text())["truths"]) == 2


def test_cluster_rerun_byte_identical(tmp_path):
    data = _gen(tmp_path) / "data.fcds"
    for name in ("r1", "r2"):
        assert main(["cluster", "--data", str(data), "--alpha", "0.3333", "--seed", "3", "--out", str(tmp_path / name)]) == 0
    a, b = _files(tmp_path / "r1"), _files(tmp_path / "r2")
    assert a == b
    assert {"assignments.fcas", "centers.csv", "scatter.svg", "summary.json", "trace.jsonl"} <= set(a)
    for line in (tmp_path / "r1" / "trace.jsonl").read_text().splitlines():
        json.loads(line)


def test_cluster_then_verify_pass_and_fail(tmp_path):
    d = _gen(tmp_path)
    run = tmp_path / "run"
    assert main(["cluster", "--data", str(d / "data.fcds"), "--alpha", "0.3333", "--out", str(run)]) == 0
    common = ["verify", "--data", str(d / "data.fcds"), "--labels", str(d / "labels.fclb"),
              "--manifest", str(d / "manifest.json"), "--assignments", str(run / "assignments.fcas"),
              "--alpha", "0.3333"]
    assert main(common + ["--separation-factor", "8", "--out", str(tmp_path / "v1")]) == 0
    rep = json.loads((tmp_path / "v1" / "report.json").read_text())
    assert rep["pass"] and rep["m"] == 3
    for name in ("clauses.csv", "metrics.csv"):
        assert (tmp_path / "v1" / name).exists()
    # the default separation factor is far above what the fixture offers
    assert main(common + ["--out", str(tmp_path / "v2")]) == 3


def test_empty_dataset_exit_1(tmp_path):
    p = tmp_path / "empty.fcds"
    fio.write_dataset(p, np.zeros((0, 3)))
    assert main(["cluster", "--data", str(p), "--alpha", "0.3", "--out", str(tmp_path / "o")]) == 1


def test_missing_file_and_bad_args_exit_1(tmp_path):
    assert main(["cluster", "--data", str(tmp_path / "nope.fcds"), "--alpha", "0.3", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--alpha", "0.3"])
    assert exc.value.code == 1
    d = _gen(tmp_path)
    assert main(["cluster", "--data", str(d / "data.fcds"), "--alpha", "0.3", "--set", "bogus=1",
                 "--out", str(tmp_path / "o")]) == 1


def test_corrupt_command(tmp_path):
    d = _gen(tmp_path)
    out = tmp_path / "bad"
    assert main(["corrupt", "--data", str(d / "data.fcds"), "--labels", str(d / "labels.fclb"),
                 "--manifest", str(d / "manifest.json"), "--fraction", "0.01", "--out", str(out)]) == 0
    labels = fio.read_labels(out / "labels.fclb")
    assert (labels == -1).sum() == 9


def test_kpca_baseline(tmp_path):
    d = _gen(tmp_path)
    out = tmp_path / "kp"
    assert main(["cluster", "--data", str(d / "data.fcds"), "--alpha", "0.3", "--baseline", "kpca", "--k", "3",
                 "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["method"] == "kpca"
    assert main(["cluster", "--data", str(d / "data.fcds"), "--alpha", "0.3", "--baseline", "kpca",
                 "--out", str(out)]) == 1


def _sweep_rows(path):
    with open(path / "sweep.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_single_cell(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--n", "600", "--out", str(out)]) == 0
    rows = _sweep_rows(out)
    assert len(rows) == 1 and tuple(rows[0]) == SWEEP_COLUMNS
    assert rows[0]["recovered"] == "1"
    assert (out / "sweep.svg").exists()


def test_sweep_alpha_grid(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--n", "600", "--alphas", "0.5", "0.3333", "0.25", "--out", str(out)]) == 0
    rows = _sweep_rows(out)
    assert [float(r["alpha"]) for r in rows] == [0.25, 0.3333, 0.5]
    assert [int(r["k"]) for r in rows] == [4, 3, 2]


def test_sweep_empty_grid_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--alphas", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "finecluster", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "sweep" in r.stdout
