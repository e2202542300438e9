import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mapi import __version__, mavp
from mapi.cli import main
from mapi.pca import SAMPLE_DIR, downsample, read_pgm, write_pgm


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    for p in sorted(SAMPLE_DIR.glob("*.pgm"))[:2]:
        write_pgm(d / p.name, downsample(read_pgm(p), 4))
    return d


@pytest.fixture
def edge_file(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "graph.txt"
    lines = ["# tiny test graph"] + [f"{a}\t{b}" for a, b in rng.integers(0, 80, (400, 2))]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_kernel_check_passes(capsys):
    code, out, _ = run(capsys, "kernel-check")
    assert code == 0
    assert "FAIL" not in out and "8/8 checks passed" in out


def test_kernel_check_json(capsys):
    code, out, _ = run(capsys, "kernel-check", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["passed"] is True
    assert {r["check"] for r in doc["results"]} >= {"l1-induction", "symmetry", "diamond-fixed-point"}


def test_kernel_check_catches_sign_mutation(capsys, monkeypatch):
    def sign_zero_positive(x):
        if np.isscalar(x):
            return 1 if x >= 0 else -1
        return np.where(np.asarray(x) >= 0, 1.0, -1.0)

    monkeypatch.setattr(mavp, "signum", sign_zero_positive)
    code, out, _ = run(capsys, "kernel-check")
    assert code != 0
    assert "FAIL" in out


def test_prop1(capsys, tmp_path):
    code, out, _ = run(capsys, "prop1", "--n", "20", "--seed", "7", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "prop1.json").read_text())
    assert doc["max_abs_error_t2"] <= 1e-12
    assert doc["manifest"]["command"] == "prop1"
    assert doc["manifest"]["config"]["n"] == 20
    assert doc["manifest"]["version"] == __version__


def test_reconstruct(capsys, tmp_path, small_image_dir):
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "reconstruct", "--images", str(small_image_dir), "--op", "min2",
                       "--n-corrupt", "4", "--iters", "5", "--save-images", "--out", str(out_dir))
    assert code == 0
    doc = json.loads((out_dir / "reconstruct.json").read_text())
    assert len(doc["images"]) == 2
    assert doc["manifest"]["config"]["tile"] is None
    assert doc["images"][0]["tile"] == 4
    assert len(doc["manifest"]["input_digests"]) == 2
    assert len(list(out_dir.glob("*_rec*.pgm"))) == 8
    header = (out_dir / "reconstruct.csv").read_text().splitlines()[0]
    assert header.startswith("variant,iter,delta_l1")


def test_reconstruct_reproducible(capsys, tmp_path, small_image_dir):
    args = ["reconstruct", "--images", str(small_image_dir), "--n-corrupt", "3", "--iters", "4"]
    run(capsys, *args, "--out", str(tmp_path / "a"))
    run(capsys, *args, "--out", str(tmp_path / "b"))
    for name in ("reconstruct.csv", "reconstruct.json"):
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text().replace(str(tmp_path / "b"), str(tmp_path / "a"))
        assert a == b


def test_stochastic(capsys, tmp_path):
    code, out, _ = run(capsys, "stochastic", "--n", "2000", "--iters", "10", "--compare",
                       "--out", str(tmp_path / "trace.csv"))
    assert code == 0
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 10
    assert {r.split(",")[0] for r in rows[1:]} == {"min1", "rpi"}
    doc = json.loads((tmp_path / "trace.json").read_text())
    assert "rank_agreement" in doc and doc["manifest"]["config"]["batch"] == 128


def test_pagerank_compare(capsys, tmp_path, edge_file):
    code, out, _ = run(capsys, "pagerank", "--graph", str(edge_file), "--compare",
                       "--topk", "5", "--out", str(tmp_path / "report.json"))
    assert code == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert set(doc["methods"]) == {"rpi", "mapi-min1"}
    assert 0 <= doc["overlap"]["common"] <= 5
    assert len(doc["methods"]["rpi"]["trace"]) == 10
    assert doc["manifest"]["input_digests"]


def test_datasets(capsys, edge_file):
    code, out, _ = run(capsys, "datasets")
    assert code == 0 and "p2p-Gnutella08" in out
    code, out, _ = run(capsys, "datasets", "--verify", str(edge_file))
    assert code == 1 and "MISMATCH" in out


def test_missing_file_names_path(capsys, tmp_path):
    missing = tmp_path / "missing.txt"
    code, _, err = run(capsys, "pagerank", "--graph", str(missing))
    assert code == 1
    assert str(missing) in err


def test_missing_image_dir(capsys, tmp_path):
    code, _, err = run(capsys, "reconstruct", "--images", str(tmp_path / "none"))
    assert code == 1 and "none" in err


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["reconstruct", "--op", "bogus"])
    assert info.value.code == 2


def test_out_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("MAPI_OUT_DIR", str(tmp_path / "env"))
    assert main(["prop1", "--n", "5"]) == 0
    assert (tmp_path / "env" / "prop1.json").exists()


@pytest.mark.skipif(shutil.which("mapi") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["mapi", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
    res = subprocess.run(["mapi"], capture_output=True, text=True)
    assert res.returncode == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mapi.cli", "datasets"], capture_output=True,
                         text=True)
    assert res.returncode == 0
