import json
import subprocess
import sys

import numpy as np
import pytest

from cap_anneal.cli import run_cli
from cap_anneal.io import RgbImage, read_ppm, save_instance, write_ppm
from cap_anneal.scenarios import customer_instance


@pytest.fixture
def customers(tmp_path):
    ds, _ = customer_instance(0)
    p = tmp_path / "cust.csv"
    save_instance(p, ds)
    return p


def test_cluster_with_capacities(customers, tmp_path, capsys):
    out = tmp_path / "rep"
    code = run_cli(["cluster", str(customers), "--k", "6", "--capacities", "10,12,12,8,11,7",
                    "--out", str(out)])
    assert code == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["residual"] <= 1e-3
    assert "residual" in capsys.readouterr().out


def test_cluster_unconstrained(customers):
    assert run_cli(["cluster", str(customers), "--k", "3", "--beta-growth", "1.3"]) == 0


def test_nonconvergence_exit_code(customers, tmp_path):
    out = tmp_path / "nc"
    code = run_cli(["cluster", str(customers), "--k", "3", "--max-iters", "1", "--out", str(out)])
    assert code == 2
    assert (out / "solution.json").exists()


@pytest.mark.parametrize("args", [
    ["cluster", "missing.csv", "--k", "2"],
    ["cluster", "{cust}", "--k", "6", "--bogus"],
    ["cluster", "{cust}"],
    ["cluster", "{cust}", "--k", "5", "--capacities", "1,2,3"],
    ["cluster", "{cust}", "--k", "2", "--mode", "sized"],
    ["cluster", "{cust}", "--k", "2", "--mode", "none", "--capacities", "1,1"],
    ["cluster", "{cust}", "--k", "2", "--beta-growth", "0.9"],
    ["cluster", "{cust}", "--k", "2", "--beta-init", "abc"],
    ["segment", "{cust}"],
    ["frobnicate"],
])
def test_usage_errors(customers, args):
    args = [a.replace("{cust}", str(customers)) for a in args]
    assert run_cli(args) == 1


def test_seed_from_environment(customers, tmp_path, monkeypatch):
    monkeypatch.setenv("CAP_ANNEAL_SEED", "7")
    run_cli(["cluster", str(customers), "--k", "2", "--beta-growth", "1.3", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "solution.json").read_text())["seed"] == 7
    monkeypatch.setenv("CAP_ANNEAL_SEED", "x")
    assert run_cli(["cluster", str(customers), "--k", "2"]) == 1


def test_pickup_table(tmp_path, capsys):
    code = run_cli(["pickup", "--type-counts", "6,5", "--vehicles", "3", "--beta-growth", "1.3",
                    "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "type 1" in out and "type 2" in out
    sol = json.loads((tmp_path / "solution.json").read_text())
    lam = np.array(sol["capacities"])
    assert np.max(np.abs(np.array(sol["masses_per_type"]) - lam)) <= 1e-6
    assert len(sol["windows"]) == 11


def test_pickup_from_file(tmp_path):
    p = tmp_path / "ship.csv"
    p.write_text("t_start,t_end,type\n8,9,1\n8.5,10,2\n12,13,1\n13,15,2\n17,18,1\n17,19,2\n")
    assert run_cli(["pickup", str(p), "--k", "2", "--beta-growth", "1.3"]) == 0
    p.write_text("t_start,t_end\n8,9\n9,10\n")
    assert run_cli(["pickup", str(p), "--k", "2"]) == 1


def test_segment(tmp_path, rng):
    px = np.repeat(rng.integers(0, 256, size=(6, 1, 3)), 9, axis=1).astype(np.uint8)
    src = tmp_path / "in.ppm"
    write_ppm(RgbImage(px), src)
    code = run_cli(["segment", str(src), "--k", "3", "--pixelate", "3x2", "--lloyd-runs", "2",
                    "--out", str(tmp_path)])
    assert code == 0
    out = read_ppm(tmp_path / "out.ppm")
    assert len({tuple(c) for c in out.pixels.reshape(-1, 3)}) <= 3
    assert read_ppm(tmp_path / "pixelated.ppm").pixels.shape == (2, 3, 3)
    info = json.loads((tmp_path / "segment.json").read_text())
    assert info["compression_palette"] == 54 / 3 and len(info["lloyd_distortions"]) == 2


def test_bench(capsys):
    assert run_cli(["bench", "--instances", "2", "--lloyd-runs", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and "oracle" in lines[0]


def test_module_entry_point(customers):
    r = subprocess.run([sys.executable, "-m", "cap_anneal", "cluster", str(customers), "--k", "2",
                        "--beta-growth", "1.3"], capture_output=True, text=True)
    assert r.returncode == 0 and "distortion" in r.stdout
