import csv
import json

import numpy as np
import pytest

from cap_anneal import AnnealConfig, CapacitySpec, InstanceError, anneal, validate_dataset
from cap_anneal.io import (
    RgbImage,
    load_instance,
    parse_capacities,
    read_instance,
    read_ppm,
    save_instance,
    write_ppm,
    write_report,
)
from cap_anneal.scenarios import VEHICLE_CAPACITIES, customer_instance


def test_csv_without_weights(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("x1,x2\n0,0\n1,2\n")
    ds, cap = load_instance(p)
    np.testing.assert_array_equal(ds.weights, [0.5, 0.5])
    np.testing.assert_array_equal(ds.points, [[0, 0], [1, 2]])
    assert cap.mode == "none"


def test_csv_weights_and_types(tmp_path):
    p = tmp_path / "typed.csv"
    p.write_text("# a comment\nx1,w,type\n0,1,1\n1,3,2\n2,4,2\n")
    ds, _ = load_instance(p)
    np.testing.assert_allclose(ds.weights, [0.125, 0.375, 0.5])
    assert ds.types.tolist() == [0, 1, 1]


def test_csv_time_windows(tmp_path):
    p = tmp_path / "win.csv"
    p.write_text("t_start,t_end,type\n8,10,1\n9,13,2\n")
    inst = read_instance(p)
    np.testing.assert_array_equal(inst.dataset.points[:, 0], [9.0, 11.0])
    np.testing.assert_array_equal(inst.windows, [[8, 10], [9, 13]])


def test_json_capacities(tmp_path):
    ds, _ = customer_instance(0)
    p = tmp_path / "cust.json"
    p.write_text(json.dumps({"points": ds.points.tolist(), "capacities": list(VEHICLE_CAPACITIES)}))
    ds2, cap = load_instance(p)
    np.testing.assert_allclose(cap.lam, np.array(VEHICLE_CAPACITIES) / 60, rtol=1e-15)
    with pytest.raises(InstanceError, match="capacities"):
        load_instance(p, k=5)


@pytest.mark.parametrize("text, match", [
    ("x1,x2\n0,0\n1\n", ":3:"),
    ("x1\n0\nabc\n", ":3: field 'x1'"),
    ("x1,zz\n0,0\n", "unknown columns"),
    ("x2\n0\n", "x1..xd"),
    ("", "empty"),
    ("t_start,t_end\n5,4\n", ":2:"),
    ("x1,w\n0,-1\n1,1\n", "nonnegative"),
])
def test_csv_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InstanceError, match=match):
        load_instance(p)


def test_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\"points\": [[0], [1]],\n \"weights\": [1, }")
    with pytest.raises(InstanceError, match=":2:"):
        load_instance(p)
    p.write_text("[1, 2]")
    with pytest.raises(InstanceError, match="points"):
        load_instance(p)
    with pytest.raises(InstanceError, match="no such file"):
        load_instance(tmp_path / "missing.csv")
    (tmp_path / "x.txt").write_text("x1\n0\n")
    with pytest.raises(InstanceError, match="format"):
        load_instance(tmp_path / "x.txt")


@pytest.mark.parametrize("suffix", ["csv", "json"])
def test_instance_round_trip(tmp_path, rng, suffix):
    ds = validate_dataset(rng.normal(size=(7, 3)), rng.uniform(size=7), types=[0, 1, 2, 0, 1, 2, 2])
    p = tmp_path / f"inst.{suffix}"
    save_instance(p, ds)
    back, _ = load_instance(p)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_allclose(back.weights, ds.weights, atol=1e-12)
    np.testing.assert_array_equal(back.types, ds.types)


def test_json_round_trip_with_capacities(tmp_path):
    ds, cap = customer_instance(1)
    p = tmp_path / "c.json"
    save_instance(p, ds, cap, name="customers")
    inst = read_instance(p)
    np.testing.assert_allclose(inst.capacities.lam, cap.lam, atol=1e-15)
    assert inst.name == "customers"


def test_parse_capacities(tmp_path):
    c = parse_capacities("10,12,12,8,11,7")
    np.testing.assert_allclose(c.lam * 60, VEHICLE_CAPACITIES)
    m = parse_capacities("1,2;3,4")
    assert m.mode == "typed" and m.lam.shape == (2, 2)
    f = tmp_path / "cap.json"
    f.write_text('{"capacities": [1, 3]}')
    np.testing.assert_allclose(parse_capacities(str(f)).lam, [0.25, 0.75])
    g = tmp_path / "cap.txt"
    g.write_text("1,1\n2,4\n")
    np.testing.assert_allclose(parse_capacities(str(g)).lam, [[0.125, 0.125], [0.25, 0.5]])
    with pytest.raises(InstanceError):
        parse_capacities("1,x")
    with pytest.raises(InstanceError):
        parse_capacities("1,2;3")
    with pytest.raises(InstanceError):
        parse_capacities("1,2;3,4", "sized")


def test_ppm_white_pixel(tmp_path):
    p = tmp_path / "w.ppm"
    p.write_bytes(b"P3\n# one pixel\n1 1\n255\n255 255 255\n")
    img = read_ppm(p)
    assert img.pixels.reshape(-1, 3).tolist() == [[255, 255, 255]]


def test_ppm_round_trip_bytes(tmp_path, rng):
    px = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
    a.write_bytes(b"P6\n16 16\n255\n" + px.tobytes())
    write_ppm(read_ppm(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_ppm_ascii_round_trip(tmp_path, rng):
    img = RgbImage(rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8))
    p = tmp_path / "a.ppm"
    write_ppm(img, p, binary=False)
    np.testing.assert_array_equal(read_ppm(p).pixels, img.pixels)


def test_ppm_errors(tmp_path):
    p = tmp_path / "g.pgm"
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(ValueError, match="unsupported format"):
        read_ppm(p)
    p.write_bytes(b"P3\n1 1\n65535\n0 0 0\n")
    with pytest.raises(ValueError, match="maxval"):
        read_ppm(p)
    p.write_bytes(b"P6\n2 2\n255\n\x00\x00")
    with pytest.raises(ValueError, match="truncated"):
        read_ppm(p)


def test_rgb_image_validation():
    with pytest.raises(ValueError):
        RgbImage(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        RgbImage(np.full((1, 1, 3), 300))


def small_report(seed=0):
    ds, cap = customer_instance(0)
    return ds, anneal(ds, 6, cap, AnnealConfig(beta_growth=1.3, rng_seed=seed))


def test_write_report_files(tmp_path):
    ds, rep = small_report()
    paths = write_report(rep, tmp_path / "r")
    assert [p.name for p in paths] == ["solution.json", "assignments.csv", "trajectory.csv"]
    sol = json.loads(paths[0].read_text())
    assert sol["seed"] == 0 and sol["config"]["beta_growth"] == 1.3
    assert abs(sum(sol["masses"]) - 1) <= 1e-10
    # recompute masses from the hard assignments and the hardened cluster counts
    with open(paths[1]) as fh:
        rows = list(csv.DictReader(fh))
    clusters = np.array([int(r["cluster"]) for r in rows])
    assert clusters.min() >= 1 and clusters.max() <= 6
    counts = np.bincount(clusters - 1, minlength=6)
    assert counts.tolist() == sol["hard_counts"]
    with open(paths[2]) as fh:
        traj = list(csv.DictReader(fh))
    assert len(traj) == len(rep.trajectory)


def test_write_report_deterministic(tmp_path):
    _, a = small_report(seed=4)
    _, b = small_report(seed=4)
    write_report(a, tmp_path / "a")
    write_report(b, tmp_path / "b")
    for name in ("solution.json", "assignments.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_write_report_empty_trajectory(tmp_path):
    _, rep = small_report()
    rep.trajectory = []
    write_report(rep, tmp_path)
    assert (tmp_path / "trajectory.csv").read_text().strip().count("\n") == 0


def test_write_report_association_rows(tmp_path):
    ds, rep = small_report()
    P = np.full((ds.n, 6), 1 / 6)
    write_report(rep, tmp_path, associations=P)
    header = (tmp_path / "assignments.csv").read_text().splitlines()[0]
    assert header == "point,cluster,p1,p2,p3,p4,p5,p6"
