"""Instance files, PPM images and report output.

Instance CSV files have a header row.  Coordinates are the columns ``x1..xd``;
optional columns are ``w`` (weight), ``type`` (1-based type label) and
``t_start``/``t_end`` (a time window, whose midpoint is used as the point when
no ``x`` columns are present).  JSON instances hold ``points``, and optionally
``weights``, ``types`` (1-based), ``capacities`` and ``windows``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CapacitySpec, Dataset, InstanceError, validate_dataset

_XCOL = re.compile(r"^x(\d+)$")


@dataclass
class Instance:
    dataset: Dataset
    capacities: CapacitySpec
    windows: np.ndarray | None = None
    name: str = ""


def _guess_format(path, fmt):
    if fmt:
        if fmt not in ("csv", "json"):
            raise InstanceError(f"unknown instance format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".csv", ".json"):
        return suffix[1:]
    raise InstanceError(f"cannot tell the format of {path}; pass csv or json")


def _read_csv(path) -> Instance:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise InstanceError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    xcols = sorted((int(m.group(1)), i) for i, h in enumerate(header) if (m := _XCOL.match(h)))
    if xcols and [c for c, _ in xcols] != list(range(1, len(xcols) + 1)):
        raise InstanceError(f"{path}: coordinate columns must be x1..xd")
    known = {"w", "type", "t_start", "t_end"} | {header[i] for _, i in xcols}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise InstanceError(f"{path}: unknown columns {unknown}")
    has_window = "t_start" in header and "t_end" in header
    if not xcols and not has_window:
        raise InstanceError(f"{path}: need x1..xd or t_start/t_end columns")

    data = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InstanceError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for h, value in zip(header, row):
            try:
                data[h].append(float(value))
            except ValueError:
                raise InstanceError(f"{path}:{lineno}: field {h!r}: not a number: {value!r}") from None

    windows = None
    if has_window:
        windows = np.column_stack([data["t_start"], data["t_end"]])
        if np.any(windows[:, 1] < windows[:, 0]):
            bad = int(np.argmax(windows[:, 1] < windows[:, 0])) + 2
            raise InstanceError(f"{path}:{bad}: t_end before t_start")
    if xcols:
        points = np.column_stack([data[header[i]] for _, i in xcols])
    else:
        points = windows.mean(axis=1)
    types = None
    if "type" in data:
        types = np.array(data["type"]) - 1
    ds = validate_dataset(points, data.get("w"), types)
    return Instance(ds, CapacitySpec(), windows, Path(path).stem)


def _read_json(path) -> Instance:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "points" not in obj:
        raise InstanceError(f"{path}: expected an object with a 'points' field")
    types = obj.get("types")
    if types is not None:
        types = np.asarray(types) - 1
    ds = validate_dataset(obj["points"], obj.get("weights"), types)
    cap = CapacitySpec()
    if obj.get("capacities") is not None:
        cap = CapacitySpec.from_amounts(obj["capacities"])
    windows = obj.get("windows")
    if windows is not None:
        windows = np.asarray(windows, dtype=float)
        if windows.shape != (ds.n, 2):
            raise InstanceError(f"{path}: 'windows' must be N pairs")
    return Instance(ds, cap, windows, obj.get("name", Path(path).stem))


def read_instance(path, fmt: str | None = None) -> Instance:
    """Parse an instance file into a dataset, capacities and optional windows."""
    if not Path(path).is_file():
        raise InstanceError(f"{path}: no such file")
    return _read_csv(path) if _guess_format(path, fmt) == "csv" else _read_json(path)


def load_instance(path, fmt: str | None = None, k: int | None = None):
    """``(Dataset, CapacitySpec)`` from a CSV or JSON file.

    If ``k`` is given the capacities (when present) must list K clusters.
    """
    inst = read_instance(path, fmt)
    if k is not None and inst.capacities.mode != "none" and inst.capacities.k != k:
        raise InstanceError(f"{path}: {inst.capacities.k} capacities given for K={k}")
    return inst.dataset, inst.capacities


def parse_capacities(text: str, mode: str | None = None) -> CapacitySpec:
    """Capacities from a file path or inline text.

    Inline: ``10,12,12`` for a vector, rows separated by ``;`` for a K x p
    matrix.  A file may hold JSON (a list or ``{"capacities": ...}``) or
    comma separated rows.
    """
    p = Path(text)
    if p.is_file():
        raw = p.read_text().strip()
        if raw.startswith(("[", "{")):
            obj = json.loads(raw)
            amounts = obj["capacities"] if isinstance(obj, dict) else obj
        else:
            amounts = _parse_rows(raw.replace("\n", ";"))
    else:
        amounts = _parse_rows(text)
    a = np.asarray(amounts, dtype=float)
    if mode == "typed" and a.ndim == 1:
        a = a[:, None]
    if mode == "sized" and a.ndim == 2:
        raise InstanceError("sized mode needs a capacity vector")
    return CapacitySpec.from_amounts(a, mode)


def _parse_rows(text):
    rows = [r for r in (s.strip() for s in text.split(";")) if r]
    try:
        parsed = [[float(v) for v in r.split(",")] for r in rows]
    except ValueError:
        raise InstanceError(f"cannot parse capacities {text!r}") from None
    if len(parsed) == 1:
        return parsed[0]
    if len({len(r) for r in parsed}) != 1:
        raise InstanceError("capacity rows have different lengths")
    return parsed


def save_instance(path, ds: Dataset, cap: CapacitySpec | None = None,
                  windows=None, name: str = "") -> None:
    """Write an instance as CSV or JSON (chosen by suffix); types come out 1-based."""
    path = Path(path)
    fmt = _guess_format(path, None)
    if fmt == "json":
        obj = {"points": ds.points.tolist(), "weights": ds.weights.tolist()}
        if ds.typed:
            obj["types"] = (ds.types + 1).tolist()
        if cap is not None and cap.mode != "none":
            obj["capacities"] = cap.lam.tolist()
        if windows is not None:
            obj["windows"] = np.asarray(windows, dtype=float).tolist()
        if name:
            obj["name"] = name
        path.write_text(json.dumps(obj, indent=1) + "\n")
        return
    if cap is not None and cap.mode != "none":
        raise InstanceError("CSV instances carry no capacities; use JSON")
    header = [f"x{i + 1}" for i in range(ds.dim)] + ["w"]
    cols = [ds.points[:, i] for i in range(ds.dim)] + [ds.weights]
    if ds.typed:
        header.append("type")
        cols.append(ds.types + 1)
    if windows is not None:
        windows = np.asarray(windows, dtype=float)
        header += ["t_start", "t_end"]
        cols += [windows[:, 0], windows[:, 1]]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in zip(*cols):
            out.writerow([repr(float(v)) if not isinstance(v, np.integer) else int(v)
                          for v in row])


# -- images -------------------------------------------------------------------

@dataclass
class RgbImage:
    """8-bit RGB raster; ``pixels`` has shape ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must have shape (height, width, 3)")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("channel values must be integers in 0..255")
            px = px.astype(np.uint8)
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _ppm_tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset just past the last one."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_ppm(path) -> RgbImage:
    """Read a P3 or P6 portable pixmap with maxval 255."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P3", b"P6"):
        raise ValueError(f"unsupported format {magic.decode(errors='replace')!r}; need P3 or P6")
    (_, w, h, maxval), pos = _ppm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ValueError("malformed PPM header") from None
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}; need 255")
    if w < 1 or h < 1:
        raise ValueError("PPM has no pixels")
    n = w * h * 3
    if magic == b"P6":
        body = data[pos + 1:pos + 1 + n]
        if len(body) != n:
            raise ValueError("truncated PPM pixel data")
        px = np.frombuffer(body, dtype=np.uint8)
    else:
        vals = data[pos:].split()
        if len(vals) < n:
            raise ValueError("truncated PPM pixel data")
        px = np.array([int(v) for v in vals[:n]])
        if px.min() < 0 or px.max() > 255:
            raise ValueError("PPM channel value out of range")
    return RgbImage(px.reshape(h, w, 3).astype(np.uint8))


def write_ppm(img: RgbImage, path, binary: bool = True) -> None:
    px = img.pixels
    header = f"{'P6' if binary else 'P3'}\n{img.width} {img.height}\n255\n".encode()
    if binary:
        Path(path).write_bytes(header + px.tobytes())
        return
    rows = [" ".join(str(int(v)) for v in row.ravel()) for row in px]
    Path(path).write_bytes(header + ("\n".join(rows) + "\n").encode())


# -- reports ------------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: arrays to lists, NaN and inf to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def report_summary(report) -> dict:
    """Plain-data summary of a SolveReport."""
    st = report.final_state
    cfg = report.config
    out = {
        "method": report.method,
        "k": st.k,
        "beta": st.beta,
        "locations": st.locations,
        "eta": st.eta,
        "masses": report.masses.per_cluster,
        "residual": report.residual,
        "distortion": report.distortion,
        "hard_cost": report.hard_cost,
        "hard_counts": report.hard_counts,
        "converged": report.converged,
        "nonconverged_steps": report.nonconverged_steps,
        "capacity_mode": report.capacity.mode,
        "capacities": report.capacity.lam,
        "outer_steps": len(report.trajectory),
    }
    if report.masses.per_cluster_per_type is not None:
        out["masses_per_type"] = report.masses.per_cluster_per_type
    if cfg is not None:
        out["config"] = cfg.to_dict()
        out["seed"] = cfg.rng_seed
    if report.history:
        out["history"] = report.history
    return out


def write_report(report, directory, extra: dict | None = None, associations=None) -> list[Path]:
    """Write ``solution.json``, ``assignments.csv`` and ``trajectory.csv``.

    Cluster numbers in ``assignments.csv`` are 1-based.  Pass
    ``associations`` (N x K) to add each point's soft row to the
    assignment file.  Returns the paths written.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    summary = report_summary(report)
    if extra:
        summary.update(extra)
    sol = d / "solution.json"
    sol.write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")

    asg = d / "assignments.csv"
    k = report.final_state.k
    with open(asg, "w", newline="") as fh:
        out = csv.writer(fh)
        head = ["point", "cluster"]
        if associations is not None:
            head += [f"p{j + 1}" for j in range(k)]
        out.writerow(head)
        for i, c in enumerate(report.partition):
            row = [i, int(c) + 1]
            if associations is not None:
                row += [repr(float(v)) for v in associations[i]]
            out.writerow(row)

    traj = d / "trajectory.csv"
    with open(traj, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["beta", "free_energy", "distortion", "modified_distortion", "entropy",
                      "residual", "iterations", "converged"])
        for r in report.trajectory:
            out.writerow([repr(r.beta), repr(r.free_energy), repr(r.distortion),
                          repr(r.modified_distortion), repr(r.entropy), repr(r.residual),
                          r.iterations, int(r.converged)])
    return [sol, asg, traj]
