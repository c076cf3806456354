"""Plain-text CSV formats for graphons, graphs, grid functions, trajectories and couplings.

Every file starts with a header line naming the object and its size,
followed by the data rows.  Reports serialize to JSON with ``inf``
written as the string ``"inf"``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    return repr(float(x))


def _header(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    return [c.strip() for c in rows[0]], rows[1:]


def _fields(header: list[str], kind: str) -> dict[str, str]:
    if header[0] != kind or len(header) % 2 != 1:
        raise ValueError(f"expected a {kind!r} header, got {','.join(header)!r}")
    return dict(zip(header[1::2], header[2::2]))


def _matrix(rows, n: int, path) -> np.ndarray:
    arr = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if arr.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} values, got {arr.shape}")
    return arr


def write_graphon(path, g) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graphon", "n", g.n, "bound", _fmt(g.upper_bound)])
        for row in g.values:
            w.writerow([_fmt(v) for v in row])


def read_graphon(path):
    from .graphon import StepGraphon

    header, rows = _header(path)
    f = _fields(header, "graphon")
    n = int(f["n"])
    return StepGraphon(_matrix(rows, n, path), upper_bound=float(f.get("bound", 1.0)))


def write_adjacency(path, g) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["adjacency", "n", g.n, "alpha", _fmt(g.alpha), "directed", int(g.directed), "seed", g.seed])
        for row in g.bits:
            w.writerow([int(v) for v in row])


def read_adjacency(path):
    from .random_graphs import AdjacencyGraph

    header, rows = _header(path)
    f = _fields(header, "adjacency")
    n = int(f["n"])
    bits = _matrix(rows, n, path).astype(np.uint8)
    return AdjacencyGraph(
        bits=bits,
        directed=bool(int(f["directed"])),
        alpha=float(f["alpha"]),
        seed=int(f["seed"]),
        source=str(path),
    )


def write_gridfunction(path, gf) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gridfn", "n", gf.n])
        for v in gf.values:
            w.writerow([_fmt(v)])


def read_gridfunction(path):
    from .random_graphs import GridFunction

    header, rows = _header(path)
    n = int(_fields(header, "gridfn")["n"])
    vals = np.array([float(r[0]) for r in rows])
    if vals.size != n:
        raise ValueError(f"{path}: expected {n} values, got {vals.size}")
    return GridFunction(vals)


def write_trajectory(path, traj) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", "n", traj.n, "dt", _fmt(traj.dt), "save_every", traj.save_every])
        for t, state in zip(traj.times, traj.states):
            w.writerow([_fmt(t)] + [_fmt(v) for v in state])


def read_trajectory(path):
    from .dynamics import Trajectory

    header, rows = _header(path)
    f = _fields(header, "trajectory")
    data = np.array([[float(v) for v in row] for row in rows])
    n = int(f["n"])
    if data.shape[1] != n + 1:
        raise ValueError(f"{path}: expected {n + 1} columns")
    return Trajectory(
        times=data[:, 0],
        states=data[:, 1:],
        dt=float(f["dt"]),
        save_every=int(f["save_every"]),
    )


def write_coupling(path, nu) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["coupling", "k", nu.k])
        for row in nu.masses:
            w.writerow([_fmt(v) for v in row])


def read_coupling(path):
    from .staircase import DiscreteCoupling

    header, rows = _header(path)
    k = int(_fields(header, "coupling")["k"])
    return DiscreteCoupling(_matrix(rows, k, path))


def write_bijection(path, theta) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bijection", "segments", len(theta.segments)])
        for s in theta.segments:
            w.writerow([_fmt(s.start_x), _fmt(s.start_y), _fmt(s.length)])


def read_bijection(path):
    from .staircase import PiecewiseBijection, Segment

    header, rows = _header(path)
    count = int(_fields(header, "bijection")["segments"])
    segs = [Segment(float(a), float(b), float(c)) for a, b, c in rows]
    if len(segs) != count:
        raise ValueError(f"{path}: expected {count} segments, got {len(segs)}")
    return PiecewiseBijection(segs)


def write_rows(path, columns: list[str], rows: list[dict]) -> None:
    """Write a results table; floats use ``repr`` so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return v


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def to_json(obj, path=None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
