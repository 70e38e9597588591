"""CSV/JSON serialization of paths, ensembles, reports and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so equal
arrays always produce identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path as FsPath
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .paths import Ensemble, MultiPath, make_grid
from .skorokhod import SPSolution


def fmt(x) -> str:
    return repr(float(x))


def _write_rows(file, header: Sequence[str], rows: Iterable[Sequence]) -> FsPath:
    file = FsPath(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return file


def _float_rows(matrix: np.ndarray):
    return ([fmt(v) for v in row] for row in matrix)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj, file) -> FsPath:
    file = FsPath(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
    file.write_text(text + "\n")
    return file


def sha256_file(file) -> str:
    return hashlib.sha256(FsPath(file).read_bytes()).hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# paths


def write_path_csv(path: MultiPath, file, extra: Optional[dict] = None) -> FsPath:
    """Columns time, x1..xn, then any ``extra`` columns (name -> values per grid point)."""
    header = ["time"] + [f"x{i + 1}" for i in range(path.dim)]
    cols = [path.grid.points[:, None], path.values]
    for name, vals in (extra or {}).items():
        header.append(name)
        cols.append(np.asarray(vals, dtype=float)[:, None])
    return _write_rows(file, header, _float_rows(np.hstack(cols)))


def read_path_csv(file) -> tuple[MultiPath, dict]:
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header[0] != "time":
        raise ValueError("first column must be time")
    t = data[:, 0]
    grid = make_grid(float(t[-1]), float(t[1] - t[0]))
    if len(grid.points) != len(t) or not np.allclose(grid.points, t, rtol=0, atol=1e-12):
        raise ValueError("time column is not a uniform grid")
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    extra = {h: data[:, i] for i, h in enumerate(header) if i and i not in xcols}
    return MultiPath(grid, data[:, xcols]), extra


def path_to_json(path: MultiPath) -> dict:
    return {"grid": {"T": path.grid.T, "dt": path.grid.dt}, "values": path.values.tolist()}


def path_from_json(d: dict) -> MultiPath:
    grid = make_grid(d["grid"]["T"], d["grid"]["dt"])
    return MultiPath(grid, np.asarray(d["values"], dtype=float))


def write_sp_solution(sol: SPSolution, file) -> FsPath:
    """Reflected path with one l<i> column per face local time."""
    L = sol.local_time_matrix
    extra = {f"l{i + 1}": L[:, i] for i in range(L.shape[1])}
    return write_path_csv(sol.phi, file, extra)


def sp_solution_to_json(sol: SPSolution) -> dict:
    d = path_to_json(sol.phi)
    d["local_times"] = sol.local_time_matrix.tolist()
    return d


# ---------------------------------------------------------------------------
# ensembles


def write_ensemble(ens: Ensemble, out_dir, name: str = "paths", layout: str = "wide") -> list[FsPath]:
    """``wide``: one file, columns time, p<m>_x<i>. ``shards``: one path CSV per member."""
    out_dir = FsPath(out_dir)
    if layout == "wide":
        header = ["time"] + [f"p{m}_x{i + 1}" for m in range(ens.size) for i in range(ens.dim)]
        flat = np.moveaxis(ens.values, 0, 1).reshape(len(ens.grid.points), -1)
        body = np.hstack([ens.grid.points[:, None], flat])
        return [_write_rows(out_dir / f"{name}.csv", header, _float_rows(body))]
    if layout == "shards":
        width = len(str(max(ens.size - 1, 0)))
        return [write_path_csv(ens.member(m), out_dir / name / f"member_{m:0{width}d}.csv")
                for m in range(ens.size)]
    raise ValueError(f"unknown layout {layout!r}; use 'wide' or 'shards'")


def write_matrix_csv(matrix: np.ndarray, file, header: Sequence[str]) -> FsPath:
    return _write_rows(file, header, _float_rows(np.atleast_2d(matrix)))


def write_cost_matrix(cost: np.ndarray, file) -> FsPath:
    header = ["row"] + [f"c{j}" for j in range(cost.shape[1])]
    rows = ([i] + [fmt(v) for v in row] for i, row in enumerate(cost))
    return _write_rows(file, header, rows)


def write_tail_csv(report, file) -> FsPath:
    return _write_rows(file, ["r", "tail", "bound"], report.csv_rows())


# ---------------------------------------------------------------------------
# manifests


def versions() -> dict:
    import scipy

    return {
        "conc_lab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(out_dir, command: str, config: dict, seed: Optional[int], files: Sequence) -> FsPath:
    """Everything needed to rerun: resolved config, its hash, the seed, versions, and output digests."""
    out_dir = FsPath(out_dir)
    entries = []
    for f in files:
        f = FsPath(f)
        entries.append({"file": f.relative_to(out_dir).as_posix(), "sha256": sha256_file(f)})
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "master_seed": seed,
        "versions": versions(),
        "outputs": sorted(entries, key=lambda e: e["file"]),
    }
    return write_json(manifest, out_dir / "manifest.json")
