"""Tabular and JSON emission of trajectories, plus run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import TimeGrid, Trajectory, reduced_of_full
from .operators import bloch_vector, min_eigenvalue

SIG_DIGITS = 12


def fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def _round(x: float) -> float | None:
    x = float(x)
    if math.isnan(x):
        return None
    return float(fmt(x))


class Table:
    """Column-oriented observables sampled on a time grid; column 0 is ``t``."""

    def __init__(self, t: np.ndarray):
        self.columns: dict[str, np.ndarray] = {"t": np.asarray(t, dtype=float)}

    def add(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.columns["t"].shape:
            raise ValueError(f"column {name!r} has {values.shape[0]} rows, expected {len(self)}")
        if name in self.columns:
            raise ValueError(f"duplicate column {name!r}")
        self.columns[name] = values

    def __len__(self) -> int:
        return len(self.columns["t"])


def _bloch_columns(table: Table, states: np.ndarray, prefix: str) -> None:
    vecs = np.array([bloch_vector(r).as_array() for r in states])
    for i, axis in enumerate("xyz"):
        table.add(f"{prefix}{axis}", vecs[:, i])


def observable_table(
    traj: Trajectory,
    outputs=("errors",),
    errors: dict[str, np.ndarray] | None = None,
) -> Table:
    """Requested observables of ``traj``.

    ``errors`` maps column names to precomputed error series; they are
    emitted when ``"errors"`` is requested. Bloch columns are per qubit for
    full and reduced trajectories and a single ``b_`` triple for blended ones.
    """
    table = Table(traj.times)
    if "errors" in outputs:
        for name, vals in (errors or {}).items():
            table.add(name, vals)
    if "bloch" in outputs:
        if traj.kind == "blended":
            _bloch_columns(table, traj.states, "b_")
        else:
            if traj.kind == "reduced":
                red = traj.states
            else:
                red = reduced_of_full(traj if traj.kind == "full" else _as_full(traj))
            for j in range(red.shape[1]):
                _bloch_columns(table, red[:, j], f"q{j + 1}_")
    rhos = _per_sample_states(traj)
    if "trace" in outputs:
        # reduced samples report the qubit whose trace strays furthest from 1
        table.add("trace", [max((np.trace(x).real for x in r), key=lambda v: abs(v - 1)) for r in rhos])
    if "min_eigenvalue" in outputs:
        table.add("min_eigenvalue", [min(min_eigenvalue(x) for x in r) for r in rhos])
    return table


def _as_full(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.grid, "full", traj.lifted)


def _per_sample_states(traj: Trajectory):
    """Per sample, the list of density matrices it contains."""
    if traj.kind == "reduced":
        return [list(s) for s in traj.states]
    rhos = traj.lifted if traj.kind == "coherent" else traj.states
    return [[r] for r in rhos]


# -- writers --------------------------------------------------------------


def _prepare(path) -> Path:
    path = Path(path)
    if path.exists() and path.is_dir():
        raise IsADirectoryError(f"output path {path} is a directory")
    if not path.parent.exists():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")
    return path


def write_table(table: Table, path, fmt_: str = "csv", metadata: dict | None = None) -> Path:
    if len(table) == 0:
        raise ValueError("refusing to emit an empty table")
    path = _prepare(path)
    names = list(table.columns)
    if fmt_ == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            cols = [table.columns[k] for k in names]
            for i in range(len(table)):
                w.writerow([fmt(c[i]) for c in cols])
    elif fmt_ == "json":
        doc = {
            "columns": names,
            "data": {k: [_round(x) for x in v] for k, v in table.columns.items()},
            "metadata": metadata or {},
        }
        _dump(doc, path)
    else:
        raise ValueError(f"unsupported format {fmt_!r}; use csv or json")
    return path


def _dump(doc, path: Path) -> None:
    try:
        with path.open("w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=False, allow_nan=False)
            fh.write("\n")
    except PermissionError as exc:
        raise PermissionError(f"cannot write {path}") from exc


def _complex_payload(a: np.ndarray) -> dict:
    a = np.asarray(a)
    return {
        "shape": list(a.shape),
        "re": [_round(x) for x in a.real.ravel()],
        "im": [_round(x) for x in a.imag.ravel()],
    }


def _complex_from(d: dict) -> np.ndarray:
    re = np.array(d["re"], dtype=float)
    im = np.array(d["im"], dtype=float)
    return (re + 1j * im).reshape(d["shape"])


def write_trajectory_json(traj: Trajectory, path, table: Table | None = None, metadata=None) -> Path:
    """Full-state JSON dump that :func:`read_trajectory_json` restores."""
    if traj.grid.samples == 0:
        raise ValueError("refusing to emit an empty trajectory")
    path = _prepare(path)
    doc = {
        "kind": traj.kind,
        "grid": {"t_start": traj.grid.t_start, "t_end": traj.grid.t_end, "samples": traj.grid.samples},
        "metadata": {**_jsonable(traj.metadata), **(metadata or {})},
        "states": _complex_payload(traj.states),
    }
    if traj.lifted is not None:
        doc["lifted"] = _complex_payload(traj.lifted)
    if table is not None:
        doc["columns"] = list(table.columns)
        doc["data"] = {k: [_round(x) for x in v] for k, v in table.columns.items()}
    _dump(doc, path)
    return path


def read_trajectory_json(path) -> Trajectory:
    doc = json.loads(Path(path).read_text())
    g = doc["grid"]
    grid = TimeGrid(g["t_end"], g["samples"], g["t_start"])
    lifted = _complex_from(doc["lifted"]) if "lifted" in doc else None
    return Trajectory(grid, doc["kind"], _complex_from(doc["states"]), lifted, doc.get("metadata", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _round(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [_round(obj.real), _round(obj.imag)]
    return obj


def write_json(doc: dict, path) -> Path:
    path = _prepare(path)
    _dump(_jsonable(doc), path)
    return path


def write_manifest(out_dir, *, command: str, scenario: str, spec_hash: str, flags: dict,
                   files: list, timings: dict, status: str) -> Path:
    """Run record; the only file allowed to carry wall-clock values."""
    doc = {
        "command": command,
        "scenario": scenario,
        "spec_hash": spec_hash,
        "flags": flags,
        "outputs": sorted(str(Path(f).name) for f in files),
        "status": status,
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    return write_json(doc, Path(out_dir) / "manifest.json")
