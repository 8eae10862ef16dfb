"""File formats: graph and label CSVs, trajectory CSV with a JSON sidecar, results JSON and DP dumps."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .model import Graph, ModelError, Multigraph, is_simple

__all__ = [
    "write_graph_csv",
    "read_graph_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_json",
    "save_dp",
    "load_dp",
    "cached_dp",
    "DPFormatError",
    "DP_MAGIC",
    "DP_VERSION",
]

DP_MAGIC = b"SBMDP\x00"
DP_VERSION = 1
CACHE_ENV = "SBMATCH_CACHE"


def write_graph_csv(g: Multigraph, path, labels_path=None) -> tuple[Path, Path]:
    """Write ``u,v`` edge rows and a ``vertex,class`` label file.

    The label file defaults to ``<stem>.labels.csv`` next to ``path``.
    """
    path = Path(path)
    labels_path = Path(labels_path) if labels_path else path.with_suffix(".labels.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("u,v\n")
        np.savetxt(fh, g.edges, fmt="%d", delimiter=",")
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("vertex,class\n")
        np.savetxt(fh, np.column_stack([np.arange(g.n), g.labels]), fmt="%d", delimiter=",")
    return path, labels_path


def _read_int_csv(path, header: list[str]) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if [h.strip() for h in first.split(",")] != header:
            raise ModelError(f"{path}: expected header {','.join(header)}, got {first!r}")
        body = fh.read()
    if not body.strip():
        return np.empty((0, len(header)), np.int64)
    return np.loadtxt(body.splitlines(), dtype=np.int64, delimiter=",", ndmin=2)


def read_graph_csv(path, labels_path=None, q: int = 0) -> Multigraph:
    """Read a graph written by :func:`write_graph_csv`.

    Returns a :class:`Graph` when the edges are simple, a :class:`Multigraph`
    otherwise.
    """
    path = Path(path)
    labels_path = Path(labels_path) if labels_path else path.with_suffix(".labels.csv")
    edges = _read_int_csv(path, ["u", "v"])
    lab = _read_int_csv(labels_path, ["vertex", "class"])
    n = lab.shape[0]
    labels = np.empty(n, np.int64)
    if n and not np.array_equal(np.sort(lab[:, 0]), np.arange(n)):
        raise ModelError(f"{labels_path}: vertex ids must be 0..n-1")
    labels[lab[:, 0]] = lab[:, 1]
    mg = Multigraph(n, labels, edges, q)
    return Graph(n, labels, edges, mg.q) if is_simple(mg) else mg


def write_trajectory_csv(traj, path) -> tuple[Path, Path]:
    """Write a fluid trajectory as CSV plus ``<path>.json`` naming the columns."""
    path = Path(path)
    names = traj.column_names()
    data = np.column_stack([traj.t, traj.states])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    q = traj.q
    side = {
        "columns": names,
        "q": q,
        "layout": {"t": 0, "Ebar": [1, 1 + q * q], "Tbar": [1 + q * q, 1 + q * q + q],
                   "Fbar": [1 + q * q + q, 1 + q * q + 2 * q]},
        "tau": traj.tau,
        "reason": traj.reason,
        "matched_pairs": traj.matched_pairs,
        "matched_vertex_fraction": traj.matched_vertex_fraction,
        "isolated_fraction": traj.isolated_fraction,
    }
    side_path = path.with_suffix(path.suffix + ".json")
    write_json(side, side_path)
    return path, side_path


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray, dict]:
    """Return ``(column names, data, sidecar)``."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        names = next(csv.reader(fh))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    if side["columns"] != names:
        raise ValueError(f"{path}: header disagrees with its sidecar")
    return names, data, side


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def write_json(obj, path=None) -> str:
    """Stable JSON (sorted keys) to ``path`` or ``"-"`` for stdout; returns the text."""
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if path is not None and str(path) != "-":
        Path(path).write_text(text, encoding="utf-8")
    return text


class DPFormatError(ValueError):
    pass


def _dp_header(rates, right_sizes, n) -> dict:
    return {"n": int(n), "right_sizes": [int(s) for s in right_sizes],
            "rates": np.asarray(rates, float).tolist(), "dtype": "<f8"}


def save_dp(table, path) -> Path:
    """Binary dump: magic, ``uint16`` version, ``uint32`` header length, JSON header, values."""
    path = Path(path)
    header = _dp_header(table.rates, table.right_sizes, table.n)
    header["shape"] = list(table.values.shape)
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(DP_MAGIC)
        fh.write(struct.pack("<HI", DP_VERSION, len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(table.values, dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def load_dp(path):
    from .online import DPTable

    with open(path, "rb") as fh:
        if fh.read(len(DP_MAGIC)) != DP_MAGIC:
            raise DPFormatError(f"{path}: not a DP table")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != DP_VERSION:
            raise DPFormatError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        shape = tuple(header["shape"])
        raw = fh.read()
    values = np.frombuffer(raw, dtype=header["dtype"])
    if values.size != int(np.prod(shape)):
        raise DPFormatError(f"{path}: truncated table")
    return DPTable(np.array(header["rates"], float), np.array(header["right_sizes"], np.int64),
                   int(header["n"]), values.reshape(shape).astype(float))


def cached_dp(inst, cache_dir=None):
    """Build the DP table for ``inst``, reusing a dump under ``$SBMATCH_CACHE`` when present."""
    from .online import build_dp

    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return build_dp(inst)
    key = hashlib.sha256(json.dumps(_dp_header(inst.rates, inst.right_sizes, inst.n),
                                    sort_keys=True).encode()).hexdigest()[:24]
    path = Path(cache_dir) / f"dp-{key}.bin"
    if path.exists():
        try:
            table = load_dp(path)
            if table.matches(inst):
                return table
        except DPFormatError:
            pass
    table = build_dp(inst)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dp(table, path)
    return table
