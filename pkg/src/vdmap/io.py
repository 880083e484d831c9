"""On-disk formats: point-cloud CSV, edge-list CSV, frame and bundle binaries."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .frames import FrameField
from .gcl import SpectralBundle
from .geometry import PointCloud
from .embedding import EmbeddingResult
from .graph import NeighborGraph, pair_distances

LABEL_PREFIX = "label_"


def fmt(x: float) -> str:
    """Shortest round-tripping decimal for a double (at most 17 significant digits)."""
    return repr(float(x))


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@contextmanager
def atomic_path(path: str | os.PathLike) -> Iterator[Path]:
    """Yield ``path.partial``; rename it onto ``path`` only if the block succeeds."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    yield tmp
    os.replace(tmp, path)


def dump_json(obj: Any, path: str | os.PathLike) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _label_columns(cloud: PointCloud) -> tuple[list[str], list[np.ndarray]]:
    names, cols = [], []
    for name in sorted(cloud.labels):
        arr = np.asarray(cloud.labels[name], dtype=float).reshape(cloud.m, -1)
        if name == "rotation":
            sub = [f"R{r + 1}{c + 1}" for r in range(3) for c in range(3)]
        elif arr.shape[1] == 1:
            sub = [name]
        else:
            sub = [f"{name}{k}" for k in range(arr.shape[1])]
        names += [LABEL_PREFIX + s for s in sub]
        cols.append(arr)
    return names, cols


def write_cloud_csv(cloud: PointCloud, path: str | os.PathLike) -> None:
    """One row per point: x0..x{p-1}, then ``label_*`` columns. Header row included."""
    names, cols = _label_columns(cloud)
    header = [f"x{k}" for k in range(cloud.p)] + names
    table = np.hstack([cloud.points] + cols) if cols else cloud.points
    with atomic_path(path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([fmt(v) for v in row])


def read_cloud_csv(path: str | os.PathLike) -> PointCloud:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    coord = [k for k, h in enumerate(header) if not h.startswith(LABEL_PREFIX)]
    labels: dict[str, np.ndarray] = {}
    lab = {h[len(LABEL_PREFIX):]: k for k, h in enumerate(header) if h.startswith(LABEL_PREFIX)}
    rot_keys = [f"R{r + 1}{c + 1}" for r in range(3) for c in range(3)]
    if all(k in lab for k in rot_keys):
        labels["rotation"] = data[:, [lab.pop(k) for k in rot_keys]].reshape(-1, 3, 3)
    for name, k in lab.items():
        labels[name] = data[:, k]
    dim = 2 if "rotation" in labels else (1 if "theta" in labels else None)
    return PointCloud(data[:, coord], intrinsic_dim_hint=dim, labels=labels)


def write_edges_csv(graph: NeighborGraph, path: str | os.PathLike) -> None:
    """Edge list ``i,j,w`` with i < j and round-tripping decimal weights."""
    with atomic_path(path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "w"])
        for i, j, wt in zip(graph.rows, graph.cols, graph.weights):
            w.writerow([int(i), int(j), fmt(wt)])


def read_edges_csv(path: str | os.PathLike, m: int, cloud: PointCloud,
                   epsilon: float, kernel_id: str) -> NeighborGraph:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    rows = arr[:, 0].astype(np.int64)
    cols = arr[:, 1].astype(np.int64)
    lengths = pair_distances(cloud.points, rows, cols)
    return NeighborGraph(m, rows, cols, arr[:, 2].copy(), lengths, epsilon, kernel_id)


def write_frames(frames: FrameField, directory: str | os.PathLike) -> None:
    """``frames.f64le`` (m*p*d little-endian doubles, each B_i row-major) plus ``frames.json``."""
    directory = Path(directory)
    with atomic_path(directory / "frames.f64le") as tmp:
        tmp.write_bytes(np.ascontiguousarray(frames.bases, dtype="<f8").tobytes())
    dump_json({"m": frames.m, "p": frames.p, "d": frames.d}, directory / "frames.json")


def read_frames(directory: str | os.PathLike) -> FrameField:
    directory = Path(directory)
    meta = json.loads((directory / "frames.json").read_text())
    bases = np.fromfile(directory / "frames.f64le", dtype="<f8").reshape(meta["m"], meta["p"], meta["d"])
    return FrameField(meta["d"], bases.astype(float), np.zeros((meta["m"], meta["d"] + 1)))


def write_bundle(bundle: SpectralBundle, directory: str | os.PathLike, extra: dict | None = None) -> None:
    """``meta.json`` plus ``fields.f64le`` (K*m*d doubles, eigenpair-major then point-major)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with atomic_path(directory / "fields.f64le") as tmp:
        tmp.write_bytes(np.ascontiguousarray(bundle.fields, dtype="<f8").tobytes())
    meta = dict(bundle.meta)
    meta.update(extra or {})
    meta.update({
        "m": bundle.m,
        "d": bundle.d,
        "K": bundle.K,
        "eigenvalues": [float(v) for v in bundle.eigenvalues],
        "degrees": [float(v) for v in bundle.degrees],
        "gaps": list(bundle.gaps),
        "gap_tol": bundle.gap_tol,
    })
    dump_json(meta, directory / "meta.json")


def read_bundle(directory: str | os.PathLike) -> SpectralBundle:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    fields = np.fromfile(directory / "fields.f64le", dtype="<f8").reshape(meta["K"], meta["m"], meta["d"])
    return SpectralBundle(
        np.array(meta["eigenvalues"], dtype=float),
        fields.astype(float),
        np.array(meta["degrees"], dtype=float),
        tuple(meta["gaps"]),
        float(meta["gap_tol"]),
        meta,
    )


def write_embedding_csv(emb: EmbeddingResult, path: str | os.PathLike, wide: bool = False) -> None:
    """Long form ``i,pair_k,pair_l,value`` (0-based indices) or wide m x N^2 form."""
    with atomic_path(path) as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if wide:
            w.writerow([f"v_{k}_{l}" for k, l in emb.pair_index])
            for row in emb.coords:
                w.writerow([fmt(v) for v in row])
        else:
            w.writerow(["i", "pair_k", "pair_l", "value"])
            for i, row in enumerate(emb.coords):
                for (k, l), v in zip(emb.pair_index, row):
                    w.writerow([i, int(k), int(l), fmt(v)])
