"""Symmetric weighted neighborhood graphs on point clouds."""

from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from .errors import DuplicatePoints, GraphDisconnected
from .geometry import PointCloud

BRUTE_FORCE_MAX = 4096
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class Kernel:
    kernel_id: str
    func: Callable[[np.ndarray], np.ndarray]
    compact: bool


def _exp5_compact(u: np.ndarray) -> np.ndarray:
    return np.where(u < 1.0, np.exp(-5.0 * u * u), 0.0)


def _exp5(u: np.ndarray) -> np.ndarray:
    return np.exp(-5.0 * u * u)


KERNELS = {
    "exp5_compact": Kernel("exp5_compact", _exp5_compact, True),
    "exp5": Kernel("exp5", _exp5, False),
}


def get_kernel(kernel: str | Kernel) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected weighted graph stored as an edge list with i < j.

    Edges are sorted lexicographically by (i, j). The symmetric adjacency
    structure is available through :meth:`weight_matrix`.
    """

    m: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    lengths: np.ndarray
    epsilon: float
    kernel_id: str

    @property
    def n_edges(self) -> int:
        return self.rows.size

    def weight_matrix(self) -> sp.csr_matrix:
        w = sp.coo_matrix(
            (np.concatenate([self.weights, self.weights]),
             (np.concatenate([self.rows, self.cols]), np.concatenate([self.cols, self.rows]))),
            shape=(self.m, self.m),
        ).tocsr()
        w.sort_indices()
        return w

    def length_matrix(self) -> sp.csr_matrix:
        return sp.coo_matrix(
            (np.concatenate([self.lengths, self.lengths]),
             (np.concatenate([self.rows, self.cols]), np.concatenate([self.cols, self.rows]))),
            shape=(self.m, self.m),
        ).tocsr()

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m)
        np.add.at(deg, self.rows, self.weights)
        np.add.at(deg, self.cols, self.weights)
        return deg

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor indices of vertex i and the matching weights."""
        w = self.weight_matrix()
        lo, hi = w.indptr[i], w.indptr[i + 1]
        return w.indices[lo:hi].copy(), w.data[lo:hi].copy()

    def geodesic_distances(self, sources: np.ndarray | None = None) -> np.ndarray:
        """Shortest-path distances with edge length ``||x_i - x_j||``."""
        return shortest_path(self.length_matrix(), method="D", directed=False, indices=sources)


def pair_distances(points: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Euclidean distances for index pairs; the single distance formula used
    by every neighbor-search route so their outputs agree bit for bit."""
    out = np.empty(i.size)
    step = max(1, 4_000_000 // max(1, points.shape[1]))
    for s in range(0, i.size, step):
        diff = points[i[s : s + step]] - points[j[s : s + step]]
        out[s : s + step] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return out


def _candidates_brute(points: np.ndarray, radius: float | None) -> tuple[np.ndarray, np.ndarray]:
    m = points.shape[0]
    rows, cols = [], []
    for i in range(m - 1):
        j = np.arange(i + 1, m)
        if radius is not None:
            d = pair_distances(points, np.full(j.size, i), j)
            j = j[d < radius]
        rows.append(np.full(j.size, i, dtype=np.int64))
        cols.append(j.astype(np.int64))
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def _candidates_tree(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    # enlarge the search radius slightly; the exact test is reapplied below
    pairs = cKDTree(points).query_pairs(radius * (1.0 + 1e-9) + 1e-300, output_type="ndarray")
    if pairs.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    pairs = np.sort(pairs.astype(np.int64), axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order, 0], pairs[order, 1]


def check_duplicates(points: np.ndarray, tol: float = DUPLICATE_TOL) -> None:
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if pairs.size:
        raise DuplicatePoints("duplicate points in cloud", pairs=pairs[:10].tolist())


def build_graph(
    cloud: PointCloud,
    epsilon: float,
    kernel: str | Kernel = "exp5_compact",
    complete: bool = False,
    method: str = "auto",
    require_connected: bool = True,
) -> NeighborGraph:
    """Kernel graph with weights ``w_ij = K(||x_i - x_j|| / sqrt(epsilon))``.

    With a compactly supported kernel the edge (i, j) is present iff
    ``||x_i - x_j|| < sqrt(epsilon)``. ``complete=True`` connects every pair
    and requires a kernel without compact support (``"exp5"``); this is the
    complete-graph setup and is only practical for small m.

    ``method`` selects the neighbor search: ``"brute"``, ``"tree"`` or
    ``"auto"`` (brute force up to 4096 points). Both produce identical edges.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    kern = get_kernel(kernel)
    if complete == kern.compact:
        raise ValueError(
            "complete graphs need a non-compact kernel and sparse graphs a compact one"
        )
    points = cloud.points
    check_duplicates(points)
    radius = math.sqrt(epsilon)

    if complete:
        rows, cols = _candidates_brute(points, None)
    else:
        if method == "auto":
            method = "brute" if cloud.m <= BRUTE_FORCE_MAX else "tree"
        if method == "brute":
            rows, cols = _candidates_brute(points, radius)
        elif method == "tree":
            rows, cols = _candidates_tree(points, radius)
        else:
            raise ValueError(f"unknown neighbor search {method!r}")

    lengths = pair_distances(points, rows, cols)
    if not complete:
        keep = lengths < radius
        rows, cols, lengths = rows[keep], cols[keep], lengths[keep]
    weights = kern.func(lengths / radius)
    keep = weights > 0
    graph = NeighborGraph(
        m=cloud.m,
        rows=rows[keep],
        cols=cols[keep],
        weights=weights[keep],
        lengths=lengths[keep],
        epsilon=float(epsilon),
        kernel_id=kern.kernel_id,
    )
    if require_connected:
        ensure_connected(graph)
    return graph


def ensure_connected(graph: NeighborGraph) -> None:
    n_comp, labels = connected_components(graph.weight_matrix(), directed=False)
    if n_comp > 1:
        raise GraphDisconnected(
            f"graph has {n_comp} connected components",
            n_components=int(n_comp),
            labels=labels.tolist(),
        )


def suggest_epsilon(cloud: PointCloud, scale: float = 1.0) -> float:
    """Bandwidth heuristic: squared median distance to the ceil(log m)-th neighbor.

    ``scale`` multiplies the resulting epsilon.
    """
    k = max(1, math.ceil(math.log(cloud.m)))
    k = min(k, cloud.m - 1)
    dist, _ = cKDTree(cloud.points).query(cloud.points, k=k + 1)
    return scale * float(np.median(dist[:, k])) ** 2


def density_normalize(graph: NeighborGraph, alpha: float = 1.0) -> NeighborGraph:
    """Reweight edges by ``w_ij / (q_i q_j)^alpha`` with q the vertex degree.

    Removes the leading-order effect of a non-uniform sampling density on
    the limiting operator. ``alpha=0`` returns the graph unchanged.
    """
    if alpha == 0:
        return graph
    q = graph.degrees()
    return dataclasses.replace(graph, weights=graph.weights / (q[graph.rows] * q[graph.cols]) ** alpha)
