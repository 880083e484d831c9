"""Tangent frames by local PCA and edge connections by orthogonal Procrustes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NearSingularAlignment, RankDeficient
from .geometry import PointCloud
from .graph import NeighborGraph

SINGULAR_TOL = 1e-8
TIE_TOL = 1e-12


@dataclass(frozen=True)
class FrameField:
    """Per-point orthonormal bases ``bases[i]`` of shape (p, d).

    ``pca_spectrum[i]`` holds the leading d+1 eigenvalues of the weighted
    local covariance at point i (zero-padded when fewer neighbors exist).
    """

    d: int
    bases: np.ndarray
    pca_spectrum: np.ndarray

    @property
    def m(self) -> int:
        return self.bases.shape[0]

    @property
    def p(self) -> int:
        return self.bases.shape[1]

    def regauge(self, q: np.ndarray) -> "FrameField":
        """Frames ``B_i Q_i`` for per-point orthogonal ``q[i]`` of shape (d, d)."""
        return FrameField(self.d, self.bases @ q, self.pca_spectrum)


def fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(basis), axis=-2)
    pivot = np.take_along_axis(basis, idx[..., None, :], axis=-2)
    return basis * np.where(pivot < 0, -1.0, 1.0)


def local_pca(center: np.ndarray, nbrs: np.ndarray, weights: np.ndarray, d: int):
    """Top-d principal directions of the weighted covariance around ``center``.

    Returns ``(basis, spectrum)`` with basis (p, d) and the first d+1
    covariance eigenvalues in descending order.
    """
    diff = (nbrs - center) * np.sqrt(weights / weights.sum())[:, None]
    _, s, vt = np.linalg.svd(diff, full_matrices=False)
    ev = np.zeros(d + 1)
    k = min(d + 1, s.size)
    ev[:k] = s[:k] ** 2
    if ev[d - 1] - ev[d] <= TIE_TOL * max(ev[0], np.finfo(float).tiny):
        raise RankDeficient(
            "tangent space is ambiguous: d-th and (d+1)-th covariance eigenvalues tie",
            eigenvalues=ev.tolist(),
        )
    return fix_signs(vt[:d].T), ev


def estimate_frames(cloud: PointCloud, graph: NeighborGraph, d: int) -> FrameField:
    """Estimate a d-dimensional tangent frame at every point by weighted local PCA
    over the graph neighbors, using the graph's kernel weights."""
    if not 1 <= d <= cloud.p:
        raise ValueError(f"need 1 <= d <= p, got d={d}, p={cloud.p}")
    w = graph.weight_matrix()
    bases = np.empty((cloud.m, cloud.p, d))
    spectrum = np.empty((cloud.m, d + 1))
    for i in range(cloud.m):
        lo, hi = w.indptr[i], w.indptr[i + 1]
        if hi - lo < d:
            raise RankDeficient(f"point {i} has {hi - lo} neighbors, need at least {d}", point=i)
        try:
            bases[i], spectrum[i] = local_pca(
                cloud.points[i], cloud.points[w.indices[lo:hi]], w.data[lo:hi], d
            )
        except RankDeficient as exc:
            exc.details["point"] = i
            raise
    return FrameField(d, bases, spectrum)


def procrustes(m: np.ndarray, special: bool = False) -> np.ndarray:
    """Nearest orthogonal matrix to each ``m[..., d, d]`` in Frobenius norm.

    With ``special=True`` the result is restricted to SO(d) by flipping the
    singular vector paired with the smallest singular value when needed.
    """
    u, s, vt = np.linalg.svd(m)
    smin = s[..., -1]
    if np.any(smin < SINGULAR_TOL):
        bad = np.flatnonzero(np.atleast_1d(smin) < SINGULAR_TOL)
        raise NearSingularAlignment(
            "frames are nearly orthogonal; alignment is meaningless",
            smallest_singular_value=float(np.min(smin)),
            edges=bad[:10].tolist(),
        )
    o = u @ vt
    if special:
        flip = np.linalg.det(o) < 0
        if np.any(flip):
            u = u.copy()
            u[..., :, -1] *= np.where(flip, -1.0, 1.0)[..., None]
            o = u @ vt
    return o


def connect(b_i: np.ndarray, b_j: np.ndarray, special: bool = False) -> np.ndarray:
    """Approximate parallel transport from x_j to x_i: the orthogonal
    Procrustes solution for ``B_i^T B_j``."""
    return procrustes(b_i.T @ b_j, special=special)


@dataclass(frozen=True)
class ConnectionGraph:
    """A neighbor graph with an orthogonal matrix per edge.

    ``connections[e]`` is ``O_ij`` for the e-th edge (i < j) of ``graph``;
    ``O_ji`` is its transpose.
    """

    graph: NeighborGraph
    connections: np.ndarray

    @property
    def d(self) -> int:
        return self.connections.shape[-1]

    def edge_index(self, i: int, j: int) -> int:
        a, b = (i, j) if i < j else (j, i)
        lo = np.searchsorted(self.graph.rows, a, side="left")
        hi = np.searchsorted(self.graph.rows, a, side="right")
        k = lo + np.searchsorted(self.graph.cols[lo:hi], b)
        if k >= hi or self.graph.cols[k] != b:
            raise KeyError(f"no edge ({i}, {j})")
        return int(k)

    def transport(self, i: int, j: int) -> np.ndarray:
        o = self.connections[self.edge_index(i, j)]
        return o if i < j else o.T

    @classmethod
    def trivial(cls, graph: NeighborGraph, d: int) -> "ConnectionGraph":
        return cls(graph, np.broadcast_to(np.eye(d), (graph.n_edges, d, d)).copy())


def build_connection(
    graph: NeighborGraph, frames: FrameField, special: bool = False
) -> ConnectionGraph:
    b = frames.bases
    m_ij = np.einsum("epa,epb->eab", b[graph.rows], b[graph.cols])
    return ConnectionGraph(graph, procrustes(m_ij, special=special))
