"""Local coordinate charts built from products of eigenvector fields.

A chart at a center point z uses n = d scalar functions
``x -> mu_l <u_{i_l}[x], u_{j_l}[x]>``. Pairs are drawn from a frequency band
and chosen greedily so that the matrix of their directional derivatives at z
is lower triangular with a dominant diagonal, which makes the map a local
diffeomorphism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .errors import ChartSearchFailed, RankDeficient, ZeroFieldOnBall
from .frames import FrameField
from .gcl import SpectralBundle
from .geometry import PointCloud
from .graph import NeighborGraph

ZERO_FIELD_TOL = 1e-14
DESIGN_COND_MAX = 1e8


@dataclass(frozen=True)
class BandFilter:
    """Eigen-indices with ``A' / t < lambda <= A / t``."""

    A: float
    A_prime: float
    t: float

    def __post_init__(self) -> None:
        if not self.A > self.A_prime > 0:
            raise ValueError("band constants need A > A' > 0")
        if not self.t > 0:
            raise ValueError("t must be positive")

    def low_set(self, eigenvalues: np.ndarray) -> np.ndarray:
        return np.flatnonzero(eigenvalues <= self.A / self.t)

    def high_set(self, eigenvalues: np.ndarray) -> np.ndarray:
        return np.flatnonzero(eigenvalues > self.A_prime / self.t)

    def band(self, eigenvalues: np.ndarray) -> np.ndarray:
        return np.intersect1d(self.low_set(eigenvalues), self.high_set(eigenvalues))


def graph_ball(graph: NeighborGraph, z: int, radius: float) -> np.ndarray:
    """Vertices within shortest-path distance ``radius`` of z (sorted)."""
    dist = dijkstra(graph.length_matrix(), directed=False, indices=z, limit=radius)
    return np.flatnonzero(dist <= radius)


def mu_weight(bundle: SpectralBundle, ball: np.ndarray, k: int, l: int) -> float:
    """Inverse root-mean-square normalization of a field pair over a ball.

    ``mu = mean(|u_k|^2)^(-1/2) * mean(|u_l|^2)^(-1/2)``, means weighted by degree.
    """
    ball = np.asarray(ball)
    if ball.size == 0:
        raise ValueError("ball must be nonempty")
    w = bundle.degrees[ball]
    sq = np.einsum("kid,kid->ki", bundle.fields[[k, l]][:, ball], bundle.fields[[k, l]][:, ball])
    means = sq @ w / w.sum()
    if np.any(means < ZERO_FIELD_TOL):
        raise ZeroFieldOnBall("eigenvector field vanishes on the ball", pair=[k, l], means=means.tolist())
    return float(1.0 / np.sqrt(means[0] * means[1]))


def tangent_gradient(
    cloud: PointCloud,
    graph: NeighborGraph,
    frames: FrameField,
    z: int,
    values: np.ndarray,
) -> np.ndarray:
    """Weighted least-squares gradient of a scalar field at z in frame coordinates.

    Fits ``f(x_j) ~ a + g . B_z^T (x_j - x_z)`` over z and its neighbors,
    weighting neighbors by w_zj and z itself by 1, and returns g.
    """
    w = graph.weight_matrix()
    lo, hi = w.indptr[z], w.indptr[z + 1]
    nbrs = w.indices[lo:hi]
    d = frames.d
    if nbrs.size < d + 1:
        raise RankDeficient(f"point {z} has {nbrs.size} neighbors, need {d + 1}", point=int(z))
    idx = np.concatenate([[z], nbrs])
    wts = np.concatenate([[1.0], w.data[lo:hi]])
    s = (cloud.points[idx] - cloud.points[z]) @ frames.bases[z]
    design = np.hstack([np.ones((idx.size, 1)), s]) * np.sqrt(wts)[:, None]
    rhs = np.asarray(values)[idx] * np.sqrt(wts)
    # center and scale columns before judging conditioning
    scale = np.linalg.norm(design, axis=0)
    if np.any(scale == 0):
        raise RankDeficient("neighbor design matrix has a zero column", point=int(z))
    cond = np.linalg.cond(design / scale)
    if not cond <= DESIGN_COND_MAX:
        raise RankDeficient("neighbor design matrix is ill-conditioned", point=int(z), condition=float(cond))
    coef = np.linalg.lstsq(design / scale, rhs, rcond=None)[0] / scale
    return coef[1:]


def pair_field(bundle: SpectralBundle, k: int, l: int) -> np.ndarray:
    return np.einsum("id,id->i", bundle.fields[k], bundle.fields[l])


def estimate_gradient(
    bundle: SpectralBundle,
    frames: FrameField,
    cloud: PointCloud,
    graph: NeighborGraph,
    z: int,
    k: int,
    l: int,
) -> np.ndarray:
    """Gradient at z of ``x -> <u_k[x], u_l[x]>`` in the coordinates of frame B_z."""
    return tangent_gradient(cloud, graph, frames, z, pair_field(bundle, k, l))


@dataclass
class ChartSelection:
    center: int
    radius: float
    ball: np.ndarray
    pairs: list[tuple[int, int]]
    directions: np.ndarray
    weights: np.ndarray
    gradient_matrix: np.ndarray
    eigenvalues: np.ndarray
    scores: list[float] = field(default_factory=list)

    def chart(self, bundle: SpectralBundle, idx: np.ndarray | None = None) -> np.ndarray:
        """Weighted chart coordinates at points ``idx`` (all points by default)."""
        cols = [mu * pair_field(bundle, k, l) for (k, l), mu in zip(self.pairs, self.weights)]
        out = np.stack(cols, axis=1)
        return out if idx is None else out[idx]


def _complement_probe(grads: list[np.ndarray], d: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the complement of ``grads`` and a probe direction in it.

    The probe is the normalized projection of the first frame axis that is
    not already in the span of the gradients.
    """
    if grads:
        g = np.stack(grads, axis=1)
        u, s, _ = np.linalg.svd(g, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
        comp = u[:, rank:]
    else:
        comp = np.eye(d)
    for axis in np.eye(d):
        proj = comp @ (comp.T @ axis)
        nrm = np.linalg.norm(proj)
        if nrm > 1e-8:
            return comp, proj / nrm
    raise ValueError("gradient span already covers the tangent space")


def select_chart(
    bundle: SpectralBundle,
    frames: FrameField,
    cloud: PointCloud,
    graph: NeighborGraph,
    z: int,
    band: BandFilter,
    ball_radius: float,
    c0: float,
    mu_cap: float = np.inf,
) -> ChartSelection:
    """Greedy construction of an n = d dimensional chart at z.

    For l = 1..n a probe direction v in the orthogonal complement of the
    previously chosen gradients is fixed (the first frame axis, i.e. the
    leading local principal direction, for l = 1). Admissible pairs (i, j)
    with both eigenvalues in the band satisfy ``mu_ij |grad_v <u_i, u_j>(z)| >= c0 / R``
    with R = ``ball_radius``; the one with the largest score wins, ties going
    to the lexicographically smallest pair. The recorded direction v_l is the
    normalized projection of the winner's gradient onto that complement, so
    the directions are orthonormal and the gradient matrix is lower
    triangular.

    Raises
    ------
    ChartSearchFailed
        When no pair reaches the threshold at some step.
    """
    d = frames.d
    if bundle.d != d:
        raise ValueError("chart dimension must equal the bundle block size")
    idx = band.band(bundle.eigenvalues)
    ball = graph_ball(graph, z, ball_radius)
    threshold = c0 / ball_radius

    cands = []
    for a, i in enumerate(idx):
        for j in idx[a:]:
            try:
                mu = mu_weight(bundle, ball, int(i), int(j))
            except ZeroFieldOnBall:
                continue
            if mu > mu_cap:
                continue
            grad = estimate_gradient(bundle, frames, cloud, graph, z, int(i), int(j))
            cands.append(((int(i), int(j)), mu, grad))
    if not cands:
        raise ChartSearchFailed("band admits no usable pairs", step=1, best_score=0.0)

    pairs, weights, grads, dirs, scores = [], [], [], [], []
    for step in range(d):
        comp, probe = _complement_probe(grads, d)
        sc = np.array([mu * abs(g @ probe) for _, mu, g in cands])
        best = int(np.argmax(sc))
        if not sc[best] >= threshold:
            raise ChartSearchFailed(
                f"no pair meets the gradient threshold at step {step + 1}",
                step=step + 1,
                best_score=float(sc[best]),
                threshold=float(threshold),
            )
        pair, mu, grad = cands[best]
        proj = comp @ (comp.T @ grad)
        pairs.append(pair)
        weights.append(mu)
        grads.append(grad)
        dirs.append(proj / np.linalg.norm(proj))
        scores.append(float(sc[best]))

    directions = np.stack(dirs)
    gmat = np.array(weights)[:, None] * (np.stack(grads) @ directions.T)
    eigs = np.array([[bundle.eigenvalues[i], bundle.eigenvalues[j]] for i, j in pairs])
    return ChartSelection(int(z), float(ball_radius), ball, pairs, directions,
                          np.array(weights), gmat, eigs, scores)


def measure_distortion(
    sel: ChartSelection,
    bundle: SpectralBundle,
    graph: NeighborGraph,
    ball: np.ndarray | None = None,
) -> tuple[float, float]:
    """Empirical bi-Lipschitz constants of the chart over a ball.

    Returns the min and max over distinct ball points of
    ``|Phi(x) - Phi(y)| / dist(x, y)`` with graph shortest-path distance.
    """
    ball = sel.ball if ball is None else np.asarray(ball)
    if ball.size < 2:
        raise ValueError("ball needs at least two points")
    dist = dijkstra(graph.length_matrix(), directed=False, indices=ball)[:, ball]
    phi = sel.chart(bundle, ball)
    diff = np.linalg.norm(phi[:, None, :] - phi[None, :, :], axis=-1)
    iu = np.triu_indices(ball.size, k=1)
    ratio = diff[iu] / dist[iu]
    return float(ratio.min()), float(ratio.max())


def chart_report(sel: ChartSelection, band: BandFilter, c0: float,
                 distortion: tuple[float, float]) -> dict:
    return {
        "center": sel.center,
        "radius": sel.radius,
        "pairs": [list(p) for p in sel.pairs],
        "eigenvalues": sel.eigenvalues.tolist(),
        "mu": sel.weights.tolist(),
        "directions": sel.directions.tolist(),
        "gradient_matrix": sel.gradient_matrix.tolist(),
        "scores": sel.scores,
        "c_lo": distortion[0],
        "c_hi": distortion[1],
        "band": {"A": band.A, "A_prime": band.A_prime, "t": band.t},
        "c0": c0,
    }
