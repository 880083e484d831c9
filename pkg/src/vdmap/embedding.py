"""Vector diffusion maps, their truncations, and the scalar diffusion-map baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericalInconsistency
from .frames import ConnectionGraph
from .gcl import SpectralBundle, assemble, extend_to_gap, spectrum
from .graph import NeighborGraph

NEGATIVE_RADICAND_TOL = 1e-12


def point_grams(bundle: SpectralBundle, n: int, idx: np.ndarray | None = None) -> np.ndarray:
    """Gram matrices ``G[i, k, l] = <u_k[i], u_l[i]>`` over the first n fields."""
    f = bundle.fields[:n] if idx is None else bundle.fields[:n, idx]
    return np.einsum("kid,lid->ikl", f, f)


def heat_weights(eigenvalues: np.ndarray, t: float) -> np.ndarray:
    if not t > 0:
        raise ValueError("diffusion time t must be positive")
    return np.exp(-0.5 * eigenvalues * t)


@dataclass(frozen=True)
class EmbeddingResult:
    """Truncated VDM coordinates.

    ``coords[i, a]`` with ``pair_index[a] = (k, l)`` (0-based, k outer) equals
    ``exp(-(lambda_k + lambda_l) t / 2) <u_k[i], u_l[i]>``.
    """

    t: float
    N: int
    coords: np.ndarray
    pair_index: np.ndarray


def vdm_embed(bundle: SpectralBundle, t: float, N: int) -> EmbeddingResult:
    n = extend_to_gap(bundle, N)
    h = heat_weights(bundle.eigenvalues[:n], t)
    g = point_grams(bundle, n) * h[None, :, None] * h[None, None, :]
    k, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return EmbeddingResult(float(t), n, g.reshape(bundle.m, n * n),
                           np.stack([k.ravel(), l.ravel()], axis=1))


def hs_kernel(bundle: SpectralBundle, t: float, N: int, i: int, j: int) -> float:
    """Truncated squared Hilbert-Schmidt norm of the heat kernel between points i and j."""
    n = extend_to_gap(bundle, N)
    h = heat_weights(bundle.eigenvalues[:n], t)
    hh = np.outer(h, h) ** 2
    g = point_grams(bundle, n, np.array([i, j]))
    return float(np.sum(hh * g[0] * g[1]))


def hs_kernel_pairs(bundle: SpectralBundle, t: float, N: int, pairs: np.ndarray,
                    chunk: int = 200_000) -> np.ndarray:
    """Vectorized :func:`hs_kernel` over an (n_pairs, 2) index array."""
    emb = vdm_embed(bundle, t, N)
    pairs = np.asarray(pairs)
    out = np.empty(len(pairs))
    for s in range(0, len(pairs), chunk):
        p = pairs[s : s + chunk]
        out[s : s + chunk] = np.einsum("ia,ia->i", emb.coords[p[:, 0]], emb.coords[p[:, 1]])
    return out


def hs_diagonal(bundle: SpectralBundle, t: float, N: int) -> np.ndarray:
    emb = vdm_embed(bundle, t, N)
    return np.einsum("ia,ia->i", emb.coords, emb.coords)


def _distance_from_kernel(kii: float, kjj: float, kij: float) -> float:
    rad = kii + kjj - 2.0 * kij
    if rad < 0:
        scale = max(abs(kii), abs(kjj), np.finfo(float).tiny)
        if rad < -NEGATIVE_RADICAND_TOL * scale:
            raise NumericalInconsistency("negative squared VDM distance", radicand=rad)
        return 0.0
    return float(np.sqrt(rad))


def vdm_distance(bundle: SpectralBundle, t: float, N: int, i: int, j: int) -> float:
    """Vector diffusion distance, i.e. the Euclidean distance between tVDM rows.

    Small negative radicands (relative size below 1e-12) are clamped to zero.
    """
    n = extend_to_gap(bundle, N)
    h = heat_weights(bundle.eigenvalues[:n], t)
    hh = np.outer(h, h) ** 2
    # fixed evaluation order keeps d(i, j) == d(j, i) bitwise
    g = point_grams(bundle, n, np.array(sorted((i, j))))
    return _distance_from_kernel(
        float(np.sum(hh * g[0] ** 2)), float(np.sum(hh * g[1] ** 2)), float(np.sum(hh * g[0] * g[1]))
    )


def remainder_by_point(bundle: SpectralBundle, t: float, N: int, chunk: int = 512) -> np.ndarray:
    """Per-point tail ``sum over (k, l) with max(k, l) > N`` of the diagonal terms.

    Only the pairs stored in the bundle contribute, so the result is a lower
    bound on the full tail.
    """
    n = extend_to_gap(bundle, N)
    hh = np.outer(*(2 * [heat_weights(bundle.eigenvalues, t)])) ** 2
    mask = np.ones_like(hh, dtype=bool)
    mask[:n, :n] = False
    out = np.empty(bundle.m)
    for s in range(0, bundle.m, chunk):
        idx = np.arange(s, min(bundle.m, s + chunk))
        g = point_grams(bundle, bundle.K, idx)
        out[idx] = np.einsum("kl,ikl->i", hh * mask, g * g)
    return out


def remainder(bundle: SpectralBundle, t: float, N: int) -> float:
    return float(remainder_by_point(bundle, t, N).max())


@dataclass(frozen=True)
class CertificateReport:
    t: float
    N: int
    c1: float
    max_far: float
    G: float
    R_N: float
    margin: float
    passed: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def certify_embedding(
    bundle: SpectralBundle,
    t: float,
    N: int,
    far_pairs: np.ndarray,
    margin: float = 0.1,
) -> CertificateReport:
    """Check that the tVDM separates every far pair.

    With ``c1 = min_i k(i, i)`` and ``G = c1 - max_far k(i, j)`` (k the
    truncated kernel), the certificate passes when
    ``G > 2 R_N + margin * c1``: the separation survives the tail of the
    expansion on both points of a pair.
    """
    far_pairs = np.asarray(far_pairs, dtype=np.int64).reshape(-1, 2)
    if far_pairs.size == 0:
        raise ValueError("far_pairs must be nonempty")
    if np.any(far_pairs[:, 0] == far_pairs[:, 1]):
        raise ValueError("far pairs must join distinct points")
    n = extend_to_gap(bundle, N)
    if bundle.K <= n:
        raise ValueError(f"need more than N={n} eigenpairs to bound the remainder, have {bundle.K}")
    c1 = float(hs_diagonal(bundle, t, n).min())
    max_far = float(hs_kernel_pairs(bundle, t, n, far_pairs).max())
    g = c1 - max_far
    r = remainder(bundle, t, n)
    return CertificateReport(float(t), n, c1, max_far, g, r, float(margin), bool(g > 2.0 * r + margin * c1))


def far_pairs_by_graph(graph: NeighborGraph, fraction: float = 0.25) -> np.ndarray:
    """Pairs i < j whose shortest-path distance is at least ``fraction`` of the graph diameter."""
    dist = graph.geodesic_distances()
    diam = dist[np.isfinite(dist)].max()
    i, j = np.nonzero(np.triu(dist >= fraction * diam, k=1))
    return np.stack([i, j], axis=1)


@dataclass(frozen=True)
class DiffusionMap:
    """Scalar random-walk Laplacian eigenpairs (D-orthonormal functions)."""

    eigenvalues: np.ndarray
    functions: np.ndarray
    t: float
    gaps: tuple[int, ...]

    @property
    def coords(self) -> np.ndarray:
        return (self.functions * np.exp(-self.eigenvalues * self.t)[:, None]).T

    def kernel(self, N: int, i, j) -> np.ndarray:
        w = np.exp(-self.eigenvalues[:N] * self.t)
        return np.einsum("k,k...,k...->...", w, self.functions[:N, i], self.functions[:N, j])

    def hs_distance_sq(self, N: int, i: int, j: int) -> float:
        """Scalar analog of the squared VDM distance: ``k(i,i)^2 + k(j,j)^2 - 2 k(i,j)^2``."""
        return float(self.kernel(N, i, i) ** 2 + self.kernel(N, j, j) ** 2 - 2.0 * self.kernel(N, i, j) ** 2)


def dm_baseline(graph: NeighborGraph, K: int, t: float | None = None, **solver) -> DiffusionMap:
    """Diffusion map of the scalar random-walk Laplacian on the same graph.

    ``t=None`` selects the default time ``1 / lambda_2``.
    """
    bundle = spectrum(assemble(ConnectionGraph.trivial(graph, 1)), K, **solver)
    if t is None:
        t = 1.0 / bundle.eigenvalues[1]
    return DiffusionMap(bundle.eigenvalues, bundle.fields[:, :, 0], float(t), bundle.gaps)


def default_time(graph: NeighborGraph) -> float:
    """``1 / lambda_2`` of the scalar random-walk Laplacian."""
    return dm_baseline(graph, 2).t
