"""Graph connection Laplacian: block assembly and low-lying spectrum.

The Laplacian is ``C = I - D^{-1} S`` where ``S[i, j] = w_ij O_ij`` and
``D[i, i] = deg(i) I_d``. Its spectrum is computed from the similar symmetric
matrix ``I - D^{-1/2} S D^{-1/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import ConvergenceFailure, TruncationInsideCluster
from .frames import ConnectionGraph
from .graph import ensure_connected

DEFAULT_GAP_TOL = 1e-6
DEFAULT_SEED = 20240601


@dataclass(frozen=True)
class BlockOperator:
    """Block-sparse S and diagonal D. Only the upper blocks (i < j) are stored."""

    m: int
    d: int
    rows: np.ndarray
    cols: np.ndarray
    blocks: np.ndarray
    degrees: np.ndarray

    def to_sparse(self) -> sp.csr_matrix:
        d = self.d
        a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        r = (self.rows[:, None, None] * d + a).ravel()
        c = (self.cols[:, None, None] * d + b).ravel()
        v = self.blocks.ravel()
        n = self.m * d
        s = sp.coo_matrix(
            (np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))),
            shape=(n, n),
        ).tocsr()
        s.sum_duplicates()
        s.sort_indices()
        return s

    def degree_vector(self) -> np.ndarray:
        return np.repeat(self.degrees, self.d)

    def laplacian(self) -> sp.csr_matrix:
        """The (nonsymmetric) GCL ``I - D^{-1} S`` as a sparse matrix."""
        n = self.m * self.d
        return (sp.identity(n, format="csr") - sp.diags(1.0 / self.degree_vector()) @ self.to_sparse()).tocsr()

    def normalized_laplacian(self) -> sp.csr_matrix:
        """``I - D^{-1/2} S D^{-1/2}``, symmetric and similar to the GCL."""
        n = self.m * self.d
        h = sp.diags(1.0 / np.sqrt(self.degree_vector()))
        return (sp.identity(n, format="csr") - h @ self.to_sparse() @ h).tocsr()


def assemble(conn: ConnectionGraph) -> BlockOperator:
    graph = conn.graph
    ensure_connected(graph)
    return BlockOperator(
        m=graph.m,
        d=conn.d,
        rows=graph.rows,
        cols=graph.cols,
        blocks=graph.weights[:, None, None] * conn.connections,
        degrees=graph.degrees(),
    )


@dataclass(frozen=True)
class SpectralBundle:
    """Low-lying eigenpairs of a GCL.

    ``fields[k, i]`` is the coordinate block ``u_k[i]`` (length d) of the k-th
    eigenvector at point i. ``gaps`` lists the truncation sizes N after which
    the spectrum has a gap; the last entry equals the number of stored pairs.
    """

    eigenvalues: np.ndarray
    fields: np.ndarray
    degrees: np.ndarray
    gaps: tuple[int, ...]
    gap_tol: float
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.eigenvalues.size

    @property
    def m(self) -> int:
        return self.fields.shape[1]

    @property
    def d(self) -> int:
        return self.fields.shape[2]

    def stacked(self) -> np.ndarray:
        """Eigenvectors as columns of an (m*d, K) matrix."""
        return self.fields.reshape(self.K, -1).T

    def truncate(self, n: int) -> "SpectralBundle":
        n = extend_to_gap(self, n)
        return SpectralBundle(
            self.eigenvalues[:n], self.fields[:n], self.degrees,
            tuple(g for g in self.gaps if g <= n), self.gap_tol, dict(self.meta),
        )


def is_gap(lower: float, upper: float, gap_tol: float) -> bool:
    return upper - lower >= gap_tol * max(1.0, abs(lower))


def gap_positions(eigenvalues: np.ndarray, gap_tol: float = DEFAULT_GAP_TOL) -> list[int]:
    """Counts N (1 <= N < len) such that a gap separates eigenvalue N from N+1."""
    return [n for n in range(1, eigenvalues.size) if is_gap(eigenvalues[n - 1], eigenvalues[n], gap_tol)]


def clusters(eigenvalues: np.ndarray, rtol: float) -> list[tuple[int, int]]:
    """Split a sorted spectrum into half-open index ranges [start, stop).

    Consecutive eigenvalues stay in one cluster while their difference is at
    most ``rtol`` times the larger of the two. Used to locate eigenspaces that
    are degenerate in the continuum but split by sampling noise.
    """
    out = []
    start = 0
    for n in range(1, eigenvalues.size):
        lo, hi = eigenvalues[n - 1], eigenvalues[n]
        if hi - lo > rtol * max(abs(hi), np.finfo(float).tiny):
            out.append((start, n))
            start = n
    out.append((start, eigenvalues.size))
    return out


def extend_to_gap(bundle: SpectralBundle, n: int) -> int:
    if n < 1:
        raise ValueError("truncation must be at least 1")
    for g in bundle.gaps:
        if g >= n:
            return g
    raise TruncationInsideCluster(
        f"no spectral gap at or beyond N={n} within the {bundle.K} available pairs",
        requested=n,
        available=bundle.K,
    )


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def _solve(lap: sp.csr_matrix, k: int, method: str, tol: float, v0: np.ndarray,
           shift: float, maxiter: int | None) -> tuple[np.ndarray, np.ndarray, int]:
    n = lap.shape[0]
    if k >= n - 1:
        vals, vecs = np.linalg.eigh(lap.toarray())
        return vals[:k], vecs[:, :k], 0
    try:
        if method == "shift-invert":
            lu = splu((lap + shift * sp.identity(n, format="csr")).tocsc())
            op = _Counter(lu.solve)
            opinv = LinearOperator((n, n), matvec=op, dtype=float)
            vals, vecs = eigsh(lap, k=k, sigma=-shift, which="LM", OPinv=opinv,
                               v0=v0, tol=tol, maxiter=maxiter)
        elif method == "lanczos":
            s_hat = sp.identity(n, format="csr") - lap
            op = _Counter(s_hat.dot)
            lin = LinearOperator((n, n), matvec=op, dtype=float)
            vals, vecs = eigsh(lin, k=k, which="LA", v0=v0, tol=tol, maxiter=maxiter,
                               ncv=min(n, max(2 * k + 1, 40)))
            vals = 1.0 - vals
        else:
            raise ValueError(f"unknown eigensolver method {method!r}")
    except ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            "eigensolver hit its iteration cap",
            converged=len(exc.eigenvalues),
            requested=k,
        ) from None
    # Rayleigh-Ritz on the returned subspace polishes the pairs against
    # the original (not the shifted or inverted) operator.
    q, _ = np.linalg.qr(vecs)
    h = q.T @ (lap @ q)
    vals, y = np.linalg.eigh(0.5 * (h + h.T))
    return vals, q @ y, op.calls


def spectrum(
    op: BlockOperator,
    K: int,
    tol: float = 1e-12,
    gap_tol: float = DEFAULT_GAP_TOL,
    method: str = "shift-invert",
    normalization: str = "degree",
    seed: int = DEFAULT_SEED,
    shift: float = 1e-5,
    residual_tol: float = 1e-8,
    maxiter: int | None = None,
) -> SpectralBundle:
    """The K smallest eigenpairs of the GCL, extended to the end of a cluster.

    Parameters
    ----------
    op : BlockOperator
    K : int
        Requested number of pairs. The returned bundle holds the smallest
        N >= K pairs such that eigenvalue N+1 is separated from eigenvalue N
        by at least ``gap_tol * max(1, lambda_N)``.
    tol : float
        Convergence tolerance handed to ARPACK.
    method : {"shift-invert", "lanczos"}
        Shift-invert Lanczos on the normalized Laplacian (default), or plain
        Lanczos for the largest eigenvalues of ``D^{-1/2} S D^{-1/2}``.
    normalization : {"degree", "uniform"}
        ``"degree"`` makes ``sum_i deg(i) <u_k[i], u_l[i]> = delta_kl``;
        ``"uniform"`` scales each eigenvector to unit Euclidean norm.
    seed : int
        Seed of the start vector, fixed so the eigenvector gauge is reproducible.
    """
    n = op.m * op.d
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lap = op.normalized_laplacian()
    v0 = np.random.default_rng(seed).standard_normal(n)
    pad = max(2 * op.d, 6)
    k_req = min(n, K + pad)
    calls = 0
    while True:
        vals, vecs, c = _solve(lap, k_req, method, tol, v0, shift, maxiter)
        calls += c
        cut = next((N for N in range(K, k_req) if is_gap(vals[N - 1], vals[N], gap_tol)), None)
        if cut is None and k_req == n:
            cut = n
        if cut is not None:
            break
        k_req = min(n, 2 * k_req)

    vals, vecs = vals[:cut], vecs[:, :cut]
    h = 1.0 / np.sqrt(op.degree_vector())
    resid = np.linalg.norm(lap @ vecs - vecs * vals, axis=0)
    u = vecs * h[:, None]
    # residual of the GCL itself: C u - lambda u = D^{-1/2} (L v - lambda v)
    resid_c = np.linalg.norm(((lap @ vecs - vecs * vals) * h[:, None]), axis=0) / np.linalg.norm(u, axis=0)
    worst = float(max(resid.max(), resid_c.max()))
    if worst > residual_tol:
        raise ConvergenceFailure(
            "eigenpairs failed the residual check",
            residual=worst,
            residual_tol=residual_tol,
        )
    if normalization == "uniform":
        u = u / np.linalg.norm(u, axis=0)
    elif normalization != "degree":
        raise ValueError(f"unknown normalization {normalization!r}")

    fields = u.T.reshape(cut, op.m, op.d)
    gaps = tuple(gap_positions(vals, gap_tol)) + (cut,)
    meta = {
        "m": op.m,
        "d": op.d,
        "K": cut,
        "normalization": normalization,
        "solver": {
            "method": method,
            "tol": tol,
            "iters": calls,
            "shift": shift,
            "seed": seed,
            "max_residual": worst,
        },
    }
    return SpectralBundle(vals.copy(), fields, op.degrees.copy(), gaps, gap_tol, meta)
