"""Named, serializable property checks on a computed spectral bundle."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .embedding import (
    DiffusionMap,
    hs_diagonal,
    hs_kernel_pairs,
    point_grams,
    remainder_by_point,
)
from .errors import InsufficientSpectrum, MultiplicityMismatch
from .frames import FrameField, procrustes
from .gcl import SpectralBundle, clusters, extend_to_gap
from .geometry import SphereFrameSample, analytic_sphere_fields, analytic_sphere_gram

SPHERE_CLUSTER_RTOL = 0.25


@dataclass
class CheckReport:
    """Outcome of one check.

    ``direction`` is ``"<"`` (pass iff statistic < threshold) or ``">="``
    (pass iff statistic >= threshold).
    """

    name: str
    statistic: float
    threshold: float
    direction: str
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.direction == "<":
            return bool(self.statistic < self.threshold)
        if self.direction == ">=":
            return bool(self.statistic >= self.threshold)
        raise ValueError(f"unknown direction {self.direction!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "pass": self.passed,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "direction": self.direction,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CheckReport":
        rep = cls(data["name"], data["statistic"], data["threshold"], data["direction"], data["details"])
        if rep.passed != data["pass"]:
            raise ValueError(f"report {rep.name!r} does not re-verify")
        return rep


def first_cluster(bundle: SpectralBundle, rtol: float, size: int) -> tuple[int, int]:
    """Index range of the lowest eigenvalue cluster, required to have ``size`` members."""
    spans = clusters(bundle.eigenvalues, rtol)
    start, stop = spans[0]
    if len(spans) < 2 or stop - start != size:
        raise MultiplicityMismatch(
            f"first eigenvalue cluster has {stop - start} members, expected {size}"
            + ("" if len(spans) > 1 else " (cluster end not resolved; compute more pairs)"),
            size=stop - start,
            expected=size,
            eigenvalues=bundle.eigenvalues[: min(bundle.K, size + 4)].tolist(),
        )
    return start, stop


@dataclass
class SphereAlignment:
    """Global alignment of the lowest GCL cluster to the analytic S^2 fields."""

    span: tuple[int, int]
    rotation: np.ndarray
    scale: float
    grams: np.ndarray

    @property
    def orthogonality_error(self) -> float:
        q = self.rotation
        return float(np.linalg.norm(q.T @ q - np.eye(q.shape[0])))


def align_sphere_cluster(
    bundle: SpectralBundle,
    points: np.ndarray,
    frames: FrameField,
    rtol: float = SPHERE_CLUSTER_RTOL,
) -> SphereAlignment:
    """Fit one orthogonal 6x6 transform and one scale mapping the numerical
    cluster fields onto the analytic fields, in the least-squares sense over
    all points with degree weights.

    The analytic fields are written in the same frames B_i as the numerical
    coordinate blocks, so a single global transform suffices.
    """
    if bundle.d != 2:
        raise ValueError("sphere alignment needs d = 2")
    start, stop = first_cluster(bundle, rtol, 6)
    u = np.transpose(bundle.fields[start:stop], (1, 2, 0))
    target = np.einsum("ipa,ipk->iak", frames.bases, analytic_sphere_fields(points))
    w = bundle.degrees
    cross = np.einsum("i,iak,ial->kl", w, u, target)
    q = procrustes(cross)
    scale = float(np.trace(q.T @ cross) / np.einsum("i,iak,iak->", w, u, u))
    v = scale * (u @ q)
    return SphereAlignment((start, stop), q, scale, np.einsum("iak,ial->ikl", v, v))


def check_sphere_analytic(
    bundle: SpectralBundle,
    samples: Sequence[SphereFrameSample],
    frames: FrameField,
    tol: float,
    rtol: float = SPHERE_CLUSTER_RTOL,
) -> CheckReport:
    """Max pointwise Frobenius error between aligned numerical and closed-form Grams."""
    points = np.stack([s.point for s in samples])
    al = align_sphere_cluster(bundle, points, frames, rtol)
    exact = np.stack([analytic_sphere_gram(s) for s in samples])
    err = np.linalg.norm(al.grams - exact, axis=(1, 2))
    start, stop = al.span
    return CheckReport(
        "sphere_analytic",
        float(err.max()),
        float(tol),
        "<",
        {
            "mean_error": float(err.mean()),
            "median_error": float(np.median(err)),
            "cluster": [start, stop],
            "cluster_eigenvalues": bundle.eigenvalues[start:stop].tolist(),
            "next_eigenvalue": float(bundle.eigenvalues[stop]),
            "scale": al.scale,
            "orthogonality_error": al.orthogonality_error,
        },
    )


def _pair_distance_extremes(v: np.ndarray, pairs: np.ndarray, fn, chunk: int = 500_000) -> float:
    best = None
    for s in range(0, len(pairs), chunk):
        p = pairs[s : s + chunk]
        val = fn(np.linalg.norm(v[p[:, 0]] - v[p[:, 1]], axis=1))
        best = val if best is None else fn([best, val])
    return float(best)


def _far_nonantipodal_pairs(points: np.ndarray, min_chord: float) -> np.ndarray:
    cos = points @ points.T
    # chord to y and to -y: sqrt(2 - 2c) and sqrt(2 + 2c)
    lim = 1.0 - 0.5 * min_chord**2
    ok = np.triu(np.abs(cos) <= lim, k=1)
    i, j = np.nonzero(ok)
    return np.stack([i, j], axis=1)


def check_rp2(
    bundle: SpectralBundle,
    antipodal_pairs: np.ndarray,
    t: float,
    tol: float,
    points: np.ndarray,
    frames: FrameField,
    rtol: float = SPHERE_CLUSTER_RTOL,
    min_chord: float = 0.5,
) -> CheckReport:
    """Antipodal collapse of the diagonal-block truncated VDM on S^2.

    The lowest cluster is aligned to the analytic fields; the map keeps the
    Gram entries among the first three aligned fields (the projected constant
    fields), weighted by ``exp(-2 lambda t)`` with lambda the cluster mean.
    The statistic is the largest antipodal-pair distance divided by the RMS
    spread of the map. ``details["separation"]`` is the smallest distance
    (same normalization) over pairs that are at chord distance at least
    ``min_chord`` from each other and from each other's antipodes.
    """
    al = align_sphere_cluster(bundle, points, frames, rtol)
    start, stop = al.span
    lam = float(bundle.eigenvalues[start:stop].mean())
    k, l = np.triu_indices(3)
    coords = np.exp(-2.0 * lam * t) * al.grams[:, k, l]
    diag3 = np.exp(-2.0 * lam * t) * al.grams[:, [0, 1, 2], [0, 1, 2]]

    pairs = np.asarray(antipodal_pairs)
    far = _far_nonantipodal_pairs(points, min_chord)

    def stats(v):
        spread = float(np.sqrt(np.mean(np.sum((v - v.mean(axis=0)) ** 2, axis=1))))
        collapse = _pair_distance_extremes(v, pairs, np.max) / spread
        sep = _pair_distance_extremes(v, far, np.min) / spread if len(far) else float("nan")
        return collapse, sep, spread

    collapse, sep, spread = stats(coords)
    collapse3, sep3, _ = stats(diag3)
    return CheckReport(
        "rp2_antipodal",
        collapse,
        float(tol),
        "<",
        {
            "separation": sep,
            "spread": spread,
            "n_antipodal_pairs": int(len(pairs)),
            "n_far_pairs": int(len(far)),
            "min_chord": min_chord,
            "cluster_mean_eigenvalue": lam,
            "t": t,
            # the three squared-norm coordinates alone also fold coordinate reflections
            "diagonal3_collapse": collapse3,
            "diagonal3_separation": sep3,
        },
    )


def check_cauchy_schwarz(
    bundle: SpectralBundle, t: float, N: int, trials: int = 10_000, seed: int = 0
) -> CheckReport:
    """Worst relative margin ``1 - k(i,j)^2 / (k(i,i) k(j,j))`` over random pairs."""
    n = extend_to_gap(bundle, N)
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, bundle.m, size=(trials, 2))
    pairs[0, 1] = pairs[0, 0]
    diag = hs_diagonal(bundle, t, n)
    kij = hs_kernel_pairs(bundle, t, n, pairs)
    margin = 1.0 - kij**2 / (diag[pairs[:, 0]] * diag[pairs[:, 1]])
    return CheckReport(
        "cauchy_schwarz", float(margin.min()), -1e-12, ">=",
        {"t": t, "N": n, "trials": trials, "seed": seed},
    )


def check_heat_monotonicity(
    bundle: SpectralBundle, N: int, t_range: tuple[float, float], trials: int = 10_000, seed: int = 0
) -> CheckReport:
    """Diagonal kernel decreases in t: statistic is the largest relative increase."""
    n = extend_to_gap(bundle, N)
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.uniform(*t_range, size=(trials, 2)), axis=1)
    pts = rng.integers(0, bundle.m, size=trials)
    h = np.exp(-np.add.outer(bundle.eigenvalues[:n], bundle.eigenvalues[:n])[None] * ts[:, :, None, None])
    g2 = point_grams(bundle, n, pts) ** 2
    k1 = np.einsum("ikl,ikl->i", h[:, 0], g2)
    k2 = np.einsum("ikl,ikl->i", h[:, 1], g2)
    rel = (k2 - k1) / k1
    strict = bool(np.all(k2[ts[:, 1] > ts[:, 0]] < k1[ts[:, 1] > ts[:, 0]])) if np.any(bundle.eigenvalues[:n] > 0) else None
    return CheckReport(
        "heat_monotonicity", float(rel.max()), 1e-14, "<",
        {"N": n, "trials": trials, "seed": seed, "strict": strict, "t_range": list(t_range)},
    )


def check_weyl_growth(bundle: SpectralBundle, n_intrinsic: int, skip: int = 10) -> CheckReport:
    """Log-log slope of the eigenvalue counting function against lambda.

    The fit uses indices from ``max(skip, K/4)`` up to ``3K/4`` and the check
    passes when the slope is within 30% of ``n_intrinsic / 2``.
    """
    lam = bundle.eigenvalues
    lo, hi = max(skip, bundle.K // 4), (3 * bundle.K) // 4
    idx = np.arange(lo, hi)
    idx = idx[lam[idx] > 0]
    if idx.size < 10:
        raise InsufficientSpectrum(
            f"Weyl fit window has {idx.size} eigenvalues, need 10", window=[int(lo), int(hi)], K=bundle.K
        )
    slope = float(np.polyfit(np.log(lam[idx]), np.log(idx + 1.0), 1)[0])
    target = n_intrinsic / 2.0
    return CheckReport(
        "weyl_growth", abs(slope - target), 0.3 * target, "<",
        {"slope": slope, "target": target, "window": [int(lo), int(hi)]},
    )


def check_remainder_decay(
    bundle: SpectralBundle, t: float, gaps: Sequence[int], max_ratio: float = 1.0
) -> CheckReport:
    """Tail sums at successive gap truncations must decrease.

    The statistic is the largest ratio ``R_{N_{s+1}} / R_{N_s}``; the check
    also requires each step to be nonincreasing up to 1e-14 relative.
    """
    gaps = sorted(int(g) for g in gaps if g < bundle.K)
    if len(gaps) < 3:
        raise ValueError("need at least three gap-aligned truncations below K")
    r = np.array([remainder_by_point(bundle, t, g).max() for g in gaps])
    ratios = r[1:] / np.where(r[:-1] > 0, r[:-1], np.inf)
    monotone = bool(np.all(r[1:] <= r[:-1] * (1 + 1e-14)))
    scaled = r * np.exp(bundle.eigenvalues[np.array(gaps) - 1] * t)
    stat = float(ratios.max()) if monotone else float("inf")
    return CheckReport(
        "remainder_decay", stat, float(max_ratio), "<",
        {"gaps": gaps, "remainders": r.tolist(), "t": t, "monotone": monotone,
         "scaled_by_exp_lambda_t": scaled.tolist()},
    )


def kato_diagnostic(bundle: SpectralBundle, dm: DiffusionMap, t: float, N: int) -> CheckReport:
    """Ratio of the vector to the scalar truncated diagonal kernel (never asserted)."""
    n = extend_to_gap(bundle, N)
    vec = hs_diagonal(bundle, t, n)
    scal = np.einsum("k,ki,ki->i", np.exp(-dm.eigenvalues * t), dm.functions, dm.functions)
    ratio = vec / scal
    return CheckReport(
        "kato_diagnostic", float(ratio.max()), float("inf"), "<",
        {"t": t, "N": n, "min_ratio": float(ratio.min()), "median_ratio": float(np.median(ratio))},
    )


def polygon_self_intersections(xy: np.ndarray, chunk: int = 256) -> int:
    """Number of intersecting pairs of non-adjacent edges of the closed polygon ``xy``."""
    xy = np.asarray(xy, dtype=float)
    m = len(xy)
    a = xy
    b = np.roll(xy, -1, axis=0)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    def on_seg(p, q, r):
        return (
            (np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]))
        )

    count = 0
    j = np.arange(m)
    for s in range(0, m, chunk):
        i = np.arange(s, min(m, s + chunk))
        ii, jj = np.meshgrid(i, j, indexing="ij")
        keep = (jj > ii + 1) & ~((ii == 0) & (jj == m - 1))
        ii, jj = ii[keep], jj[keep]
        p1, p2, p3, p4 = a[ii], b[ii], a[jj], b[jj]
        d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
        d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
        proper = (d1 * d2 < 0) & (d3 * d4 < 0)
        touch = (
            ((d1 == 0) & on_seg(p3, p4, p1)) | ((d2 == 0) & on_seg(p3, p4, p2))
            | ((d3 == 0) & on_seg(p1, p2, p3)) | ((d4 == 0) & on_seg(p1, p2, p4))
        )
        count += int(np.sum(proper | touch))
    return count


def suite_json(reports: Sequence[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
