"""Synthetic manifold samplers with known tangent structure.

Two families are provided:

* a closed curve in R^p obtained by discretizing the X-ray (line integral)
  transform of a compactly supported 2-D image over a grid of directions;
* uniformly distributed rotations in SO(3), read as points on S^2 together
  with an oriented tangent frame, plus the closed-form Gram matrix of the six
  lowest eigenvector fields of the connection Laplacian on S^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateEmbedding

# midpoint rule over y in [-1, 1]
XRAY_QUAD_STEPS = 256


@dataclass(frozen=True)
class GaussianBlob:
    center: tuple[float, float]
    sigma: float
    amplitude: float = 1.0


# The line through the two centers misses the origin, so the image has no
# reflection symmetry that would fold the X-ray curve onto itself.
DEFAULT_IMAGE: tuple[GaussianBlob, ...] = (
    GaussianBlob((0.45, 0.25), 0.12, 1.0),
    GaussianBlob((-0.2, 0.4), 0.2, 0.7),
)


@dataclass
class PointCloud:
    """m points in R^p with optional per-point labels.

    ``labels`` maps a label name to an array whose first axis has length m,
    e.g. ``"theta"`` -> (m,) or ``"rotation"`` -> (m, 3, 3).
    """

    points: np.ndarray
    intrinsic_dim_hint: int | None = None
    labels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-D array")
        m, p = self.points.shape
        if m < 2 or p < 1:
            raise ValueError(f"need m >= 2 and p >= 1, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        for name, arr in self.labels.items():
            if len(arr) != m:
                raise ValueError(f"label {name!r} has {len(arr)} rows, expected {m}")
        rot = self.labels.get("rotation")
        if rot is not None:
            _check_rotations(np.asarray(rot))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SphereFrameSample:
    rotation: np.ndarray

    def __post_init__(self) -> None:
        _check_rotations(self.rotation[None])

    @property
    def point(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def frame(self) -> np.ndarray:
        return self.rotation[:, :2]


def _check_rotations(rot: np.ndarray, atol: float = 1e-12) -> None:
    eye = np.eye(3)
    gram = np.einsum("nki,nkj->nij", rot, rot)
    if np.max(np.abs(gram - eye), initial=0.0) > atol:
        raise ValueError("rotation labels are not orthogonal")
    if np.max(np.abs(np.linalg.det(rot) - 1.0), initial=0.0) > atol:
        raise ValueError("rotation labels must have determinant +1")


def image_density(image: Sequence[GaussianBlob], xy: np.ndarray) -> np.ndarray:
    """Evaluate the image at points ``xy[..., 2]``; zero outside the unit disk."""
    xy = np.asarray(xy, dtype=float)
    out = np.zeros(xy.shape[:-1])
    for blob in image:
        d2 = (xy[..., 0] - blob.center[0]) ** 2 + (xy[..., 1] - blob.center[1]) ** 2
        out += blob.amplitude * np.exp(-d2 / (2.0 * blob.sigma**2))
    out[np.einsum("...k,...k->...", xy, xy) > 1.0] = 0.0
    return out


def xray_transform(
    image: Sequence[GaussianBlob],
    theta: np.ndarray,
    z: np.ndarray,
    steps: int = XRAY_QUAD_STEPS,
) -> np.ndarray:
    """Line integrals ``R(theta, z) = int psi(y*theta + z*theta_perp) dy``.

    Midpoint rule with ``steps`` nodes on y in [-1, 1]. Returns an array of
    shape (len(theta), len(z)).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.asarray(z, dtype=float)
    h = 2.0 / steps
    y = -1.0 + (np.arange(steps) + 0.5) * h
    out = np.empty((theta.size, z.size))
    # chunk over directions to bound memory at (chunk, p, steps, 2)
    chunk = max(1, 2_000_000 // max(1, z.size * steps))
    for start in range(0, theta.size, chunk):
        th = theta[start : start + chunk]
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        u_perp = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        xy = (
            y[None, None, :, None] * u[:, None, None, :]
            + z[None, :, None, None] * u_perp[:, None, None, :]
        )
        out[start : start + chunk] = image_density(image, xy).sum(axis=-1) * h
    return out


def xray_grid(p: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(1, p + 1) / p


def sample_circle_xray(
    m: int,
    p: int,
    image: Sequence[GaussianBlob] = DEFAULT_IMAGE,
    seed: int | None = None,
    min_separation: float = 1e-9,
) -> PointCloud:
    """Sample the X-ray curve of ``image`` at m directions.

    Directions are the uniform grid ``theta_i = 2*pi*i/m``. If ``seed`` is
    given, the grid is replaced by m i.i.d. uniform angles (sorted) drawn from
    ``numpy.random.default_rng(seed)``.

    Raises
    ------
    DegenerateEmbedding
        If two distinct directions map to points closer than
        ``min_separation``; the curve then fails to separate S^1.
    """
    if m < 3 or p < 8:
        raise ValueError(f"need m >= 3 and p >= 8, got m={m}, p={p}")
    if not image:
        raise ValueError("image must contain at least one Gaussian")
    if seed is None:
        theta = 2.0 * np.pi * np.arange(m) / m
    else:
        rng = np.random.default_rng(seed)
        theta = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=m))
    points = xray_transform(image, theta, xray_grid(p))
    closest = float(pdist(points).min())
    if closest < min_separation:
        raise DegenerateEmbedding(
            "X-ray curve does not separate directions",
            min_distance=closest,
        )
    return PointCloud(points, intrinsic_dim_hint=1, labels={"theta": theta})


def haar_rotations(m: int, rng: np.random.Generator) -> np.ndarray:
    """m Haar-distributed rotations via QR of Gaussian matrices.

    The QR factor is sign-fixed so that R has a positive diagonal, which makes
    Q Haar on O(3); a reflection of the first column then maps O(3)^- onto
    SO(3) without disturbing the Haar measure.
    """
    g = rng.standard_normal((m, 3, 3))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    q = q * signs[:, None, :]
    neg = np.linalg.det(q) < 0
    q[neg, :, 0] *= -1.0
    return q


def sample_sphere_frames(
    m: int, seed: int, antipodal: bool = False
) -> list[SphereFrameSample]:
    """Draw m uniform frames on S^2.

    With ``antipodal=True`` the list has length 2m and sample ``i + m`` is the
    partner of sample ``i``: rotation ``(R1, -R2, -R3)``, whose point is the
    antipode of sample i.
    """
    if m < 1:
        raise ValueError("m must be positive")
    rng = np.random.default_rng(seed)
    rots = haar_rotations(m, rng)
    if antipodal:
        partner = rots * np.array([1.0, -1.0, -1.0])
        rots = np.concatenate([rots, partner])
    return [SphereFrameSample(r) for r in rots]


def antipodal_pairs(m_base: int) -> np.ndarray:
    """Index pairs (i, i + m_base) produced by ``sample_sphere_frames``."""
    i = np.arange(m_base)
    return np.stack([i, i + m_base], axis=1)


def sphere_cloud(samples: Sequence[SphereFrameSample]) -> PointCloud:
    rots = np.stack([s.rotation for s in samples])
    return PointCloud(rots[:, :, 2].copy(), intrinsic_dim_hint=2, labels={"rotation": rots})


def analytic_sphere_gram(sample: SphereFrameSample) -> np.ndarray:
    """Closed-form 6x6 Gram matrix of the lowest eigenvector fields on S^2.

    ``X_k`` (k = 1..3) is the tangential projection of the k-th constant
    field and ``X_{k+3}`` its image under the complex structure. At the point
    R3 with frame (R1, R2)::

        <X_k, X_l>         = <X_{k+3}, X_{l+3}> = R1_k R1_l + R2_k R2_l
        <X_k, X_{l+3}>     = -R1_k R2_l + R2_k R1_l
    """
    r1 = sample.rotation[:, 0]
    r2 = sample.rotation[:, 1]
    diag = np.outer(r1, r1) + np.outer(r2, r2)
    off = -np.outer(r1, r2) + np.outer(r2, r1)
    return np.block([[diag, off], [off.T, diag]])


def analytic_sphere_fields(points: np.ndarray) -> np.ndarray:
    """Embedded fields X_1..X_6 at unit vectors ``points``; shape (m, 3, 6)."""
    x = np.asarray(points, dtype=float)
    proj = np.eye(3)[None] - x[:, :, None] * x[:, None, :]
    rot = np.cross(x[:, :, None], proj, axisa=1, axisb=1, axisc=1)
    return np.concatenate([proj, rot], axis=2)
