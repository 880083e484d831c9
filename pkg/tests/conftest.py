"""Shared pipeline runs. Expensive fixtures are session scoped."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import pytest

from vdmap.frames import build_connection, estimate_frames
from vdmap.gcl import assemble, spectrum
from vdmap.geometry import sample_circle_xray, sample_sphere_frames, sphere_cloud
from vdmap.graph import build_graph, density_normalize, suggest_epsilon

# frozen calibration parameters (see scripts/calibrate.py)
CIRCLE = dict(m=2000, p=128, K=40)
SPHERE = dict(m=3000, seed=7, eps_scale=24.0, alpha=1.0, K=12)
SPHERE_AUG = dict(m=1500, seed=0, eps_scale=24.0, alpha=1.0, K=12)


@dataclass
class Run:
    cloud: Any
    graph: Any
    frames: Any
    conn: Any
    bundle: Any
    samples: Any = None


def pipeline(cloud, eps, d, K, alpha=0.0, special=False, samples=None) -> Run:
    graph = density_normalize(build_graph(cloud, eps), alpha)
    frames = estimate_frames(cloud, graph, d)
    conn = build_connection(graph, frames, special=special)
    return Run(cloud, graph, frames, conn, spectrum(assemble(conn), K), samples)


@pytest.fixture(scope="session")
def circle_run() -> Run:
    cloud = sample_circle_xray(CIRCLE["m"], CIRCLE["p"])
    return pipeline(cloud, suggest_epsilon(cloud), 1, CIRCLE["K"])


@pytest.fixture(scope="session")
def sphere_run() -> Run:
    samples = sample_sphere_frames(SPHERE["m"], seed=SPHERE["seed"])
    cloud = sphere_cloud(samples)
    return pipeline(cloud, suggest_epsilon(cloud, SPHERE["eps_scale"]), 2, SPHERE["K"],
                    alpha=SPHERE["alpha"], samples=samples)


@pytest.fixture(scope="session")
def sphere_aug_run() -> Run:
    samples = sample_sphere_frames(SPHERE_AUG["m"], seed=SPHERE_AUG["seed"], antipodal=True)
    cloud = sphere_cloud(samples)
    return pipeline(cloud, suggest_epsilon(cloud, SPHERE_AUG["eps_scale"]), 2, SPHERE_AUG["K"],
                    alpha=SPHERE_AUG["alpha"], samples=samples)


def random_orthogonal(rng: np.random.Generator, d: int, size: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, d, d)))
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
