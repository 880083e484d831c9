"""Vector diffusion maps on sampled manifolds.

Point-cloud samplers, kernel graphs, local PCA frames and Procrustes
connections, the graph connection Laplacian and its spectrum, truncated
vector diffusion embeddings with a separation certificate, local charts from
eigenvector-field products, and a property-check suite.
"""

from .charts import BandFilter, measure_distortion, select_chart
from .embedding import (
    certify_embedding,
    dm_baseline,
    hs_kernel,
    remainder,
    vdm_distance,
    vdm_embed,
)
from .errors import VDMError
from .frames import build_connection, estimate_frames
from .gcl import assemble, spectrum
from .geometry import PointCloud, sample_circle_xray, sample_sphere_frames, sphere_cloud
from .graph import build_graph, density_normalize, suggest_epsilon

__all__ = [
    "BandFilter",
    "PointCloud",
    "VDMError",
    "assemble",
    "build_connection",
    "build_graph",
    "certify_embedding",
    "density_normalize",
    "dm_baseline",
    "estimate_frames",
    "hs_kernel",
    "measure_distortion",
    "remainder",
    "sample_circle_xray",
    "sample_sphere_frames",
    "select_chart",
    "spectrum",
    "sphere_cloud",
    "suggest_epsilon",
    "vdm_distance",
    "vdm_embed",
]
