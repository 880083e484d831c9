"""Reproduce the frozen regression numbers used by the test suite.

Run once after any change to the numerics and compare against
``tests/calibration.json``; thresholds in the tests sit just above these
measurements.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from vdmap.charts import BandFilter, measure_distortion, select_chart
from vdmap.embedding import certify_embedding, default_time, far_pairs_by_graph, vdm_embed
from vdmap.frames import ConnectionGraph, build_connection, estimate_frames
from vdmap.gcl import assemble, spectrum
from vdmap.geometry import antipodal_pairs, sample_circle_xray, sample_sphere_frames, sphere_cloud
from vdmap.graph import build_graph, density_normalize, suggest_epsilon
from vdmap.verify import (
    check_remainder_decay,
    check_rp2,
    check_sphere_analytic,
    check_weyl_growth,
    polygon_self_intersections,
)


def sphere(m, seed, scale, alpha, K, antipodal=False):
    samples = sample_sphere_frames(m, seed=seed, antipodal=antipodal)
    cloud = sphere_cloud(samples)
    g = density_normalize(build_graph(cloud, suggest_epsilon(cloud, scale)), alpha)
    frames = estimate_frames(cloud, g, 2)
    return samples, cloud, g, frames, spectrum(assemble(build_connection(g, frames)), K)


def circle_numbers() -> dict:
    out = {}
    for m in (250, 1000, 2000, 4000):
        pts = sample_circle_xray(m, 128).points
        out.setdefault("spacing_constant", {})[m] = float(
            np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1).max() * m)
    cloud = sample_circle_xray(2000, 128)
    g = build_graph(cloud, suggest_epsilon(cloud))
    frames = estimate_frames(cloud, g, 1)
    b = spectrum(assemble(build_connection(g, frames)), 40)
    t = default_time(g)
    emb = vdm_embed(b, t, 3)
    out["curve_self_intersections"] = polygon_self_intersections(emb.coords[:, [1, 2]])
    out["remainder_max_ratio"] = check_remainder_decay(b, t, b.gaps).statistic
    band = BandFilter(30.0, 0.5, t)
    sel = select_chart(b, frames, cloud, g, 0, band, 0.15, 0.1)
    lo, hi = measure_distortion(sel, b, g)
    out["chart"] = {"pairs": sel.pairs, "c_lo": lo, "c_hi": hi, "ratio": hi / lo}
    far = far_pairs_by_graph(g, 0.25)
    out["certificate"] = {
        f"t={f}/lambda2,N={n}": certify_embedding(b, f * t, n, far).to_dict()
        for f, n in ((1.0, 3), (1.0, 5), (0.1, 13))
    }
    return out


def sphere_numbers() -> dict:
    out = {}
    for m in (3000, 6000):
        samples, _, _, frames, b = sphere(m, 7, 24.0, 1.0, 12)
        rep = check_sphere_analytic(b, samples, frames, 0.15)
        out[f"analytic_max_error_m{m}"] = rep.statistic
        out[f"analytic_mean_error_m{m}"] = rep.details["mean_error"]
    samples, cloud, _, frames, b = sphere(1500, 0, 24.0, 1.0, 12, antipodal=True)
    rep = check_rp2(b, antipodal_pairs(1500), 1.0, 0.05, cloud.points, frames)
    out["rp2"] = {"collapse": rep.statistic, "separation": rep.details["separation"]}
    _, _, _, _, b = sphere(3000, 7, 4.0, 0.0, 120)
    out["weyl_slope_sphere"] = check_weyl_growth(b, 2).details["slope"]
    c = sample_circle_xray(512, 128)
    g = build_graph(c, suggest_epsilon(c))
    dense = spectrum(assemble(ConnectionGraph.trivial(g, 1)), 512)
    out["weyl_slope_s1_dense_K100"] = check_weyl_growth(dense.truncate(100), 1).details["slope"]
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    args = ap.parse_args(argv)
    start = time.perf_counter()
    result = {"circle": circle_numbers(), "sphere": sphere_numbers()}
    text = json.dumps(result, indent=2, sort_keys=True, default=float)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    print(f"calibration took {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
