import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vdmap import io
from vdmap.cli import RunConfig, resolve, run
from vdmap.errors import ConfigError
from vdmap.frames import estimate_frames
from vdmap.geometry import PointCloud, sample_circle_xray, sample_sphere_frames, sphere_cloud
from vdmap.graph import build_graph, suggest_epsilon

SMALL = ["--manifold", "circle-xray", "--m", "300", "--p", "32", "--K", "20"]


def tree_hashes(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): io.sha256_file(p) for p in sorted(root.rglob("*")) if p.is_file()}


def test_cloud_csv_roundtrip(tmp_path):
    cloud = sphere_cloud(sample_sphere_frames(20, seed=1))
    path = tmp_path / "c.csv"
    io.write_cloud_csv(cloud, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["x0", "x1", "x2"] and header[3] == "label_R11"
    back = io.read_cloud_csv(path)
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.labels["rotation"], cloud.labels["rotation"])
    circ = sample_circle_xray(10, 8)
    io.write_cloud_csv(circ, path)
    back = io.read_cloud_csv(path)
    assert np.array_equal(back.points, circ.points)
    assert np.array_equal(back.labels["theta"], circ.labels["theta"])


def test_edges_csv(tmp_path):
    cloud = PointCloud(np.random.default_rng(0).uniform(size=(80, 2)))
    g = build_graph(cloud, suggest_epsilon(cloud, 4.0), require_connected=False)
    path = tmp_path / "g.csv"
    io.write_edges_csv(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,w"
    i, j, _ = lines[1].split(",")
    assert int(i) < int(j)
    back = io.read_edges_csv(path, g.m, cloud, g.epsilon, g.kernel_id)
    for name in ("rows", "cols", "weights", "lengths"):
        assert np.array_equal(getattr(back, name), getattr(g, name))


def test_frames_binary_layout(tmp_path):
    cloud = sphere_cloud(sample_sphere_frames(50, seed=2))
    g = build_graph(cloud, suggest_epsilon(cloud, 6.0))
    frames = estimate_frames(cloud, g, 2)
    io.write_frames(frames, tmp_path)
    raw = (tmp_path / "frames.f64le").read_bytes()
    assert len(raw) == 50 * 3 * 2 * 8
    assert raw == frames.bases.astype("<f8").tobytes(order="C")
    assert json.loads((tmp_path / "frames.json").read_text()) == {"m": 50, "p": 3, "d": 2}
    assert np.array_equal(io.read_frames(tmp_path).bases, frames.bases)


def test_bundle_roundtrip(tmp_path, sphere_run):
    io.write_bundle(sphere_run.bundle, tmp_path, {"p": 3, "epsilon": 0.1, "kernel_id": "exp5_compact"})
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert {"m", "d", "p", "epsilon", "kernel_id", "K", "eigenvalues", "solver"} <= set(meta)
    assert {"tol", "iters"} <= set(meta["solver"])
    raw = (tmp_path / "fields.f64le").read_bytes()
    assert raw == sphere_run.bundle.fields.astype("<f8").tobytes()
    back = io.read_bundle(tmp_path)
    assert np.array_equal(back.eigenvalues, sphere_run.bundle.eigenvalues)
    assert np.array_equal(back.fields, sphere_run.bundle.fields)
    assert back.gaps == sphere_run.bundle.gaps


def test_atomic_write_keeps_previous(tmp_path):
    path = tmp_path / "a.json"
    io.dump_json({"v": 1}, path)
    with pytest.raises(RuntimeError):
        with io.atomic_path(path) as tmp:
            tmp.write_text("half")
            raise RuntimeError("boom")
    assert json.loads(path.read_text()) == {"v": 1}
    assert (tmp_path / "a.json.partial").exists()


def test_config_resolution(tmp_path):
    cfg = resolve(RunConfig(manifold="sphere"))
    assert cfg.d == 2 and cfg.density_alpha == 1.0 and cfg.antipodal
    with pytest.raises(ConfigError):
        resolve(RunConfig(m=-3))
    with pytest.raises(ConfigError):
        resolve(RunConfig(t="soon"))


def test_generate_circle(tmp_path):
    assert run(["generate", "--manifold", "circle-xray", "--m", "2000", "--p", "128", "-o", str(tmp_path)]) == 0
    lines = (tmp_path / "points.csv").read_text().splitlines()
    assert len(lines) == 2001
    assert len(lines[0].split(",")) == 129
    prov = json.loads((tmp_path / "points.csv.provenance.json").read_text())
    assert prov["config"]["m"] == 2000


def test_disconnected_exit_code(tmp_path, capsys):
    pts = PointCloud(np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]]))
    io.write_cloud_csv(pts, tmp_path / "toy.csv")
    code = run(["spectrum", "--input", str(tmp_path / "toy.csv"), "--epsilon", "0.05", "--d", "1",
                "--K", "2", "-o", str(tmp_path)])
    assert code == 12
    err = json.loads(capsys.readouterr().err)
    assert err["code"] == "graph_disconnected" and err["stage"] == "spectrum"
    assert err["labels"] == [0, 0, 0, 1, 1, 1]
    assert not (tmp_path / "bundle" / "meta.json").exists()


def test_config_file_and_flags(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"manifold": "circle-xray", "m": 120, "p": 16}))
    assert run(["generate", "--config", str(cfg_path), "--m", "90", "-o", str(tmp_path)]) == 0
    assert len((tmp_path / "points.csv").read_text().splitlines()) == 91
    cfg_path.write_text(json.dumps({"bogus": 1}))
    assert run(["generate", "--config", str(cfg_path), "-o", str(tmp_path)]) == 2


def test_all_matches_manual_chain(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["all", *SMALL, "-o", str(a)]) == 0
    for stage in ("generate", "spectrum", "embed", "chart", "verify"):
        assert run([stage, *SMALL, "-o", str(b)]) == 0
    ha, hb = tree_hashes(a), tree_hashes(b)
    assert ha == hb
    assert {"points.csv", "bundle/meta.json", "bundle/fields.f64le", "bundle/frames.f64le",
            "bundle/graph.csv", "embedding.csv", "certificate.json", "chart.json", "suite.json"} <= set(ha)
    cert = json.loads((a / "certificate.json").read_text())
    assert {"c1", "G", "R_N", "margin", "pass", "provenance"} <= set(cert)
    assert cert["provenance"]["inputs"]["bundle/meta.json"] == ha["bundle/meta.json"]


def test_wide_embedding(tmp_path):
    assert run(["all", *SMALL, "-o", str(tmp_path)]) == 0
    long_rows = (tmp_path / "embedding.csv").read_text().splitlines()
    assert long_rows[0] == "i,pair_k,pair_l,value"
    assert run(["embed", *SMALL, "--wide", "-o", str(tmp_path)]) == 0
    wide = (tmp_path / "embedding.csv").read_text().splitlines()
    n2 = len(wide[0].split(","))
    assert len(wide) == 301 and len(long_rows) == 1 + 300 * n2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "vdmap.cli", "generate", *SMALL, "-o", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "points.csv").exists()


@pytest.mark.slow
def test_sphere_preset_suite(tmp_path):
    code = run(["all", "--manifold", "sphere", "-o", str(tmp_path)])
    suite = json.loads((tmp_path / "suite.json").read_text())
    names = {r["name"] for r in suite}
    assert {"sphere_analytic", "rp2_antipodal"} <= names
    assert code == (0 if all(r["pass"] for r in suite) else 1)
