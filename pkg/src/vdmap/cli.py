"""Command-line pipeline: generate -> spectrum -> embed / chart / verify.

All stages share one output directory::

    points.csv                 sampled cloud (generate)
    bundle/                    meta.json, fields.f64le, frames.*, graph.csv, points.csv (spectrum)
    embedding.csv              truncated VDM coordinates (embed)
    certificate.json           embedding certificate (embed)
    chart.json                 local chart report (chart)
    suite.json                 property checks (verify)

Every JSON artifact carries a ``provenance`` block with the stage config and
SHA-256 hashes of its inputs; CSV artifacts get a ``<name>.provenance.json``
sidecar. Artifacts contain no paths or timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import io
from .charts import BandFilter, chart_report, measure_distortion, select_chart
from .embedding import certify_embedding, dm_baseline, far_pairs_by_graph, vdm_embed
from .errors import ConfigError, VDMError
from .frames import build_connection, estimate_frames
from .gcl import assemble, extend_to_gap, spectrum
from .geometry import (
    SphereFrameSample,
    antipodal_pairs,
    sample_circle_xray,
    sample_sphere_frames,
    sphere_cloud,
)
from .graph import build_graph, density_normalize, suggest_epsilon
from .verify import (
    CheckReport,
    check_cauchy_schwarz,
    check_heat_monotonicity,
    check_remainder_decay,
    check_rp2,
    check_sphere_analytic,
    check_weyl_growth,
    kato_diagnostic,
    polygon_self_intersections,
    suite_json,
)

MANIFOLDS = ("circle-xray", "sphere")


@dataclass
class RunConfig:
    """Flat run configuration; ``None`` means "use the manifold preset"."""

    manifold: str = "circle-xray"
    m: int | None = None
    p: int | None = None
    seed: int = 0
    antipodal: bool | None = None
    epsilon: float | str = "auto"
    epsilon_scale: float | None = None
    density_alpha: float | None = None
    d: int | None = None
    K: int | None = None
    t: float | str = "auto"
    N: int | str = "auto"
    kernel_id: str = "exp5_compact"
    complete_graph: bool = False
    special_orthogonal: bool = False
    A: float | None = None
    A_prime: float | None = None
    c0: float | None = None
    center: int = 0
    radius: float | None = None
    far_fraction: float = 0.25
    margin: float = 0.1
    trials: int = 10_000
    sphere_tol: float = 0.25
    rp2_tol: float = 0.05
    wide: bool = False

    def validate(self) -> "RunConfig":
        if self.manifold not in MANIFOLDS:
            raise ConfigError(f"unknown manifold {self.manifold!r}", field="manifold")
        for name in ("m", "p", "d", "K", "epsilon_scale", "A", "A_prime", "c0", "radius",
                     "far_fraction", "trials", "sphere_tol", "rp2_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}", field=name)
        for name in ("epsilon", "t", "N"):
            v = getattr(self, name)
            if v != "auto" and not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be 'auto' or positive, got {v!r}", field=name)
        if self.density_alpha is not None and self.density_alpha < 0:
            raise ConfigError("density_alpha must be nonnegative", field="density_alpha")
        if self.A is not None and self.A_prime is not None and not self.A > self.A_prime:
            raise ConfigError("band needs A > A_prime", field="A")
        return self


# manifold presets; sphere keeps m = 1500 base points, doubled by antipodal augmentation
PRESETS: dict[str, dict[str, Any]] = {
    "circle-xray": dict(m=2000, p=128, antipodal=False, epsilon_scale=1.0, density_alpha=0.0,
                        d=1, K=40, A=30.0, A_prime=0.5, c0=0.1, radius=0.15),
    "sphere": dict(m=1500, p=3, antipodal=True, epsilon_scale=24.0, density_alpha=1.0,
                   d=2, K=12, A=30.0, A_prime=0.5, c0=0.1, radius=0.5),
}

STAGE_KEYS = {
    "generate": ("manifold", "m", "p", "seed", "antipodal"),
    "spectrum": ("epsilon", "epsilon_scale", "density_alpha", "d", "K", "kernel_id",
                 "complete_graph", "special_orthogonal"),
    "embed": ("t", "N", "far_fraction", "margin", "wide"),
    "chart": ("t", "A", "A_prime", "c0", "center", "radius"),
    "verify": ("t", "N", "trials", "seed", "sphere_tol", "rp2_tol"),
}


def resolve(cfg: RunConfig) -> RunConfig:
    preset = PRESETS[cfg.manifold]
    updates = {k: v for k, v in preset.items() if getattr(cfg, k) is None}
    return dataclasses.replace(cfg, **updates).validate()


def _provenance(cfg: RunConfig, stage: str, inputs: dict[str, Path], **resolved) -> dict:
    return {
        "stage": stage,
        "config": {k: getattr(cfg, k) for k in STAGE_KEYS[stage]},
        "resolved": resolved,
        "inputs": {name: io.sha256_file(path) for name, path in sorted(inputs.items())},
    }


def _sidecar(path: Path, prov: dict) -> None:
    io.dump_json(prov, path.with_name(path.name + ".provenance.json"))


# ---------------------------------------------------------------- stages


def stage_generate(cfg: RunConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.manifold == "circle-xray":
        # equispaced angles; the seed only drives the sphere sampler
        cloud = sample_circle_xray(cfg.m, cfg.p)
    else:
        cloud = sphere_cloud(sample_sphere_frames(cfg.m, seed=cfg.seed, antipodal=cfg.antipodal))
    path = out / "points.csv"
    io.write_cloud_csv(cloud, path)
    _sidecar(path, _provenance(cfg, "generate", {}))
    return path


def stage_spectrum(cfg: RunConfig, points: Path, out: Path) -> Path:
    bdir = out / "bundle"
    bdir.mkdir(parents=True, exist_ok=True)
    cloud = io.read_cloud_csv(points)
    d = cfg.d if cfg.d is not None else (cloud.intrinsic_dim_hint or 1)
    eps = suggest_epsilon(cloud, cfg.epsilon_scale) if cfg.epsilon == "auto" else float(cfg.epsilon)
    graph = build_graph(cloud, eps, kernel=cfg.kernel_id, complete=cfg.complete_graph)
    graph = density_normalize(graph, cfg.density_alpha)
    frames = estimate_frames(cloud, graph, d)
    bundle = spectrum(assemble(build_connection(graph, frames, special=cfg.special_orthogonal)), cfg.K)
    dm = dm_baseline(graph, 2)

    shutil.copyfile(points, bdir / "points.csv")
    io.write_edges_csv(graph, bdir / "graph.csv")
    io.write_frames(frames, bdir)
    prov = _provenance(cfg, "spectrum", {"points.csv": points}, epsilon=eps, d=d,
                       t_auto=dm.t, scalar_lambda2=float(dm.eigenvalues[1]))
    io.write_bundle(bundle, bdir, {
        "p": cloud.p,
        "epsilon": eps,
        "kernel_id": graph.kernel_id,
        "manifold": cfg.manifold,
        "antipodal": bool(cfg.antipodal),
        "t_auto": dm.t,
        "provenance": prov,
    })
    return bdir


@dataclass
class _Loaded:
    meta: dict
    bundle: Any
    cloud: Any
    graph: Any
    frames: Any
    inputs: dict


def _load(bdir: Path) -> _Loaded:
    if not (bdir / "meta.json").exists():
        raise ConfigError(f"no spectral bundle in {bdir}", field="bundle")
    bundle = io.read_bundle(bdir)
    meta = bundle.meta
    cloud = io.read_cloud_csv(bdir / "points.csv")
    graph = io.read_edges_csv(bdir / "graph.csv", cloud.m, cloud, meta["epsilon"], meta["kernel_id"])
    frames = io.read_frames(bdir)
    inputs = {f"bundle/{n}": bdir / n for n in ("meta.json", "fields.f64le")}
    return _Loaded(meta, bundle, cloud, graph, frames, inputs)


def _time(cfg: RunConfig, ld: _Loaded) -> float:
    return float(ld.meta["t_auto"]) if cfg.t == "auto" else float(cfg.t)


def _trunc(cfg: RunConfig, ld: _Loaded) -> int:
    n = ld.bundle.d + 1 if cfg.N == "auto" else int(cfg.N)
    return extend_to_gap(ld.bundle, n)


def stage_embed(cfg: RunConfig, bdir: Path, out: Path) -> Path:
    ld = _load(bdir)
    t, n = _time(cfg, ld), _trunc(cfg, ld)
    emb = vdm_embed(ld.bundle, t, n)
    path = out / "embedding.csv"
    io.write_embedding_csv(emb, path, wide=cfg.wide)
    prov = _provenance(cfg, "embed", ld.inputs, t=t, N=emb.N)
    _sidecar(path, prov)
    cert = certify_embedding(ld.bundle, t, n, far_pairs_by_graph(ld.graph, cfg.far_fraction), cfg.margin)
    io.dump_json({**cert.to_dict(), "provenance": prov}, out / "certificate.json")
    return path


def stage_chart(cfg: RunConfig, bdir: Path, out: Path) -> Path:
    ld = _load(bdir)
    t = _time(cfg, ld)
    band = BandFilter(cfg.A, cfg.A_prime, t)
    sel = select_chart(ld.bundle, ld.frames, ld.cloud, ld.graph, cfg.center, band, cfg.radius, cfg.c0)
    rep = chart_report(sel, band, cfg.c0, measure_distortion(sel, ld.bundle, ld.graph))
    rep["provenance"] = _provenance(cfg, "chart", ld.inputs, t=t)
    path = out / "chart.json"
    io.dump_json(rep, path)
    return path


def suite_checks(cfg: RunConfig, ld: _Loaded) -> list[Callable[[], CheckReport]]:
    b, t, n = ld.bundle, _time(cfg, ld), _trunc(cfg, ld)
    checks: list[Callable[[], CheckReport]] = [
        lambda: check_cauchy_schwarz(b, t, n, cfg.trials, cfg.seed),
        lambda: check_heat_monotonicity(b, n, (0.1 * t, 10.0 * t), cfg.trials, cfg.seed),
    ]
    if sum(g < b.K for g in b.gaps) >= 3:
        checks.append(lambda: check_remainder_decay(b, t, b.gaps))
    lo, hi = max(10, b.K // 4), (3 * b.K) // 4
    if hi - lo >= 10:
        checks.append(lambda: check_weyl_growth(b, b.d))
    if ld.meta["manifold"] == "sphere":
        rot = np.asarray(ld.cloud.labels["rotation"])
        samples = [SphereFrameSample(r) for r in rot]
        checks.append(lambda: check_sphere_analytic(b, samples, ld.frames, cfg.sphere_tol))
        if ld.meta["antipodal"]:
            pairs = antipodal_pairs(b.m // 2)
            checks.append(lambda: check_rp2(b, pairs, t, cfg.rp2_tol, ld.cloud.points, ld.frames))
    else:
        def curve() -> CheckReport:
            # planar view (<u_1,u_2>, <u_1,u_3>) needs at least three fields
            emb = vdm_embed(b, t, max(n, 3))
            order = np.argsort(ld.cloud.labels["theta"], kind="stable")
            xy = emb.coords[order][:, [1, 2]]
            count = polygon_self_intersections(xy)
            return CheckReport("curve_simple", float(count), 1.0, "<", {"t": t, "N": emb.N})
        checks.append(curve)
    dm = dm_baseline(ld.graph, max(n, 2), t)
    checks.append(lambda: kato_diagnostic(b, dm, t, n))
    return checks


def stage_verify(cfg: RunConfig, bdir: Path, out: Path) -> tuple[Path, bool]:
    ld = _load(bdir)
    checks = suite_checks(cfg, ld)
    with ThreadPoolExecutor() as pool:
        reports = list(pool.map(lambda fn: fn(), checks))
    path = out / "suite.json"
    with io.atomic_path(path) as tmp:
        tmp.write_text(suite_json(reports) + "\n")
    _sidecar(path, _provenance(cfg, "verify", ld.inputs, t=_time(cfg, ld), N=_trunc(cfg, ld)))
    return path, all(r.passed for r in reports)


# ---------------------------------------------------------------- argparse


def _num_or_auto(kind: type) -> Callable[[str], Any]:
    def parse(text: str):
        return "auto" if text == "auto" else kind(text)
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", "-o", type=Path, default=Path("."), help="output directory")
    common.add_argument("--config", type=Path, help="flat JSON file of RunConfig fields")
    common.add_argument("--manifold", choices=MANIFOLDS, help="preset sample family")
    common.add_argument("--m", type=int, help="number of base samples")
    common.add_argument("--p", type=int, help="ambient dimension (circle x-ray only)")
    common.add_argument("--seed", type=int, help="sampler and probe seed")
    common.add_argument("--antipodal", action=argparse.BooleanOptionalAction, default=None, help="add antipodal copies (sphere)")
    common.add_argument("--epsilon", type=_num_or_auto(float), help="kernel bandwidth or 'auto'")
    common.add_argument("--epsilon-scale", dest="epsilon_scale", type=float, help="multiplier on the automatic bandwidth")
    common.add_argument("--density-alpha", dest="density_alpha", type=float, help="density normalization exponent (0 disables)")
    common.add_argument("--d", type=int, help="frame dimension")
    common.add_argument("--K", type=int, help="eigenpairs to compute")
    common.add_argument("--t", type=_num_or_auto(float), help="diffusion time or 'auto' (1 / lambda_2)")
    common.add_argument("--N", type=_num_or_auto(int), help="truncation or 'auto' (first gap past d)")
    common.add_argument("--kernel", dest="kernel_id", help="kernel id")
    common.add_argument("--complete", dest="complete_graph", action="store_true", default=None, help="use the complete graph")
    common.add_argument("--special", dest="special_orthogonal", action="store_true", default=None, help="force det +1 transports")
    common.add_argument("--A", type=float, help="chart band upper constant")
    common.add_argument("--A-prime", dest="A_prime", type=float, help="chart band lower constant")
    common.add_argument("--c0", type=float, help="chart gradient threshold constant")
    common.add_argument("--center", type=int, help="chart center index")
    common.add_argument("--radius", type=float, help="chart ball radius")
    common.add_argument("--trials", type=int, help="random trials per inequality check")
    common.add_argument("--wide", action="store_true", default=None, help="write embedding.csv in wide form")

    parser = argparse.ArgumentParser(prog="vdmap", description="Vector diffusion maps pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="sample a point cloud to points.csv")
    sp_ = sub.add_parser("spectrum", parents=[common], help="graph, frames and GCL spectrum")
    sp_.add_argument("--input", type=Path, help="point CSV (default OUT/points.csv)")
    for name, text in (("embed", "truncated VDM and certificate"),
                       ("chart", "local chart at a center point"),
                       ("verify", "property suite")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--bundle", type=Path, help="bundle directory (default OUT/bundle)")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    data: dict[str, Any] = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", field="config") from None
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}", field="config")
        data.update(raw)
    data.update({k: v for k, v in vars(args).items() if k in names and v is not None})
    return resolve(RunConfig(**data))


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = config_from_args(args)
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        bdir = getattr(args, "bundle", None) or out / "bundle"
        if stage in ("generate", "all"):
            stage = "generate"
            stage_generate(cfg, out)
        if args.command in ("spectrum", "all"):
            stage = "spectrum"
            src = getattr(args, "input", None) or out / "points.csv"
            if not Path(src).exists():
                raise ConfigError(f"input {src} does not exist", field="input")
            stage_spectrum(cfg, Path(src), out)
        if args.command in ("embed", "all"):
            stage = "embed"
            stage_embed(cfg, bdir, out)
        if args.command in ("chart", "all"):
            stage = "chart"
            stage_chart(cfg, bdir, out)
        if args.command in ("verify", "all"):
            stage = "verify"
            _, ok = stage_verify(cfg, bdir, out)
            if not ok:
                return 1
    except VDMError as exc:
        print(json.dumps({"stage": stage, **exc.to_dict()}), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(json.dumps({"stage": stage, "code": "invalid_argument", "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
