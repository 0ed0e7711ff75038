"""Command-line pipeline: synth -> distort -> render -> (rate|metrics|train) -> eval.

Every stage writes a JSON manifest listing its inputs, outputs, seeds and
config, so each artifact on disk is traceable and each stage is
reproducible byte for byte (timestamps aside).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, distortion, evaluation, metrics, subjective, synth
from .distortion import DistortionSpec
from .mesh_io import MeshError, load_image, load_mesh, save_image, save_mesh
from .model import EncoderConfig, FusionConfig, QualityModel, TrainConfig, train
from .render import Camera, ShadingConfig, render, render_pair
from .service import RatingStore, StimulusPair, serve_ratings

SCHEMA_VERSION = 1


def _manifest(stage: str, seed, config: dict, inputs: list, outputs: list) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "stage": stage,
        "tool_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }


def _write_manifest(manifest: dict, out_dir: Path) -> Path:
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _read_manifest(path: Path, stage: str | None = None) -> dict:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SystemExit(f"unsupported manifest schema in {path}")
    if stage is not None and manifest.get("stage") != stage:
        raise SystemExit(f"{path} is a '{manifest.get('stage')}' manifest, need '{stage}'")
    return manifest


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i in range(args.count):
        mesh = synth.make_head(seed=args.seed + i, grid=args.grid,
                               texture_size=args.texture_size, name=f"head{i:02d}")
        path = out / f"{mesh.name}.obj"
        save_mesh(mesh, path, texture_format=args.texture_format)
        outputs.append({"path": str(path), "stimulus_id": mesh.name, "kind": "reference"})
        print(f"wrote {path} ({mesh.n_faces} faces)")
    _write_manifest(_manifest("synth", args.seed, {
        "count": args.count, "grid": args.grid, "texture_size": args.texture_size,
    }, [], outputs), out)
    return 0


def cmd_distort(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    refs = []
    for ref_path in args.refs:
        try:
            refs.append(load_mesh(ref_path))
        except MeshError as exc:
            raise SystemExit(f"cannot load reference {ref_path}: {exc}")

    outputs = []
    for ref, ref_path in zip(refs, args.refs):
        ref_out = out / f"{ref.name}.obj"
        save_mesh(ref, ref_out, texture_format=args.texture_format)
        outputs.append({
            "path": str(ref_out), "stimulus_id": ref.name,
            "kind": "reference", "reference": ref.name, "spec": None,
        })

    grid = distortion.generate_grid(refs, seed=args.seed)
    for spec, mesh in grid:
        path = out / f"{mesh.name}.obj"
        save_mesh(mesh, path, texture_format=args.texture_format)
        outputs.append({
            "path": str(path), "stimulus_id": mesh.name, "kind": "distorted",
            "reference": mesh.name.split("__")[0], "spec": spec.to_dict(),
        })
    _write_manifest(_manifest("distort", args.seed, {
        "families": list(distortion.FAMILY_PARAMS),
        "gn_sigma_scale": distortion.GN_SIGMA_SCALE,
    }, [str(p) for p in args.refs], outputs), out)
    n_dist = len(grid)
    print(f"{len(refs)} references -> {n_dist} distorted stimuli "
          f"({len(refs)} x {len(distortion.FAMILY_PARAMS)} x 4)")
    return 0


def cmd_render(args) -> int:
    manifest = _read_manifest(Path(args.manifest), "distort")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shading = ShadingConfig(ambient=args.ambient, diffuse=args.diffuse)
    cameras = [Camera(view, args.width, args.height) for view in args.views]

    by_ref: dict[str, dict] = {}
    for entry in manifest["outputs"]:
        by_ref.setdefault(entry["reference"], {"reference": None, "distorted": []})
        if entry["kind"] == "reference":
            by_ref[entry["reference"]]["reference"] = entry
        else:
            by_ref[entry["reference"]]["distorted"].append(entry)

    outputs = []
    failures = []
    for ref_id in sorted(by_ref):
        group = by_ref[ref_id]
        if group["reference"] is None:
            failures.append({"stimulus_id": ref_id, "error": "reference mesh missing"})
            continue
        try:
            ref_mesh = load_mesh(group["reference"]["path"])
        except MeshError as exc:
            failures.append({"stimulus_id": ref_id, "error": str(exc)})
            continue
        for camera in cameras:
            ref_img = render(ref_mesh, camera, shading)
            ref_out = out / f"{ref_id}__{camera.view}.{args.format}"
            save_image(ref_img.image, ref_out)
            outputs.append({
                "path": str(ref_out), "stimulus_id": ref_id, "view": camera.view,
                "kind": "reference", "reference": ref_id,
                "source_mesh": group["reference"]["path"], "meta": ref_img.meta,
            })
            for entry in group["distorted"]:
                try:
                    dist_mesh = load_mesh(entry["path"])
                    _, dist_img = render_pair(ref_mesh, dist_mesh, camera, shading)
                except MeshError as exc:
                    failures.append({"stimulus_id": entry["stimulus_id"], "error": str(exc)})
                    continue
                dist_out = out / f"{entry['stimulus_id']}__{camera.view}.{args.format}"
                save_image(dist_img.image, dist_out)
                outputs.append({
                    "path": str(dist_out), "stimulus_id": entry["stimulus_id"],
                    "view": camera.view, "kind": "distorted", "reference": ref_id,
                    "source_mesh": entry["path"], "spec": entry.get("spec"),
                    "meta": dist_img.meta,
                })
        print(f"rendered {ref_id} and {len(group['distorted'])} distorted stimuli")

    render_manifest = _manifest("render", None, {
        "width": args.width, "height": args.height, "views": args.views,
        "ambient": args.ambient, "diffuse": args.diffuse, "format": args.format,
    }, [str(args.manifest)], outputs)
    if failures:
        render_manifest["failures"] = failures
        for f in failures:
            print(f"RENDER FAILED {f['stimulus_id']}: {f['error']}", file=sys.stderr)
    _write_manifest(render_manifest, out)
    return 1 if failures else 0


def _front_projections(render_manifest: dict) -> tuple[dict, dict]:
    """Return (reference front image path by ref id, distorted entries)."""
    refs = {}
    dists = {}
    for entry in render_manifest["outputs"]:
        if entry["view"] != "front":
            continue
        if entry["kind"] == "reference":
            refs[entry["reference"]] = entry["path"]
        else:
            dists[entry["stimulus_id"]] = entry
    return refs, dists


def cmd_metrics(args) -> int:
    manifest = _read_manifest(Path(args.render_manifest), "render")
    refs, dists = _front_projections(manifest)
    rows = []
    for sid in sorted(dists):
        entry = dists[sid]
        ref_img = load_image(refs[entry["reference"]])
        dist_img = load_image(entry["path"])
        values = {
            "psnr": metrics.psnr(ref_img, dist_img),
            "ssim": metrics.ssim(ref_img, dist_img),
            "gmsd": metrics.gmsd(ref_img, dist_img),
        }
        if min(ref_img.width, ref_img.height) >= 176:
            values["ms_ssim"] = metrics.ms_ssim(ref_img, dist_img)
        if args.point_metrics:
            ref_mesh = load_mesh(_mesh_path_for(manifest, entry["reference"]))
            dist_mesh = load_mesh(entry["source_mesh"])
            ref_cloud = metrics.sample_point_cloud(ref_mesh, args.points, seed=args.seed)
            dist_cloud = metrics.sample_point_cloud(dist_mesh, args.points, seed=args.seed + 1)
            values["p2point_mse"] = metrics.p2point_mse(ref_cloud, dist_cloud)
            values["p2plane_mse"] = metrics.p2plane_mse(ref_cloud, dist_cloud)
            values["psnr_yuv"] = metrics.psnr_yuv(ref_cloud, dist_cloud)
        for name, value in values.items():
            rows.append((sid, name, value))
        print(f"{sid}: " + "  ".join(f"{k}={v:.4f}" for k, v in values.items()))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stimulus_id", "metric", "value"])
        for row in rows:
            w.writerow([row[0], row[1], f"{row[2]:.10g}"])
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _mesh_path_for(render_manifest: dict, stimulus_id: str) -> str:
    for entry in render_manifest["outputs"]:
        if entry["stimulus_id"] == stimulus_id and entry["view"] == "front":
            return entry["source_mesh"]
    raise SystemExit(f"no mesh recorded for stimulus {stimulus_id}")


def cmd_mos(args) -> int:
    table = subjective.read_ratings_csv(args.ratings)
    mos, report = subjective.compute_mos(table, screen=not args.no_screen)
    subjective.write_mos_csv(mos, args.out)
    rejected = report.get("rejected_subjects", [])
    print(f"{len(table.records)} ratings, {len(table.subjects())} subjects, "
          f"{len(rejected)} rejected: {rejected}")
    excluded = report.get("zscore_excluded", {})
    for subject, reason in excluded.items():
        print(f"excluded {subject}: {reason}")
    print(f"wrote {len(mos.rows)} MOS rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    manifest = _read_manifest(Path(args.render_manifest), "render")
    refs, dists = _front_projections(manifest)
    mos = subjective.read_mos_csv(args.mos).as_dict()

    dataset = []
    for sid in sorted(dists):
        if sid not in mos:
            continue
        entry = dists[sid]
        dataset.append((load_image(refs[entry["reference"]]),
                        load_image(entry["path"]), mos[sid]))
    if not dataset:
        raise SystemExit("no stimuli have both a rendered pair and a MOS value")

    encoder_config = EncoderConfig(
        base_channels=args.channels,
        heads=_heads_for(args.channels),
        window=args.window,
        image_side=args.crop,
    )
    model = QualityModel(encoder_config, FusionConfig(dim=args.fusion_dim),
                         seed=args.seed)
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
        resize_width=args.resize_width, resize_height=args.resize_height,
        crop=args.crop, seed=args.seed, freeze_encoder=args.freeze_encoder,
    )
    result = train(model, dataset, config,
                   progress=lambda e, l: print(f"epoch {e + 1}/{config.epochs}: L1 {l:.4f}"))
    model.save(args.out)
    curve_path = Path(args.out).with_suffix(".losses.csv")
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "l1_loss"])
        for i, v in enumerate(result.loss_curve):
            w.writerow([i + 1, f"{v:.10g}"])
    print(f"saved model to {args.out}, loss curve to {curve_path}")
    return 0


def _heads_for(channels: int, head_dim: int = 8) -> tuple[int, int, int, int]:
    return tuple(max(1, channels * 2**k // head_dim) for k in range(4))


def cmd_eval(args) -> int:
    mos = subjective.read_mos_csv(args.mos).as_dict()

    if args.model:
        manifest = _read_manifest(Path(args.render_manifest), "render")
        refs, dists = _front_projections(manifest)
        model = QualityModel.load(args.model)
        side = model.encoder_config.image_side
        from .model.train import center_crop, prepare_image
        cfg = TrainConfig(resize_width=args.resize_width or side,
                          resize_height=args.resize_height or side, crop=side)
        scores = {}
        for sid in sorted(dists):
            if sid not in mos:
                continue
            entry = dists[sid]
            ref = center_crop(prepare_image(load_image(refs[entry["reference"]]), cfg), side)
            dist = center_crop(prepare_image(load_image(entry["path"]), cfg), side)
            scores[sid] = model.score(ref, dist)
        name = f"model:{Path(args.model).name}"
    else:
        scores = {}
        with open(args.scores, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["metric"] == args.metric:
                    scores[row["stimulus_id"]] = float(row["value"])
        if not scores:
            raise SystemExit(f"no '{args.metric}' rows found in {args.scores}")
        name = args.metric

    scores = {sid: v for sid, v in scores.items() if sid in mos}
    contents = sorted({evaluation.default_content_of(s) for s in scores})
    folds = evaluation.make_folds(contents, k=args.folds, seed=args.seed)
    report = evaluation.evaluate_method(scores, mos, folds)
    print(report.format_table(name))
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        print(f"wrote report to {args.out}")
    return 0


def cmd_serve(args) -> int:
    manifest = _read_manifest(Path(args.render_manifest), "render")
    refs, dists = _front_projections(manifest)
    stimuli = [
        StimulusPair(sid, Path(refs[entry["reference"]]), Path(entry["path"]))
        for sid, entry in sorted(dists.items())
    ]
    store = RatingStore(stimuli, Path(args.ratings), study_seed=args.seed)
    ui_dir = Path(args.ui) if args.ui else _default_ui_dir()
    server = serve_ratings(store, host=args.host, port=args.port, ui_dir=ui_dir)
    print(f"serving {len(stimuli)} stimuli on http://{args.host}:{args.port} "
          f"(ui: {ui_dir}), ratings -> {args.ratings}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("stopped")
    return 0


def _default_ui_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headqa",
        description="Quality-assessment workbench for textured head meshes.",
    )
    parser.add_argument("--version", action="version", version=f"headqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic reference heads")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=24)
    p.add_argument("--texture-size", type=int, default=256)
    p.add_argument("--texture-format", choices=["ppm", "png"], default="ppm")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("distort", help="apply the 7x4 distortion grid")
    p.add_argument("--refs", nargs="+", required=True, help="reference OBJ files")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-scale", type=float, default=distortion.GN_SIGMA_SCALE,
                   help="geometry-noise std as a fraction of bbox diagonal per sigma unit")
    p.add_argument("--texture-format", choices=["ppm", "png"], default="ppm")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("render", help="render front/left projections")
    p.add_argument("--manifest", required=True, help="distort manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=270)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--views", nargs="+", default=["front", "left"],
                   choices=["front", "left"])
    p.add_argument("--ambient", type=float, default=0.3)
    p.add_argument("--diffuse", type=float, default=0.7)
    p.add_argument("--format", choices=["ppm", "png"], default="png")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", help="classic FR metrics over projections")
    p.add_argument("--render-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--point-metrics", action="store_true",
                   help="also compute point-cloud metrics from the meshes")
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("mos", help="ratings CSV -> MOS CSV")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-screen", action="store_true",
                   help="skip outlier-subject screening")
    p.set_defaults(func=cmd_mos)

    p = sub.add_parser("train", help="train the learned quality model")
    p.add_argument("--render-manifest", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--out", required=True, help="model output (.npz)")
    p.add_argument("--channels", type=int, default=24)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--fusion-dim", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--resize-width", type=int, default=256)
    p.add_argument("--resize-height", type=int, default=456)
    p.add_argument("--crop", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freeze-encoder", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="fold-wise correlation report")
    p.add_argument("--mos", required=True)
    p.add_argument("--scores", help="metrics CSV from 'headqa metrics'")
    p.add_argument("--metric", default="psnr", help="metric name within --scores")
    p.add_argument("--model", help="trained model (.npz) instead of --scores")
    p.add_argument("--render-manifest", help="needed with --model")
    p.add_argument("--resize-width", type=int)
    p.add_argument("--resize-height", type=int)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="host the rating interface")
    p.add_argument("--render-manifest", required=True)
    p.add_argument("--ratings", required=True, help="ratings CSV to append to")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8350)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ui", help="directory with the built rating UI")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "sigma_scale", None) is not None:
        distortion.GN_SIGMA_SCALE = args.sigma_scale
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
