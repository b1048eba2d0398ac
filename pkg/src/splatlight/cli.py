"""Command-line entry point.

Subcommands: train, render, decompose, bench, make-synthetic, serve.
Exit codes: 0 success, 2 usage error, 1 runtime failure. Diagnostics go to
stderr, artifacts to the flagged paths.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import formats
from .optimize import TrainingConfig, tone_map, train
from .rasterize import Camera, render
from .relight import COMPONENT_VIEWS, FULL, relight_colors
from .scene import (
    PARAMS_PER_PRIMITIVE,
    DirectionalLight,
    PointLight,
    make_random_scene,
)


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what}: expected {n} comma-separated values")
    return [float(p) for p in parts]


def _add_camera_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cam-azimuth", type=float, default=0.0, help="orbit azimuth, radians")
    p.add_argument("--cam-elevation", type=float, default=0.5, help="orbit elevation, radians")
    p.add_argument("--cam-radius", type=float, default=3.2, help="orbit distance")
    p.add_argument("--cam-target", default="0,0,0", help="orbit target x,y,z")
    p.add_argument("--fov", type=float, default=50.0, help="vertical field of view, degrees")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)


def _camera_from_args(args) -> Camera:
    target = np.asarray(_parse_floats(args.cam_target, 3, "--cam-target"))
    eye = target + args.cam_radius * np.array([
        np.cos(args.cam_elevation) * np.sin(args.cam_azimuth),
        np.sin(args.cam_elevation),
        np.cos(args.cam_elevation) * np.cos(args.cam_azimuth),
    ])
    return Camera.look_at(eye=eye, target=target, width=args.width,
                          height=args.height, fov_deg=args.fov)


def _add_light_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--point", action="append", default=[], metavar="X,Y,Z,R,G,B",
                   help="point light (repeatable)")
    p.add_argument("--directional", action="append", default=[], metavar="DX,DY,DZ,R,G,B",
                   help="directional light (repeatable)")
    p.add_argument("--env", default=None, metavar="PATH",
                   help="equirectangular environment map (PFM or PNG)")
    p.add_argument("--env-samples", type=int, default=128)


def _lights_from_args(args) -> list:
    lights = []
    for spec in args.point:
        v = _parse_floats(spec, 6, "--point")
        lights.append(PointLight(position=v[:3], intensity=v[3:]))
    for spec in args.directional:
        v = _parse_floats(spec, 6, "--directional")
        lights.append(DirectionalLight(direction=v[:3], radiance=v[3:]))
    if args.env is not None:
        lights.append(formats.load_environment(args.env, sample_count=args.env_samples))
    return lights


def cmd_train(args) -> int:
    manifest = formats.load_manifest(args.manifest)
    scene = formats.load_model(args.init_model)
    config = TrainingConfig(
        lambda_dssim=args.lambda_dssim, lambda_s=args.lambda_s,
        lambda_plus=args.lambda_plus, learning_rate=args.lr,
        iterations=args.iterations,
        t_ind_activation_fraction=args.tind_fraction,
        rng_seed=args.seed, batch_size=args.batch_size,
        eval_interval=args.eval_interval,
    )
    fitted, records = train(manifest, scene, config, log_path=args.log)
    formats.save_model(fitted, args.out)
    if records:
        last = records[-1]
        print(f"trained {config.iterations} steps, final loss {last['total']:.6f}, "
              f"holdout psnr {last['psnr']}", file=sys.stderr)
    return 0


def cmd_render(args) -> int:
    scene = formats.load_model(args.model)
    cam = _camera_from_args(args)
    lights = _lights_from_args(args)
    image = render(scene, lights, cam)
    if args.pfm_out:
        formats.write_pfm(image, args.pfm_out)
    formats.write_png(tone_map(image), args.out)
    return 0


def cmd_decompose(args) -> int:
    from pathlib import Path
    scene = formats.load_model(args.model)
    cam = _camera_from_args(args)
    lights = _lights_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, mask in COMPONENT_VIEWS.items():
        img = render(scene, lights, cam, mask)
        formats.write_png(tone_map(img), out_dir / f"{name}.png")
        if args.pfm:
            formats.write_pfm(img, out_dir / f"{name}.pfm")
    full = render(scene, lights, cam, FULL)
    formats.write_png(tone_map(full), out_dir / "full.png")
    if args.pfm:
        formats.write_pfm(full, out_dir / "full.pfm")
    return 0


def cmd_bench(args) -> int:
    scene = formats.load_model(args.model) if args.model else make_random_scene(
        args.primitives, seed=args.seed)
    lights = [DirectionalLight(direction=(0.0, 1.0, 0.0), radiance=(1.0, 1.0, 1.0))
              for _ in range(args.lights)]
    cam = Camera.look_at(eye=(0.0, 1.5, 3.0), target=(0.0, 0.0, 0.0),
                         width=args.width, height=args.width)

    relight_ms = []
    raster_ms = []
    for _ in range(args.repetitions):
        t0 = time.perf_counter()
        colors = relight_colors(scene, lights, FULL)
        t1 = time.perf_counter()
        from .rasterize import project_scene, rasterize
        splats = project_scene(scene, colors, cam)
        rasterize(splats, cam)
        t2 = time.perf_counter()
        relight_ms.append((t1 - t0) * 1e3)
        raster_ms.append((t2 - t1) * 1e3)

    n = len(scene)
    report = {
        "primitive_count": n,
        "parameter_count": n * PARAMS_PER_PRIMITIVE,
        "memory_bytes": n * PARAMS_PER_PRIMITIVE * 4,
        "light_count": args.lights,
        "repetitions": args.repetitions,
        "relight_ms": min(relight_ms),
        "relight_us_per_primitive": min(relight_ms) * 1e3 / n,
        "rasterize_ms": min(raster_ms),
        "total_ms": min(relight_ms) + min(raster_ms),
    }
    import json
    print(json.dumps(report, indent=1))
    return 0


def cmd_make_synthetic(args) -> int:
    if args.gt_model:
        scene = formats.load_model(args.gt_model)
    else:
        scene = make_random_scene(args.random_gt, seed=args.seed)
    manifest = formats.make_synthetic_dataset(
        scene, n_lights=args.lights, n_cams=args.cams, resolution=args.resolution,
        out_dir=args.out_dir, n_holdout=args.holdout_lights,
        light_radius=args.light_radius, cam_radius=args.cam_radius,
        light_intensity=args.light_intensity)
    if args.save_gt:
        formats.save_model(scene, args.save_gt)
    print(f"wrote {len(manifest.frames)} frames to {args.out_dir}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(args.model, bind=args.bind, env_dir=args.env_dir,
          max_resolution=args.max_resolution)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatlight",
                                     description="Relightable Gaussian splatting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit appearance parameters to an OLAT dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--init-model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="JSON-lines metrics path")
    p.add_argument("--iterations", type=int, default=1600)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lambda-dssim", type=float, default=0.2)
    p.add_argument("--lambda-s", type=float, default=0.01)
    p.add_argument("--lambda-plus", type=float, default=1.0)
    p.add_argument("--tind-fraction", type=float, default=0.3)
    p.add_argument("--eval-interval", type=int, default=200)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render a model under given lights")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="tone-mapped PNG path")
    p.add_argument("--pfm-out", default=None, help="optional linear HDR PFM path")
    _add_camera_flags(p)
    _add_light_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("decompose", help="render the intrinsic component views")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pfm", action="store_true", help="also write linear PFM images")
    _add_camera_flags(p)
    _add_light_flags(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("bench", help="time the relight and rasterize stages")
    p.add_argument("--model", default=None)
    p.add_argument("--primitives", type=int, default=10000,
                   help="synthetic primitive count when no model is given")
    p.add_argument("--lights", type=int, default=1)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("make-synthetic", help="generate a synthetic OLAT dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gt-model", default=None)
    p.add_argument("--random-gt", type=int, default=200,
                   help="random ground-truth primitive count when no model is given")
    p.add_argument("--save-gt", default=None, help="also save the ground-truth model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lights", type=int, default=16)
    p.add_argument("--cams", type=int, default=8)
    p.add_argument("--holdout-lights", type=int, default=None)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--light-radius", type=float, default=3.0)
    p.add_argument("--cam-radius", type=float, default=3.2)
    p.add_argument("--light-intensity", type=float, default=18.0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("serve", help="run the local render service")
    p.add_argument("--model", required=True)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--env-dir", default=None)
    p.add_argument("--max-resolution", type=int, default=1024)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
