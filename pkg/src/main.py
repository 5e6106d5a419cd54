#!/usr/bin/env python3
"""
Heatmap-distilled radiance fields from the command line
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Type

sys.path.insert(0, str(Path(__file__).parent.parent))

from pydantic import BaseModel, ValidationError

from src.autodiff.checkpoint import load_checkpoint
from src.dataset.formats import gray_to_rgb, heatmap_preview, load_heatmaps, load_image, save_heatmaps, save_image
from src.dataset.generator import default_sigma_h, generate_dataset
from src.dataset.loader import Dataset, load_dataset
from src.dataset.manifest import MANIFEST_NAME, read_manifest
from src.dataset.synthetic import SkeletonTable
from src.encoding.features import EncoderConfig
from src.engine.field import FieldConfig, FieldParams
from src.engine.rendering import RenderConfig, render_image
from src.engine.training import TrainConfig, train
from src.evaluation.evaluator import METRIC_KEYS, evaluate
from src.extraction.skeleton_extractor import (
    SkeletonConfig,
    extract_skeleton,
    render_svg,
    save_skeleton_json,
    skeleton_to_json,
)
from src.utils.config import build_config, check_keys, dump_flat_config, known_keys, load_flat_config, write_flat_config
from src.utils.errors import ConfigError, DatasetError

RESOLVED_NAME = "config.resolved.env"
CONFIG_MODELS = (FieldConfig, TrainConfig, RenderConfig, SkeletonConfig, EncoderConfig)
CONFIG_KEYS = known_keys(*CONFIG_MODELS)


# --------- Config plumbing --------- #

def add_config_flags(parser: argparse.ArgumentParser, *models: Type[BaseModel]) -> None:
    """
    One flag per config key, spelled like the key (`--lambda_h`) or dashed (`--lambda-h`).
    """
    group = parser.add_argument_group("config overrides")
    for model in models:
        for name, info in model.model_fields.items():
            kind = info.annotation if info.annotation in (int, float) else str
            flags = [f"--{name}"]
            if "_" in name:
                flags.append(f"--{name.replace('_', '-')}")
            group.add_argument(*flags, dest=name, type=kind, default=None, help=f"default {info.default}")


def collect_overrides(args: argparse.Namespace, *models: Type[BaseModel]) -> Dict[str, object]:
    return {
        name: getattr(args, name)
        for model in models
        for name in model.model_fields
        if getattr(args, name, None) is not None
    }


def read_config_file(path: Optional[Path]) -> Dict[str, str]:
    values = load_flat_config(path)
    check_keys(values, CONFIG_KEYS, str(path))
    return values


def check_encoder(enc: EncoderConfig, features: Optional[str]) -> Optional[str]:
    if enc.encoder == "external" and features is None:
        raise ConfigError("encoder=external needs --features DIR")
    if enc.encoder == "builtin" and features is not None:
        raise ConfigError("--features given but encoder=builtin")
    return features


def resolved_text(models: List[BaseModel], inputs: Dict[str, object]) -> str:
    """
    Sorted key=value lines; input paths go first as comments so the file
    stays loadable as a config.
    """
    header = "".join(f"# {key}={value}\n" for key, value in inputs.items() if value is not None)
    return header + dump_flat_config(*models)


def print_config(text: str) -> None:
    print("⚙️  Resolved config:")
    for line in text.splitlines():
        print(f"   {line}")


def load_model_config(args: argparse.Namespace):
    """
    Field/render/skeleton/encoder settings for render and eval: the checkpoint's
    config.resolved.env (or --config), then flags.
    """
    source = Path(args.config) if args.config else Path(args.ckpt).parent / RESOLVED_NAME
    file_values = read_config_file(source)
    overrides = collect_overrides(args, RenderConfig, SkeletonConfig, EncoderConfig)
    if args.features is not None:
        overrides.setdefault("encoder", "external")
    field_cfg = build_config(FieldConfig, file_values)
    render_cfg = build_config(RenderConfig, file_values, overrides)
    skel_cfg = build_config(SkeletonConfig, file_values, overrides)
    enc_cfg = build_config(EncoderConfig, file_values, overrides)
    return field_cfg, render_cfg, skel_cfg, enc_cfg, check_encoder(enc_cfg, args.features)


def load_model(args: argparse.Namespace, field_cfg: FieldConfig, features: Optional[str]):
    print("1️⃣ Loading checkpoint and dataset...")
    params = FieldParams.from_arrays(field_cfg, load_checkpoint(args.ckpt))
    dataset = load_dataset(args.data, features)
    if dataset.K != field_cfg.K:
        raise DatasetError(f"{args.data}: dataset has K={dataset.K}, checkpoint field has K={field_cfg.K}")
    print(f"   {params.count()} parameters, {len(dataset.views)} views")
    return params, dataset


# --------- Commands --------- #

def cmd_gen_data(args: argparse.Namespace) -> int:
    out = Path(args.out)
    sigma_h = default_sigma_h(args.size) if args.sigma_h is None else args.sigma_h
    settings = {
        "seed": args.seed,
        "views_train": args.views_train,
        "views_test": args.views_test,
        "size": args.size,
        "sigma_h": sigma_h,
        "format": args.format,
        "occlusion_cull": args.occlusion_cull,
    }
    text = "".join(f"{key}={settings[key]}\n" for key in sorted(settings))
    print_config(text)

    print("1️⃣ Generating scene and views...")
    manifest = generate_dataset(
        seed=args.seed,
        n_train_views=args.views_train,
        n_test_views=args.views_test,
        size=args.size,
        out_dir=out,
        sigma_h=sigma_h,
        image_format=args.format,
        occlusion_cull=args.occlusion_cull,
    )
    write_flat_config(out / RESOLVED_NAME, text)
    print(f"   {len(manifest.train)} train / {len(manifest.test)} test views, K={manifest.K}")
    print(f"\n✅ SUCCESS: {out / MANIFEST_NAME} created!")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    file_values = read_config_file(Path(args.config)) if args.config else {}
    overrides = collect_overrides(args, FieldConfig, TrainConfig, EncoderConfig)
    if args.features is not None:
        overrides.setdefault("encoder", "external")
    models = [build_config(m, file_values, overrides) for m in CONFIG_MODELS]
    field_cfg, train_cfg, _, _, enc_cfg = models
    features = check_encoder(enc_cfg, args.features)
    text = resolved_text(models, {"data": args.data, "config": args.config, "init": args.init, "features": features})
    print_config(text)

    print("1️⃣ Loading dataset...")
    dataset: Dataset = load_dataset(args.data, features)
    print(f"   {len(dataset.train_views)} training views, K={dataset.K}")
    init = None
    if args.init:
        init = FieldParams.from_arrays(field_cfg, load_checkpoint(args.init))
        print(f"   warm start from {args.init}")

    write_flat_config(out / RESOLVED_NAME, text)
    print(f"2️⃣ Training {train_cfg.iters} iterations...")
    result = train(dataset, field_cfg, train_cfg, out_dir=out, init_params=init)
    last = result.log.iloc[-1]
    print(f"   final loss {last['total']:.6f} (l_c {last['l_c']:.6f}, l_h {last['l_h']:.6f})")
    print(f"   mean over the last {train_cfg.log_every} iterations: {last['total_mean']:.6f}")
    print(f"\n✅ SUCCESS: {result.checkpoint} created!")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    out = Path(args.out)
    field_cfg, render_cfg, skel_cfg, enc_cfg, features = load_model_config(args)
    text = resolved_text(
        [field_cfg, render_cfg, skel_cfg, enc_cfg],
        {"ckpt": args.ckpt, "data": args.data, "view": args.view, "features": features},
    )
    print_config(text)
    params, dataset = load_model(args, field_cfg, features)

    if args.view is not None:
        view = dataset.view(args.view)
    else:
        view = (dataset.test_views or dataset.views)[0]
    print(f"2️⃣ Rendering {view.name}...")
    image, heat, opacity = render_image(
        params, view.camera, field_cfg, dataset.source,
        n_samples=render_cfg.eval_samples, chunk=render_cfg.chunk, workers=render_cfg.workers,
    )
    save_image(out / "rgb.png", image)
    save_heatmaps(out / "heatmaps.hfheat", heat)
    save_image(out / "opacity.png", gray_to_rgb(opacity))
    save_image(out / "heatmaps_max.png", heatmap_preview(heat))
    write_flat_config(out / RESOLVED_NAME, text)

    if args.svg:
        print("3️⃣ Extracting skeleton...")
        skel = extract_skeleton(heat, dataset.bones, skel_cfg.sigma_g, skel_cfg.tau)
        names = dataset.manifest.joint_names
        save_skeleton_json(out / "skeleton.json", skeleton_to_json(skel, skel_cfg.sigma_g, skel_cfg.tau, names))
        (out / "overlay.svg").write_text(
            render_svg(skel, view.camera.width, view.camera.height, image, names), encoding="utf-8"
        )
        print(f"   {sum(j.present for j in skel.joints)}/{skel.K} joints found")

    print(f"\n✅ SUCCESS: renders written to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    field_cfg, render_cfg, skel_cfg, enc_cfg, features = load_model_config(args)
    text = resolved_text(
        [field_cfg, render_cfg, skel_cfg, enc_cfg],
        {"ckpt": args.ckpt, "data": args.data, "features": features},
    )
    print_config(text)
    params, dataset = load_model(args, field_cfg, features)

    print(f"2️⃣ Evaluating {len(dataset.test_views)} test view(s)...")
    report = evaluate(params, dataset, skel_cfg, render_cfg, out_dir=out)
    write_flat_config(out / RESOLVED_NAME, text)

    print("\n📊 SUMMARY:")
    for key in METRIC_KEYS:
        print(f"{key}: {report.means[key]:.4f}")
    print(f"sigma_g={skel_cfg.sigma_g} tau={skel_cfg.tau} alpha={skel_cfg.alpha}")
    print(f"\n✅ SUCCESS: {out / 'metrics.json'} created!")
    return 0


def cmd_skeleton(args: argparse.Namespace) -> int:
    out = Path(args.out)
    skel_cfg = build_config(SkeletonConfig, collect_overrides(args, SkeletonConfig))
    text = resolved_text([skel_cfg], {"heatmaps": args.heatmaps, "data": args.data, "image": args.image})
    print_config(text)

    print("1️⃣ Loading heatmaps...")
    stack = load_heatmaps(args.heatmaps)
    if args.data:
        manifest = read_manifest(args.data)
        bones, names, K = manifest.bones, manifest.joint_names, manifest.K
    else:
        table = SkeletonTable()
        bones, names, K = table.connectivity, table.joint_names, table.K
    if stack.K != K:
        raise DatasetError(f"{args.heatmaps}: {stack.K} channels, skeleton has {K} joints")

    print("2️⃣ Extracting skeleton...")
    skel = extract_skeleton(stack, bones, skel_cfg.sigma_g, skel_cfg.tau)
    save_skeleton_json(out / "skeleton.json", skeleton_to_json(skel, skel_cfg.sigma_g, skel_cfg.tau, names))
    write_flat_config(out / RESOLVED_NAME, text)
    print(f"   {sum(j.present for j in skel.joints)}/{skel.K} joints found")

    if args.svg:
        image = load_image(args.image) if args.image else None
        (out / "overlay.svg").write_text(render_svg(skel, stack.width, stack.height, image, names), encoding="utf-8")
        print("🖼️  Overlay: overlay.svg")

    print(f"\n✅ SUCCESS: {out / 'skeleton.json'} created!")
    return 0


# --------- Parser --------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="hfnerf", description="Heatmap-distilled radiance fields at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic multi-view dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--views-train", dest="views_train", type=int, default=8)
    p.add_argument("--views-test", dest="views_test", type=int, default=2)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--sigma-h", dest="sigma_h", type=float, default=None, help="teacher spread in pixels")
    p.add_argument("--format", choices=["png", "ppm"], default="png")
    p.add_argument("--occlusion-cull", dest="occlusion_cull", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="distil a field from a dataset")
    p.add_argument("--data", required=True, help="manifest.json or its directory")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--init", default=None, help="warm-start checkpoint")
    p.add_argument("--features", default=None, help="directory of <view>.hffeat maps")
    add_config_flags(p, FieldConfig, TrainConfig, EncoderConfig)
    p.set_defaults(handler=cmd_train)

    for name, handler, helptext in (
        ("render", cmd_render, "render one view to RGB, heatmaps and opacity"),
        ("eval", cmd_eval, "score the test views"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--config", default=None, help="field config (default: next to the checkpoint)")
        p.add_argument("--features", default=None)
        if name == "render":
            p.add_argument("--view", default=None, help="view name or index (default: first test view)")
            p.add_argument("--svg", action="store_true", help="also extract the skeleton and draw an overlay")
        add_config_flags(p, RenderConfig, SkeletonConfig, EncoderConfig)
        p.set_defaults(handler=handler)

    p = sub.add_parser("skeleton", parents=[common], help="extract a 2D skeleton from a heatmap stack")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None, help="manifest supplying joint names and bones")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--image", default=None, help="RGB image under the overlay")
    add_config_flags(p, SkeletonConfig)
    p.set_defaults(handler=cmd_skeleton)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.handler(args)
    except (ValidationError, ConfigError) as e:
        print(f"❌ {e}")
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
