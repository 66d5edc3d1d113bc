"""Command-line interface: rectify, extract, match, evaluate, relocalize, synth.

Every RunConfig field is exposed as a long flag; a JSON config file may set
any subset and explicit flags override it. Exit codes: 0 success, 1 usage
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__, imio
from .config import RunConfig
from .errors import PlanerectError
from .estimation import match_descriptors
from .evaluation import (
    emit_report,
    evaluate_pairs,
    load_manifest,
    localization_rates,
    relocalize,
    write_dataset,
    View,
)
from .features import (
    detect_and_describe,
    extract_rectified_features,
    load_features,
    save_features,
)
from .rectify import rectify_image
from .synthetic import LAYOUTS, two_view_case


def _add_config_flags(parser):
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--config", metavar="JSON", help="config file; flags override")
    defaults = RunConfig()
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if f.type == "bool" or isinstance(default, bool):
            group.add_argument(
                flag, type=lambda s: s.lower() in ("1", "true", "yes"),
                metavar="BOOL", default=None, help=f"default {default}",
            )
        elif isinstance(default, int):
            group.add_argument(flag, type=int, default=None, help=f"default {default}")
        elif isinstance(default, float):
            group.add_argument(flag, type=float, default=None, help=f"default {default}")
        else:
            group.add_argument(flag, type=str, default=None, help=f"default {default}")


def _build_config(args) -> RunConfig:
    base = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    return RunConfig.from_dict(base)


def _echo_config(config: RunConfig):
    print("config: " + config.to_json(), file=sys.stderr)


def _cmd_rectify(args, config: RunConfig) -> int:
    image = imio.read_image(args.image)
    depth = imio.read_depth(args.depth, scale=args.depth_scale)
    K = imio.read_intrinsics(args.k)
    rset = rectify_image(image, depth, K, config)
    os.makedirs(args.out, exist_ok=True)
    for i, rp in enumerate(rset.patches):
        imio.write_image(os.path.join(args.out, f"patch{i:03d}.png"), rp.image)
        sidecar = {
            "H": [float(x) for x in rp.H.ravel()],
            "width": rp.width,
            "height": rp.height,
            "scale": float(rp.scale),
            "normal": [float(x) for x in rp.patch.normal],
            "axis_label": int(rp.patch.axis_label),
        }
        with open(os.path.join(args.out, f"patch{i:03d}.json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    imio.write_mask(os.path.join(args.out, "nonplanar.png"), rset.nonplanar_mask)
    print(f"wrote {len(rset.patches)} patches to {args.out}", file=sys.stderr)
    return 0


def _cmd_extract(args, config: RunConfig) -> int:
    image = imio.read_image(args.image)
    if args.depth:
        depth = imio.read_depth(args.depth, scale=args.depth_scale)
        K = imio.read_intrinsics(args.k)
        rset = rectify_image(image, depth, K, config)
        fs = extract_rectified_features(
            image, rset, extractor=config.extractor,
            transport=config.keypoint_jacobian_transport,
            max_features=config.max_features,
        )
    else:
        fs = detect_and_describe(
            image, extractor=config.extractor, max_features=config.max_features
        )
    save_features(fs, args.out)
    print(f"wrote {len(fs.xy)} features to {args.out}", file=sys.stderr)
    return 0


def _cmd_match(args, config: RunConfig) -> int:
    fa = load_features(args.features_a)
    fb = load_features(args.features_b)
    m = match_descriptors(fa, fb, ratio=config.ratio, mutual=args.mutual)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("idx_a,idx_b,distance\n")
        for ia, ib, d in zip(m.idx_a, m.idx_b, m.distance):
            fh.write(f"{ia},{ib},{d:.6f}\n")
    print(f"wrote {len(m.idx_a)} matches to {args.out}", file=sys.stderr)
    return 0


def _cmd_evaluate(args, config: RunConfig) -> int:
    entries = load_manifest(args.manifest)
    modes = ("rectified", "plain") if args.mode == "both" else (args.mode,)
    results = []
    for mode in modes:
        results.extend(evaluate_pairs(entries, config, mode=mode, seed=config.seed))
    rates = localization_rates(results)
    paths = emit_report(results, rates, args.out)
    print(f"wrote {', '.join(paths)}", file=sys.stderr)
    return 0


def _cmd_relocalize(args, config: RunConfig) -> int:
    queries = load_manifest(args.queries)
    database = load_manifest(args.database)

    def to_view(entry, which):
        img = imio.read_image(entry.img_a if which == "a" else entry.img_b)
        dep = imio.read_depth(
            entry.depth_a if which == "a" else entry.depth_b,
            scale=entry.depth_scale,
        )
        K = entry.K_a if which == "a" else entry.K_b
        return View(image=img, depth=dep, K=K)

    qs = [to_view(e, "a") for e in queries]
    db = [to_view(e, "a") for e in database]
    results = relocalize(qs, db, mode=args.mode, config=config, seed=config.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ranking.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query,rank,database_id,inliers\n")
        for qi, r in enumerate(results):
            for rank, di in enumerate(r.ranking):
                fh.write(f"{qi},{rank},{di},{r.inliers[di]}\n")
    print(f"wrote {path}", file=sys.stderr)
    return 0


def _cmd_synth(args, config: RunConfig) -> int:
    if args.layout not in LAYOUTS:
        raise PlanerectError(f"unknown layout {args.layout!r}")
    cases = [
        two_view_case(args.sep, args.distance, args.layout, seed=config.seed + i)
        for i in range(args.pairs)
    ]
    path = write_dataset(cases, args.out, noise_sigma=args.depth_noise, seed=config.seed)
    print(f"wrote {path}", file=sys.stderr)
    return 0


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="planerect",
        description="Perspective-distortion removal and viewpoint-robust "
        "matching from images with dense depth.",
    )
    parser.add_argument("--version", action="version", version=f"planerect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rectify", help="warp planar patches fronto-parallel")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--k", required=True, help="intrinsics JSON")
    p.add_argument("--depth-scale", type=float, default=None, help="PNG depth scale")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_rectify)

    p = sub.add_parser("extract", help="detect and describe features")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", help="enable rectified extraction")
    p.add_argument("--k", help="intrinsics JSON (with --depth)")
    p.add_argument("--depth-scale", type=float, default=None)
    p.add_argument("--out", required=True, help="output feature file")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("match", help="ratio-test descriptor matching")
    p.add_argument("--features-a", required=True)
    p.add_argument("--features-b", required=True)
    p.add_argument("--mutual", action="store_true")
    p.add_argument("--out", required=True, help="output CSV")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("evaluate", help="pairwise pose-evaluation campaign")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("rectified", "plain", "both"), default="rectified")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("relocalize", help="rank database views by inlier count")
    p.add_argument("--queries", required=True, help="query manifest")
    p.add_argument("--database", required=True, help="database manifest")
    p.add_argument("--mode", choices=("homography", "fundamental"), default="homography")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_relocalize)

    p = sub.add_parser("synth", help="write a synthetic two-view dataset")
    p.add_argument("--layout", required=True, help="|".join(LAYOUTS))
    p.add_argument("--sep", type=float, required=True, help="view angle separation, deg")
    p.add_argument("--distance", type=float, default=6.0)
    p.add_argument("--pairs", type=int, default=1)
    p.add_argument("--depth-noise", type=float, default=0.0, help="sigma as depth fraction")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_synth)
    return parser


def run(argv=None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return 1 if exc.code not in (0, None) else 0
    try:
        config = _build_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _echo_config(config)
    t0 = time.time()
    try:
        code = args.func(args, config)
    except PlanerectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"elapsed: {time.time() - t0:.2f}s", file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
