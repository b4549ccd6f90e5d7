"""Command-line surface binding the pipeline stages into scriptable runs.

Stages mirror the encoder's output boundary: `compose` writes ground-truth
scenes, `encode` turns a scene into the raster map stack, `infer` reads the
stack (grouping detections unless given some) and writes poses, `eval`
scores predictions against ground truth, `render` draws overlays.  Every
command is deterministic given its flags and seeds.

Exit codes: 0 success, 1 usage, 2 format error, 3 contract violation.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, report as report_mod
from .association import DETECTION_THRESHOLD, detect_persons
from .compositor import AugmentRanges
from .errors import ContractError, FormatError
from .maps import GridSpec, encode_scene
from .metrics import (
    MATCH_RADIUS_PX,
    PCK_RADIUS_MM,
    EvalPair,
    GroundTruthPerson,
    evaluate,
    match_predictions,
)
from .readout import ReadoutConfig, infer_poses
from .render import render_scene, write_ppm
from .skeleton import to_root_relative
from .synth import generate_isolated_scene, generate_scene


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_strict_flag(parser):
    parser.add_argument(
        "--strict",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="reject unknown fields when parsing (default); --no-strict ignores them",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orpm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compose", help="generate ground-truth scenes")
    p.add_argument("--out", required=True, help="output file, or directory for several scenes")
    p.add_argument("--count", type=int, default=2, help="persons per scene (1-4)")
    p.add_argument("--num-scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-w", type=int, default=256)
    p.add_argument("--input-h", type=int, default=256)
    p.add_argument("--grid-stride", type=int, default=4, help="pose-map/heatmap stride")
    p.add_argument("--paf-stride", type=int, default=8, help="affinity-field stride")
    p.add_argument("--depth-min", type=float, default=None)
    p.add_argument("--depth-max", type=float, default=None)
    p.add_argument("--rotation-max", type=float, default=0.0, help="augmentation rotation (deg)")
    p.add_argument("--scale-min", type=float, default=1.0)
    p.add_argument("--scale-max", type=float, default=1.0)
    p.add_argument("--jitter-max", type=float, default=0.0, help="augmentation jitter (px)")
    p.add_argument("--articulation", type=float, default=0.8)
    p.add_argument(
        "--isolated",
        action="store_true",
        help="guarantee mutually unoccluded, well-separated persons",
    )
    p.add_argument("--min-sep", type=float, default=None, help="joint separation for --isolated")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("encode", help="scene -> raster map stack")
    p.add_argument("scene", help="scene file")
    p.add_argument("--out", required=True)
    _add_strict_flag(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("infer", help="map stack -> 3D poses")
    p.add_argument("stack", help="raster container")
    p.add_argument("--out", required=True)
    p.add_argument("--detections", default=None, help="reuse detections instead of grouping")
    p.add_argument("--tc", type=float, default=0.1, help="read-out confidence threshold")
    p.add_argument("--td", type=float, default=None, help="isolation distance (px)")
    p.add_argument("--torso-only", action="store_true", help="skip limb refinement")
    p.add_argument("--det-threshold", type=float, default=DETECTION_THRESHOLD)
    _add_strict_flag(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth scene files")
    p.add_argument("--pred", nargs="+", required=True, help="pose files, parallel to --gt")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--radius-mm", type=float, default=PCK_RADIUS_MM)
    p.add_argument("--match-radius", type=float, default=MATCH_RADIUS_PX)
    p.add_argument(
        "--threshold-grid",
        default="0:150:5",
        help="AUC grid as start:stop:step in millimeters, stop inclusive",
    )
    p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render PCK figures next to the tables",
    )
    _add_strict_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw a scene overlay pixmap")
    p.add_argument("scene", help="scene file")
    p.add_argument("--out", required=True, help="output .ppm path")
    p.add_argument("--poses", default=None, help="pose file whose read-out sites to mark")
    _add_strict_flag(p)
    p.set_defaults(func=cmd_render)
    return parser


def _compose_one(payload) -> dict:
    (seed, args_dict) = payload
    grid = GridSpec(
        args_dict["input_w"], args_dict["input_h"], args_dict["grid_stride"], args_dict["paf_stride"]
    )
    aug = None
    if (
        args_dict["rotation_max"] != 0.0
        or (args_dict["scale_min"], args_dict["scale_max"]) != (1.0, 1.0)
        or args_dict["jitter_max"] != 0.0
    ):
        aug = AugmentRanges(
            rotation_max_deg=args_dict["rotation_max"],
            scale_range=(args_dict["scale_min"], args_dict["scale_max"]),
            jitter_max_px=args_dict["jitter_max"],
        )
    depth_range = None
    if args_dict["depth_min"] is not None or args_dict["depth_max"] is not None:
        if args_dict["depth_min"] is None or args_dict["depth_max"] is None:
            raise ContractError("--depth-min and --depth-max must be given together")
        depth_range = (args_dict["depth_min"], args_dict["depth_max"])
    if args_dict["isolated"]:
        if aug is not None:
            raise ContractError("--isolated does not compose with augmentation ranges")
        min_sep = args_dict["min_sep"]
        if min_sep is None:
            min_sep = 3.0 * grid.stride_pose
        scene = generate_isolated_scene(
            seed,
            grid,
            n_persons=args_dict["count"],
            min_sep=min_sep,
            articulation=args_dict["articulation"],
            depth_range=depth_range,
        )
    else:
        scene = generate_scene(
            seed,
            grid,
            n_persons=args_dict["count"],
            depth_range=depth_range,
            articulation=args_dict["articulation"],
            aug=aug,
        )
    return formats.scene_to_doc(scene.scene_gt, composite_mask=scene.composite_mask)


def cmd_compose(args) -> int:
    if not 1 <= args.count <= 4:
        raise ContractError("--count must be between 1 and 4")
    if args.num_scenes < 1:
        raise ContractError("--num-scenes must be >= 1")
    if args.scale_min <= 0 or args.scale_max < args.scale_min:
        raise ContractError("invalid --scale-min/--scale-max range")
    keys = (
        "input_w input_h grid_stride paf_stride rotation_max scale_min scale_max "
        "jitter_max isolated min_sep count articulation depth_min depth_max"
    ).split()
    args_dict = {k: getattr(args, k) for k in keys}
    payloads = [(args.seed + i, args_dict) for i in range(args.num_scenes)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            docs = list(pool.map(_compose_one, payloads))
    else:
        docs = [_compose_one(p) for p in payloads]

    out = Path(args.out)
    if args.num_scenes == 1 and not out.is_dir():
        formats.write_text_atomic(out, formats.dump_doc(docs[0]))
    else:
        out.mkdir(parents=True, exist_ok=True)
        for i, doc in enumerate(docs):
            formats.write_text_atomic(out / f"scene_{i:04d}.json", formats.dump_doc(doc))
    return 0


def cmd_encode(args) -> int:
    parsed = formats.parse_scene_doc(formats.load_doc(args.scene), strict=args.strict)
    stack = encode_scene(parsed.scene)
    formats.write_bytes_atomic(args.out, formats.serialize_rasters(formats.map_stack_to_rasters(stack)))
    return 0


def _load_detections(path, strict: bool):
    doc = formats.load_doc(path)
    fmt = doc.get("format")
    if fmt == formats.SCENE_FORMAT:
        parsed = formats.parse_scene_doc(doc, strict=strict)
        if parsed.detections is None:
            raise FormatError(f"{path}: scene file carries no detections section")
        return parsed.detections
    if fmt == formats.POSES_FORMAT:
        return formats.parse_poses_doc(doc, strict=strict).detections
    raise FormatError(f"{path}: unsupported format {fmt!r}")


def cmd_infer(args) -> int:
    stack = formats.rasters_to_map_stack(formats.parse_rasters(Path(args.stack).read_bytes()))
    if args.detections is not None:
        dets = _load_detections(args.detections, args.strict)
    else:
        dets = detect_persons(stack, threshold=args.det_threshold)
    cfg = ReadoutConfig(t_c=args.tc, t_d=args.td, torso_only=args.torso_only)
    results = infer_poses(stack, dets, cfg)
    doc = formats.poses_to_doc(stack.grid, dets, results)
    formats.write_text_atomic(args.out, formats.dump_doc(doc))
    return 0


def _parse_threshold_grid(spec: str) -> tuple[float, ...]:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise ContractError(f"--threshold-grid must be start:stop:step, got {spec!r}") from exc
    if step <= 0 or stop < start:
        raise ContractError(f"invalid threshold grid {spec!r}")
    return tuple(np.arange(start, stop + step / 2, step))


def build_eval_pairs(scene, results, detections, sequence: str, match_radius: float):
    """Match predictions to annotated persons and emit evaluation pairs."""
    gts = [
        GroundTruthPerson(
            pose_root_rel=to_root_relative(p.pose_parent_rel),
            occluded=p.occluded,
            joints_2d=p.joints_2d,
        )
        for p in scene.persons
    ]
    usable = [
        (det.joints_2d, res.pose)
        for det, res in zip(detections, results)
        if res.detected
    ]
    assignment = match_predictions(
        [g.joints_2d for g in gts], [u[0] for u in usable], radius_px=match_radius
    )
    pairs = []
    for g, pred_idx in enumerate(assignment):
        if pred_idx is None:
            pairs.append(EvalPair(gts[g], None, False, sequence))
        else:
            pairs.append(EvalPair(gts[g], usable[pred_idx][1], True, sequence))
    return pairs


def cmd_eval(args) -> int:
    if len(args.gt) != len(args.pred):
        raise ContractError("--gt and --pred need the same number of files")
    thresholds = _parse_threshold_grid(args.threshold_grid)
    pairs = []
    for gt_path, pred_path in zip(args.gt, args.pred):
        parsed_scene = formats.parse_scene_doc(formats.load_doc(gt_path), strict=args.strict)
        parsed_poses = formats.parse_poses_doc(formats.load_doc(pred_path), strict=args.strict)
        pairs.extend(
            build_eval_pairs(
                parsed_scene.scene,
                parsed_poses.poses,
                parsed_poses.detections,
                sequence=Path(gt_path).stem,
                match_radius=args.match_radius,
            )
        )
    rep = evaluate(pairs, radius_mm=args.radius_mm, thresholds_mm=thresholds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = report_mod.report_text(rep)
    formats.write_text_atomic(out / "report.txt", text)
    formats.write_text_atomic(out / "report.tsv", report_mod.report_tsv(rep))
    if args.figures:
        report_mod.save_figures(rep, out)
    sys.stdout.write(text)
    return 0


def cmd_render(args) -> int:
    parsed = formats.parse_scene_doc(formats.load_doc(args.scene), strict=args.strict)
    detections = poses = None
    if args.poses is not None:
        parsed_poses = formats.parse_poses_doc(formats.load_doc(args.poses), strict=args.strict)
        detections, poses = parsed_poses.detections, parsed_poses.poses
    img = render_scene(parsed.scene, parsed.composite_mask, detections, poses)
    formats.write_bytes_atomic(args.out, write_ppm(img))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"orpm: format error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"orpm: contract violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
