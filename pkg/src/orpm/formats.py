"""File formats: the binary raster container and the structured-text scene
documents.

The raster container interleaves per-map headers (length-prefixed UTF-8
name, u32 width, u32 height, u8 channels) with row-major little-endian
float32 payloads behind a magic/version/count preamble.  Scene, detection,
and pose documents are JSON with a fixed schema; parsing is strict by
default (unknown fields rejected) and every document round-trips
losslessly.  All writes are atomic (temp file then rename).
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .association import Detection2D
from .errors import FormatError
from .maps import GridSpec, MapStack, PersonGT, SceneGT
from .readout import PROV_TORSO_BASE, PROV_UNDETECTED, PoseResult, prov_limb_at
from .skeleton import (
    JOINT_NAMES,
    N_JOINTS,
    PARENT_RELATIVE,
    ROOT_RELATIVE,
    Joint,
    Pose3D,
)

MAGIC = b"ORPM"
CONTAINER_VERSION = 1
SCENE_FORMAT = "orpm-scene"
POSES_FORMAT = "orpm-poses"
DOC_VERSION = 1
GRID_META_NAME = "meta/grid"

_VALID_PROVENANCE = {PROV_TORSO_BASE, PROV_UNDETECTED} | {
    prov_limb_at(j) for j in Joint
}


def write_bytes_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Raster container


def serialize_rasters(rasters: dict[str, np.ndarray]) -> bytes:
    if len(set(rasters)) != len(rasters):
        raise FormatError("raster names must be unique")
    chunks = [MAGIC, struct.pack("<HH", CONTAINER_VERSION, len(rasters))]
    for name, arr in rasters.items():
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise FormatError(f"raster {name!r} must be 2D or 3D")
        h, w, c = arr.shape
        if c > 255:
            raise FormatError(f"raster {name!r} has too many channels")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<IIB", w, h, c))
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    return b"".join(chunks)


def parse_rasters(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r} at offset 0")
    if len(data) < 8:
        raise FormatError("truncated preamble")
    version, count = struct.unpack_from("<HH", data, 4)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    offset = 8
    rasters: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise FormatError(f"truncated name length at offset {offset}")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        if offset + 9 > len(data):
            raise FormatError(f"truncated header for {name!r} at offset {offset}")
        w, h, c = struct.unpack_from("<IIB", data, offset)
        offset += 9
        nbytes = w * h * c * 4
        if offset + nbytes > len(data):
            raise FormatError(f"truncated payload for {name!r} at offset {offset}")
        arr = np.frombuffer(data, dtype="<f4", count=w * h * c, offset=offset)
        offset += nbytes
        if name in rasters:
            raise FormatError(f"duplicate raster name {name!r}")
        rasters[name] = arr.reshape(h, w, c)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes at offset {offset}")
    return rasters


def map_stack_to_rasters(stack: MapStack) -> dict[str, np.ndarray]:
    grid = stack.grid
    rasters: dict[str, np.ndarray] = {
        GRID_META_NAME: np.array(
            [[grid.input_w, grid.input_h, grid.stride_pose, grid.stride_paf]],
            dtype=np.float32,
        )
    }
    for j in Joint:
        rasters[f"heatmap/{JOINT_NAMES[j]}"] = stack.heatmaps[j]
    for j in Joint:
        rasters[f"orpm/{JOINT_NAMES[j]}"] = stack.orpms[j]
    for j in Joint:
        rasters[f"paf/{JOINT_NAMES[j]}"] = stack.pafs[j]
    return rasters


def rasters_to_map_stack(rasters: dict[str, np.ndarray]) -> MapStack:
    if GRID_META_NAME not in rasters:
        raise FormatError(f"container lacks the {GRID_META_NAME!r} raster")
    meta = rasters[GRID_META_NAME].reshape(-1)
    if meta.size != 4:
        raise FormatError(f"{GRID_META_NAME!r} must hold 4 values")
    grid = GridSpec(*(int(v) for v in meta))
    hp, wp = grid.pose_shape
    ha, wa = grid.paf_shape
    heatmaps = np.zeros((N_JOINTS, hp, wp), dtype=np.float32)
    orpms = np.zeros((N_JOINTS, hp, wp, 3), dtype=np.float32)
    pafs = np.zeros((N_JOINTS, ha, wa, 2), dtype=np.float32)
    for j, name in enumerate(JOINT_NAMES):
        for kind, target, shape in (
            ("heatmap", heatmaps, (hp, wp, 1)),
            ("orpm", orpms, (hp, wp, 3)),
            ("paf", pafs, (ha, wa, 2)),
        ):
            key = f"{kind}/{name}"
            if key not in rasters:
                raise FormatError(f"container lacks raster {key!r}")
            arr = rasters[key]
            if arr.ndim == 2:
                arr = arr[:, :, None]
            if arr.shape != shape:
                raise FormatError(f"raster {key!r} has shape {arr.shape}, expected {shape}")
            target[j] = arr[:, :, 0] if kind == "heatmap" else arr
    return MapStack(grid=grid, heatmaps=heatmaps, orpms=orpms, pafs=pafs)


def write_map_stack(path, stack: MapStack) -> None:
    write_bytes_atomic(path, serialize_rasters(map_stack_to_rasters(stack)))


def read_map_stack(path) -> MapStack:
    return rasters_to_map_stack(parse_rasters(Path(path).read_bytes()))


# ---------------------------------------------------------------------------
# Structured-text documents


def dump_doc(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def load_doc(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


def _check_keys(obj: dict, allowed: set[str], required: set[str], path: str, strict: bool):
    missing = required - obj.keys()
    if missing:
        raise FormatError(f"{path}: missing field {sorted(missing)[0]!r}")
    if strict:
        unknown = obj.keys() - allowed
        if unknown:
            raise FormatError(f"{path}: unknown field {sorted(unknown)[0]!r}")


def _floats(value, shape, path: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: expected numbers") from exc
    if arr.shape != shape:
        raise FormatError(f"{path}: expected shape {shape}, got {arr.shape}")
    return arr


def grid_to_doc(grid: GridSpec) -> dict:
    return {
        "input_w": grid.input_w,
        "input_h": grid.input_h,
        "stride_pose": grid.stride_pose,
        "stride_paf": grid.stride_paf,
    }


def doc_to_grid(doc, path: str = "grid", strict: bool = True) -> GridSpec:
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected an object")
    fields = {"input_w", "input_h", "stride_pose", "stride_paf"}
    _check_keys(doc, fields, fields, path, strict)
    values = {}
    for key in fields:
        v = doc[key]
        if not isinstance(v, int) or isinstance(v, bool):
            raise FormatError(f"{path}.{key}: expected an integer")
        values[key] = v
    return GridSpec(**values)


def mask_to_doc(mask: np.ndarray) -> dict:
    rows = []
    for row in np.asarray(mask, dtype=int):
        runs = []
        value, run = int(row[0]), 0
        for v in row:
            if int(v) == value:
                run += 1
            else:
                runs.append([value, run])
                value, run = int(v), 1
        runs.append([value, run])
        rows.append(runs)
    h, w = mask.shape
    return {"encoding": "rle-rows", "width": w, "height": h, "rows": rows}


def doc_to_mask(doc, path: str = "composite_mask", strict: bool = True) -> np.ndarray:
    fields = {"encoding", "width", "height", "rows"}
    _check_keys(doc, fields, fields, path, strict)
    if doc["encoding"] != "rle-rows":
        raise FormatError(f"{path}.encoding: unsupported {doc['encoding']!r}")
    w, h = doc["width"], doc["height"]
    rows = doc["rows"]
    if len(rows) != h:
        raise FormatError(f"{path}.rows: expected {h} rows, got {len(rows)}")
    mask = np.zeros((h, w), dtype=np.int16)
    for y, runs in enumerate(rows):
        x = 0
        for value, run in runs:
            mask[y, x : x + run] = value
            x += run
        if x != w:
            raise FormatError(f"{path}.rows[{y}]: runs cover {x} of {w} columns")
    return mask


def person_to_doc(person: PersonGT) -> dict:
    return {
        "pose_parent_rel": person.pose_parent_rel.coords.tolist(),
        "joints_2d": person.joints_2d.tolist(),
        "root_depth": person.root_depth,
        "occluded": [bool(v) for v in person.occluded],
    }


def doc_to_person(doc, path: str, strict: bool) -> PersonGT:
    fields = {"pose_parent_rel", "joints_2d", "root_depth", "occluded"}
    _check_keys(doc, fields, fields, path, strict)
    pose = Pose3D(_floats(doc["pose_parent_rel"], (N_JOINTS, 3), f"{path}.pose_parent_rel"), PARENT_RELATIVE)
    joints_2d = _floats(doc["joints_2d"], (N_JOINTS, 2), f"{path}.joints_2d")
    occluded = doc["occluded"]
    if len(occluded) != N_JOINTS or not all(isinstance(v, bool) for v in occluded):
        raise FormatError(f"{path}.occluded: expected 17 booleans")
    root_depth = doc["root_depth"]
    if not isinstance(root_depth, (int, float)) or isinstance(root_depth, bool):
        raise FormatError(f"{path}.root_depth: expected a number")
    return PersonGT(pose, joints_2d, float(root_depth), np.array(occluded, dtype=bool))


def detection_to_doc(det: Detection2D) -> dict:
    joints = [
        None if det.confidences[j] == 0.0 else [float(det.joints_2d[j, 0]), float(det.joints_2d[j, 1])]
        for j in range(N_JOINTS)
    ]
    return {"joints_2d": joints, "confidences": [float(c) for c in det.confidences]}


def doc_to_detection(doc, path: str, strict: bool) -> Detection2D:
    fields = {"joints_2d", "confidences"}
    _check_keys(doc, fields, fields, path, strict)
    raw = doc["joints_2d"]
    if len(raw) != N_JOINTS:
        raise FormatError(f"{path}.joints_2d: expected 17 entries")
    joints = np.full((N_JOINTS, 2), np.nan)
    for j, entry in enumerate(raw):
        if entry is None:
            continue
        joints[j] = _floats(entry, (2,), f"{path}.joints_2d[{j}]")
    conf = _floats(doc["confidences"], (N_JOINTS,), f"{path}.confidences")
    return Detection2D(joints, conf)


def pose_result_to_doc(result: PoseResult) -> dict:
    return {
        "detected": result.detected,
        "pose_root_rel": result.pose.coords.tolist() if result.pose is not None else None,
        "provenance": list(result.provenance),
    }


def doc_to_pose_result(doc, path: str, strict: bool) -> PoseResult:
    fields = {"detected", "pose_root_rel", "provenance"}
    _check_keys(doc, fields, fields, path, strict)
    detected = doc["detected"]
    if not isinstance(detected, bool):
        raise FormatError(f"{path}.detected: expected a boolean")
    provenance = doc["provenance"]
    if len(provenance) != N_JOINTS or not all(p in _VALID_PROVENANCE for p in provenance):
        raise FormatError(f"{path}.provenance: expected 17 known tags")
    pose = None
    if doc["pose_root_rel"] is not None:
        pose = Pose3D(_floats(doc["pose_root_rel"], (N_JOINTS, 3), f"{path}.pose_root_rel"), ROOT_RELATIVE)
    if detected == (pose is None):
        raise FormatError(f"{path}: detected flag inconsistent with pose_root_rel")
    return PoseResult(detected, pose, tuple(provenance))


def _check_joint_names(doc, path: str):
    if tuple(doc) != JOINT_NAMES:
        raise FormatError(f"{path}: joint_names do not match the canonical order")


def scene_to_doc(
    scene: SceneGT,
    composite_mask: np.ndarray | None = None,
    detections: list[Detection2D] | None = None,
    poses: list[PoseResult] | None = None,
) -> dict:
    doc = {
        "format": SCENE_FORMAT,
        "version": DOC_VERSION,
        "joint_names": list(JOINT_NAMES),
        "grid": grid_to_doc(scene.grid),
        "persons": [person_to_doc(p) for p in scene.persons],
    }
    if composite_mask is not None:
        doc["composite_mask"] = mask_to_doc(composite_mask)
    if detections is not None:
        doc["detections"] = [detection_to_doc(d) for d in detections]
    if poses is not None:
        doc["poses"] = [pose_result_to_doc(r) for r in poses]
    return doc


@dataclass(frozen=True)
class ParsedScene:
    scene: SceneGT
    composite_mask: np.ndarray | None
    detections: list[Detection2D] | None
    poses: list[PoseResult] | None


def parse_scene_doc(doc: dict, strict: bool = True) -> ParsedScene:
    allowed = {
        "format",
        "version",
        "joint_names",
        "grid",
        "persons",
        "composite_mask",
        "detections",
        "poses",
    }
    required = {"format", "version", "joint_names", "grid", "persons"}
    _check_keys(doc, allowed, required, "scene", strict)
    if doc["format"] != SCENE_FORMAT:
        raise FormatError(f"scene.format: expected {SCENE_FORMAT!r}, got {doc['format']!r}")
    if doc["version"] != DOC_VERSION:
        raise FormatError(f"scene.version: unsupported {doc['version']!r}")
    _check_joint_names(doc["joint_names"], "scene.joint_names")
    grid = doc_to_grid(doc["grid"], "scene.grid", strict)
    persons = tuple(
        doc_to_person(p, f"scene.persons[{i}]", strict) for i, p in enumerate(doc["persons"])
    )
    mask = None
    if "composite_mask" in doc:
        mask = doc_to_mask(doc["composite_mask"], "scene.composite_mask", strict)
        if mask.shape != (grid.input_h, grid.input_w):
            raise FormatError("scene.composite_mask: size does not match the grid")
    detections = None
    if "detections" in doc:
        detections = [
            doc_to_detection(d, f"scene.detections[{i}]", strict)
            for i, d in enumerate(doc["detections"])
        ]
    poses = None
    if "poses" in doc:
        poses = [
            doc_to_pose_result(p, f"scene.poses[{i}]", strict)
            for i, p in enumerate(doc["poses"])
        ]
    return ParsedScene(SceneGT(grid, persons), mask, detections, poses)


def poses_to_doc(grid: GridSpec, detections: list[Detection2D], poses: list[PoseResult]) -> dict:
    if len(detections) != len(poses):
        raise FormatError("detections and poses must be parallel lists")
    return {
        "format": POSES_FORMAT,
        "version": DOC_VERSION,
        "joint_names": list(JOINT_NAMES),
        "grid": grid_to_doc(grid),
        "detections": [detection_to_doc(d) for d in detections],
        "poses": [pose_result_to_doc(r) for r in poses],
    }


@dataclass(frozen=True)
class ParsedPoses:
    grid: GridSpec
    detections: list[Detection2D]
    poses: list[PoseResult]


def parse_poses_doc(doc: dict, strict: bool = True) -> ParsedPoses:
    allowed = {"format", "version", "joint_names", "grid", "detections", "poses"}
    _check_keys(doc, allowed, allowed, "poses", strict)
    if doc["format"] != POSES_FORMAT:
        raise FormatError(f"poses.format: expected {POSES_FORMAT!r}, got {doc['format']!r}")
    if doc["version"] != DOC_VERSION:
        raise FormatError(f"poses.version: unsupported {doc['version']!r}")
    _check_joint_names(doc["joint_names"], "poses.joint_names")
    grid = doc_to_grid(doc["grid"], "poses.grid", strict)
    detections = [
        doc_to_detection(d, f"poses.detections[{i}]", strict)
        for i, d in enumerate(doc["detections"])
    ]
    poses = [
        doc_to_pose_result(p, f"poses.poses[{i}]", strict)
        for i, p in enumerate(doc["poses"])
    ]
    if len(detections) != len(poses):
        raise FormatError("poses: detections and poses must be parallel lists")
    return ParsedPoses(grid, detections, poses)
