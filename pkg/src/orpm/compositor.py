"""Depth-aware compositing of masked single-person records into annotated
multi-person scenes.

Persons are layered far to near by root depth; the resulting label raster
drives per-joint inter-person occlusion flags.  Geometric augmentation is a
2D similarity transform about the image center applied jointly to the mask
and the projections, lifted back to camera space at each joint's original
depth so the record stays self-consistent.  Only inter-person occlusion and
frame truncation are annotated; self-occlusion is out of reach of masks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .maps import GridSpec, PersonGT, SceneGT
from .skeleton import (
    N_JOINTS,
    ROOT_RELATIVE,
    Joint,
    Pose3D,
    to_parent_relative,
)


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics, pixels."""

    fx: float
    fy: float
    cx: float
    cy: float


def project(joint_cam, camera: Camera) -> np.ndarray:
    """Pinhole projection of camera-space points (meters) to pixels."""
    pts = np.asarray(joint_cam, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if (pts[:, 2] <= 0).any():
        raise ContractError("cannot project points at depth <= 0")
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = camera.fx * pts[:, 0] / pts[:, 2] + camera.cx
    out[:, 1] = camera.fy * pts[:, 1] / pts[:, 2] + camera.cy
    return out[0] if single else out


def unproject(loc_px, depth: float, camera: Camera) -> np.ndarray:
    """Back-project a pixel to camera space at a known depth."""
    if depth <= 0:
        raise ContractError("depth must be positive")
    x = (loc_px[0] - camera.cx) * depth / camera.fx
    y = (loc_px[1] - camera.cy) * depth / camera.fy
    return np.array([x, y, depth])


@dataclass(frozen=True, eq=False)
class PersonRecord:
    """A masked single-person observation with camera-space joints."""

    mask: np.ndarray  # (H, W) bool, input resolution
    joints_cam: np.ndarray  # (17, 3) meters
    camera: Camera

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        joints = np.asarray(self.joints_cam, dtype=np.float64)
        if mask.ndim != 2 or not mask.any():
            raise ContractError("mask must be a nonempty 2D raster")
        if joints.shape != (N_JOINTS, 3):
            raise ContractError("joints_cam must have shape (17, 3)")
        if (joints[:, 2] <= 0).any():
            raise ContractError("joints_cam must lie in front of the camera")
        mask = mask.copy()
        mask.flags.writeable = False
        joints = joints.copy()
        joints.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "joints_cam", joints)

    @property
    def root_depth(self) -> float:
        return float(self.joints_cam[Joint.PELVIS, 2])

    @property
    def joints_2d(self) -> np.ndarray:
        return project(self.joints_cam, self.camera)

    @property
    def pose_parent_rel(self) -> Pose3D:
        root_rel = self.joints_cam - self.joints_cam[Joint.PELVIS]
        return to_parent_relative(Pose3D(root_rel, ROOT_RELATIVE))


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0
    scale: float = 1.0
    jitter_px: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class AugmentRanges:
    """Symmetric sampling ranges for per-record augmentation."""

    rotation_max_deg: float = 0.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    jitter_max_px: float = 0.0

    def sample(self, rng: np.random.Generator) -> AugmentParams:
        rotation = float(rng.uniform(-self.rotation_max_deg, self.rotation_max_deg))
        scale = float(rng.uniform(*self.scale_range))
        jitter = (
            float(rng.uniform(-self.jitter_max_px, self.jitter_max_px)),
            float(rng.uniform(-self.jitter_max_px, self.jitter_max_px)),
        )
        return AugmentParams(rotation, scale, jitter)


def _similarity(params: AugmentParams, center: np.ndarray):
    theta = np.deg2rad(params.rotation_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    offset = np.asarray(params.jitter_px, dtype=np.float64)

    def forward(pts):
        return (pts - center) @ (params.scale * rot).T + center + offset

    def inverse(pts):
        return (pts - center - offset) @ (rot / params.scale) + center

    return forward, inverse


def augment(rec: PersonRecord, params: AugmentParams) -> PersonRecord:
    """Similarity-transform a record in the image plane.

    Rotation and scale act about the image center and jitter translates;
    the mask is resampled nearest-neighbor, and each joint is lifted back
    to camera space at its original depth so projections of `joints_cam`
    reproduce the transformed 2D locations exactly.  Truncation by the
    frame boundary is allowed.
    """
    if params.scale <= 0:
        raise ContractError("scale must be positive")
    if params == AugmentParams():
        return rec
    h, w = rec.mask.shape
    center = np.array([w / 2.0, h / 2.0])
    forward, inverse = _similarity(params, center)

    ys, xs = np.mgrid[0:h, 0:w]
    out_centers = np.stack([xs + 0.5, ys + 0.5], axis=-1).reshape(-1, 2)
    src = inverse(out_centers)
    sx = np.floor(src[:, 0]).astype(int)
    sy = np.floor(src[:, 1]).astype(int)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    mask = np.zeros(h * w, dtype=bool)
    mask[valid] = rec.mask[sy[valid], sx[valid]]

    new_2d = forward(project(rec.joints_cam, rec.camera))
    depths = rec.joints_cam[:, 2]
    joints_cam = np.stack(
        [unproject(new_2d[j], depths[j], rec.camera) for j in range(N_JOINTS)]
    )
    return PersonRecord(mask.reshape(h, w), joints_cam, rec.camera)


@dataclass(frozen=True, eq=False)
class ComposedScene:
    """Scene ground truth plus the label raster behind its occlusion flags.

    `composite_mask` holds 0 for background and `i + 1` where person `i`
    (index into `scene_gt.persons`) is the nearest person covering the
    pixel.  `layers` keeps the augmented records in person order.
    """

    scene_gt: SceneGT
    composite_mask: np.ndarray  # (H, W) int16
    layers: tuple[PersonRecord, ...]

    def __post_init__(self):
        mask = np.asarray(self.composite_mask, dtype=np.int16).copy()
        mask.flags.writeable = False
        object.__setattr__(self, "composite_mask", mask)
        object.__setattr__(self, "layers", tuple(self.layers))


def _occlusion_flags(
    joints_2d: np.ndarray,
    depths: np.ndarray,
    composite: np.ndarray,
    grid: GridSpec,
) -> np.ndarray:
    """Joint occluded iff truncated by the frame or covered by a strictly
    nearer person in the label raster."""
    m = joints_2d.shape[0]
    flags = np.zeros((m, N_JOINTS), dtype=bool)
    for i in range(m):
        for j in range(N_JOINTS):
            x, y = joints_2d[i, j]
            if not (0 <= x < grid.input_w and 0 <= y < grid.input_h):
                flags[i, j] = True
                continue
            label = composite[int(np.floor(y)), int(np.floor(x))]
            if label != 0 and label != i + 1 and depths[label - 1] < depths[i]:
                flags[i, j] = True
    return flags


def annotate_occlusion(scene: ComposedScene) -> np.ndarray:
    """Recompute per-person, per-joint occlusion flags from the label raster."""
    persons = scene.scene_gt.persons
    joints_2d = np.stack([p.joints_2d for p in persons])
    depths = np.array([p.root_depth for p in persons])
    return _occlusion_flags(joints_2d, depths, scene.composite_mask, scene.scene_gt.grid)


def compose_scene(
    records: list[PersonRecord],
    grid: GridSpec,
    seed: int = 0,
    aug: AugmentRanges | None = None,
) -> ComposedScene:
    """Paint person records far to near into a labelled composite and emit
    the matching scene ground truth.

    The seed drives only augmentation sampling, so identical records, seed,
    and ranges produce identical scenes.  Depth placement is a property of
    the records themselves (masks are rendered at their depth).
    """
    if not records:
        raise ContractError("compose_scene needs at least one record")
    for rec in records:
        if rec.mask.shape != (grid.input_h, grid.input_w):
            raise ContractError(
                f"record mask {rec.mask.shape} does not match grid "
                f"{(grid.input_h, grid.input_w)}"
            )
    rng = np.random.default_rng(seed)
    if aug is not None:
        records = [augment(rec, aug.sample(rng)) for rec in records]

    composite = np.zeros((grid.input_h, grid.input_w), dtype=np.int16)
    depths = np.array([rec.root_depth for rec in records])
    paint_order = sorted(range(len(records)), key=lambda i: (-depths[i], -i))
    for i in paint_order:
        composite[records[i].mask] = i + 1

    joints_2d = np.stack([rec.joints_2d for rec in records])
    flags = _occlusion_flags(joints_2d, depths, composite, grid)
    persons = tuple(
        PersonGT(
            pose_parent_rel=rec.pose_parent_rel,
            joints_2d=joints_2d[i],
            root_depth=depths[i],
            occluded=flags[i],
        )
        for i, rec in enumerate(records)
    )
    return ComposedScene(SceneGT(grid, persons), composite, tuple(records))
