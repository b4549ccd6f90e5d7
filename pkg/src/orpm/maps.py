"""Ground-truth map-stack encoding and sampling.

Produces the fixed-size stack a scene encoder emits regardless of person
count: one confidence heatmap, one 3-channel pose-map, and one 2-channel
part affinity field per joint type.  Pose-maps store each joint's
parent-relative 3D value at every read-out site of every person, with
depth-ordered conflict resolution (the person closer to the camera wins a
contested cell).

Conventions: pixel locations are (x, y); map arrays are indexed [y, x].
A pixel maps to a grid cell by floor division by the stride; values are
read back from the single nearest cell, never interpolated.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .skeleton import (
    N_JOINTS,
    PARENT_RELATIVE,
    Joint,
    Pose3D,
    parent,
    readout_sites,
)

# Gaussian peak width and write-disc extents, in grid cells.  Supports are
# hard-truncated so values outside them are exactly zero and adjacent-site
# windows stay separable at the default stride.
HEATMAP_SIGMA = 2.0
SUPPORT_SIGMAS = 3.0
ORPM_DISC_RADIUS = 2.0
LOSS_SIGMA = 2.0
PAF_HALF_WIDTH = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Input resolution and the down-sampling strides of the map stack."""

    input_w: int
    input_h: int
    stride_pose: int = 4
    stride_paf: int = 8

    def __post_init__(self):
        for stride in (self.stride_pose, self.stride_paf):
            if stride < 1:
                raise ContractError("strides must be >= 1")
            if self.input_w % stride or self.input_h % stride:
                raise ContractError(
                    f"stride {stride} must divide input size "
                    f"{self.input_w}x{self.input_h}"
                )

    @property
    def pose_shape(self) -> tuple[int, int]:
        """(rows, cols) of heatmaps and pose-maps."""
        return (self.input_h // self.stride_pose, self.input_w // self.stride_pose)

    @property
    def paf_shape(self) -> tuple[int, int]:
        return (self.input_h // self.stride_paf, self.input_w // self.stride_paf)


DEFAULT_GRID = GridSpec(256, 256, 4, 8)


@dataclass(frozen=True, eq=False)
class PersonGT:
    """Ground truth for one person in a scene."""

    pose_parent_rel: Pose3D
    joints_2d: np.ndarray  # (17, 2) pixels
    root_depth: float
    occluded: np.ndarray  # (17,) bool

    def __post_init__(self):
        if self.pose_parent_rel.frame != PARENT_RELATIVE:
            raise ContractError("person pose must be parent_relative")
        joints_2d = np.asarray(self.joints_2d, dtype=np.float64)
        occluded = np.asarray(self.occluded, dtype=bool)
        if joints_2d.shape != (N_JOINTS, 2):
            raise ContractError("joints_2d must have shape (17, 2)")
        if occluded.shape != (N_JOINTS,):
            raise ContractError("occluded must have shape (17,)")
        if not np.isfinite(joints_2d).all():
            raise ContractError("joints_2d must be finite")
        if not self.root_depth > 0:
            raise ContractError("root_depth must be positive")
        joints_2d = joints_2d.copy()
        joints_2d.flags.writeable = False
        occluded = occluded.copy()
        occluded.flags.writeable = False
        object.__setattr__(self, "joints_2d", joints_2d)
        object.__setattr__(self, "occluded", occluded)


@dataclass(frozen=True, eq=False)
class SceneGT:
    grid: GridSpec
    persons: tuple[PersonGT, ...]

    def __post_init__(self):
        if len(self.persons) < 1:
            raise ContractError("a scene needs at least one person")
        object.__setattr__(self, "persons", tuple(self.persons))


@dataclass(frozen=True, eq=False)
class MapStack:
    """The fixed-count output stack: n heatmaps, n 3-channel pose-maps,
    n 2-channel affinity fields, shapes independent of person count.

    `writer_ids` records, per pose-map cell, which person's value occupies
    it (-1 where unwritten); it exists for verification and is not part of
    the serialized stack.
    """

    grid: GridSpec
    heatmaps: np.ndarray  # (17, Hp, Wp) float32 in [0, 1]
    orpms: np.ndarray  # (17, Hp, Wp, 3) float32, meters
    pafs: np.ndarray  # (17, Ha, Wa, 2) float32, unit-vector field
    writer_ids: np.ndarray | None = None  # (17, Hp, Wp) int16

    def __post_init__(self):
        hp, wp = self.grid.pose_shape
        ha, wa = self.grid.paf_shape
        if self.heatmaps.shape != (N_JOINTS, hp, wp):
            raise ContractError(f"heatmaps shape {self.heatmaps.shape} != {(N_JOINTS, hp, wp)}")
        if self.orpms.shape != (N_JOINTS, hp, wp, 3):
            raise ContractError(f"orpms shape {self.orpms.shape} != {(N_JOINTS, hp, wp, 3)}")
        if self.pafs.shape != (N_JOINTS, ha, wa, 2):
            raise ContractError(f"pafs shape {self.pafs.shape} != {(N_JOINTS, ha, wa, 2)}")
        if self.heatmaps.min() < 0.0 or self.heatmaps.max() > 1.0:
            raise ContractError("heatmap values must lie in [0, 1]")
        for name in ("heatmaps", "orpms", "pafs", "writer_ids"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def pixel_to_cell(loc_px, stride: int) -> tuple[int, int]:
    """Grid cell (x, y) containing a pixel location, by floor division."""
    return (int(np.floor(loc_px[0] / stride)), int(np.floor(loc_px[1] / stride)))


def cell_center_px(cell, stride: int) -> tuple[float, float]:
    """Pixel location of a grid cell's center."""
    return ((cell[0] + 0.5) * stride, (cell[1] + 0.5) * stride)


def sample_map(grid_array: np.ndarray, loc_px, stride: int):
    """Nearest-cell read of a map at an input-pixel location."""
    h, w = grid_array.shape[:2]
    x, y = float(loc_px[0]), float(loc_px[1])
    if not (0 <= x < w * stride and 0 <= y < h * stride):
        raise ContractError(f"location {(x, y)} outside the {w * stride}x{h * stride} image")
    cx, cy = pixel_to_cell((x, y), stride)
    return grid_array[cy, cx]


def _paint_order(persons) -> list[int]:
    """Person indices sorted far to near; depth ties paint the lower index
    last so it wins contested cells."""
    return sorted(range(len(persons)), key=lambda i: (-persons[i].root_depth, -i))


def _in_bounds(loc_px, grid: GridSpec) -> bool:
    x, y = loc_px
    return 0 <= x < grid.input_w and 0 <= y < grid.input_h


def _disc_cells(center_cell, radius: float, shape):
    """Cells within `radius` of a center cell, clipped to the map."""
    h, w = shape
    cx, cy = center_cell
    r = int(np.floor(radius))
    xs = np.arange(max(cx - r, 0), min(cx + r + 1, w))
    ys = np.arange(max(cy - r, 0), min(cy + r + 1, h))
    if xs.size == 0 or ys.size == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    gx, gy = np.meshgrid(xs, ys)
    keep = (gx - cx) ** 2 + (gy - cy) ** 2 <= radius**2
    return gx[keep], gy[keep]


def heatmap_target(scene: SceneGT) -> np.ndarray:
    """Per-joint confidence maps: unit-peak Gaussians with limited support
    at every un-truncated joint, combined across persons by maximum."""
    grid = scene.grid
    hp, wp = grid.pose_shape
    out = np.zeros((N_JOINTS, hp, wp), dtype=np.float32)
    radius = SUPPORT_SIGMAS * HEATMAP_SIGMA
    for person in scene.persons:
        for j in Joint:
            loc = person.joints_2d[j]
            if not _in_bounds(loc, grid):
                continue
            cx, cy = pixel_to_cell(loc, grid.stride_pose)
            xs, ys = _disc_cells((cx, cy), radius, (hp, wp))
            d2 = (xs - cx) ** 2 + (ys - cy) ** 2
            g = np.exp(-d2 / (2.0 * HEATMAP_SIGMA**2)).astype(np.float32)
            out[j, ys, xs] = np.maximum(out[j, ys, xs], g)
    return out


def paf_target(scene: SceneGT) -> np.ndarray:
    """Per-joint 2-channel fields: the unit direction from each joint to its
    parent, written in a band of fixed half-width along the 2D segment.
    Cells claimed by several persons hold the vector average."""
    grid = scene.grid
    ha, wa = grid.paf_shape
    acc = np.zeros((N_JOINTS, ha, wa, 2), dtype=np.float64)
    count = np.zeros((N_JOINTS, ha, wa), dtype=np.int32)
    stride = grid.stride_paf
    for person in scene.persons:
        for j in Joint:
            p = parent(j)
            if p is None:
                continue
            a = person.joints_2d[j] / stride
            b = person.joints_2d[p] / stride
            seg = b - a
            length = float(np.hypot(*seg))
            if length == 0.0:
                continue  # no direction defined
            direction = seg / length
            lo = np.floor(np.minimum(a, b) - PAF_HALF_WIDTH - 1).astype(int)
            hi = np.ceil(np.maximum(a, b) + PAF_HALF_WIDTH + 1).astype(int)
            xs = np.arange(max(lo[0], 0), min(hi[0] + 1, wa))
            ys = np.arange(max(lo[1], 0), min(hi[1] + 1, ha))
            if xs.size == 0 or ys.size == 0:
                continue
            gx, gy = np.meshgrid(xs + 0.5, ys + 0.5)  # cell centers
            rel_x = gx - a[0]
            rel_y = gy - a[1]
            along = np.clip(rel_x * direction[0] + rel_y * direction[1], 0.0, length)
            d2 = (rel_x - along * direction[0]) ** 2 + (rel_y - along * direction[1]) ** 2
            band = d2 <= PAF_HALF_WIDTH**2
            iy, ix = np.nonzero(band)
            acc[j, ys[iy], xs[ix]] += direction
            count[j, ys[iy], xs[ix]] += 1
    written = count > 0
    acc[written] /= count[written][:, None]
    return acc.astype(np.float32)


def encode_orpm(scene: SceneGT) -> tuple[np.ndarray, np.ndarray]:
    """Occlusion-robust pose-maps plus the companion writer-id grid.

    Persons are painted far to near; for every joint the person's
    parent-relative 3D value fills a disc around each of its read-out
    sites, so nearer persons overwrite farther ones cell by cell.
    """
    grid = scene.grid
    hp, wp = grid.pose_shape
    orpms = np.zeros((N_JOINTS, hp, wp, 3), dtype=np.float32)
    writer = np.full((N_JOINTS, hp, wp), -1, dtype=np.int16)
    for i in _paint_order(scene.persons):
        person = scene.persons[i]
        for j in Joint:
            value = person.pose_parent_rel.coords[j].astype(np.float32)
            for site in readout_sites(person.joints_2d, j):
                if not _in_bounds(site, grid):
                    continue
                cell = pixel_to_cell(site, grid.stride_pose)
                xs, ys = _disc_cells(cell, ORPM_DISC_RADIUS, (hp, wp))
                orpms[j, ys, xs] = value
                writer[j, ys, xs] = i
    return orpms, writer


def encode_scene(scene: SceneGT) -> MapStack:
    """Full oracle encoding of a ground-truth scene."""
    orpms, writer = encode_orpm(scene)
    return MapStack(
        grid=scene.grid,
        heatmaps=heatmap_target(scene),
        orpms=orpms,
        pafs=paf_target(scene),
        writer_ids=writer,
    )


def orpm_loss(pred: MapStack, target: MapStack, scene: SceneGT) -> float:
    """Gaussian-weighted squared pose-map error over every read-out site's
    support window, summed across persons, joints, and sites."""
    if pred.orpms.shape != target.orpms.shape:
        raise ContractError(
            f"pose-map shape mismatch: {pred.orpms.shape} vs {target.orpms.shape}"
        )
    grid = scene.grid
    hp, wp = grid.pose_shape
    radius = SUPPORT_SIGMAS * LOSS_SIGMA
    diff2 = (pred.orpms.astype(np.float64) - target.orpms.astype(np.float64)) ** 2
    diff2 = diff2.sum(axis=-1)  # (17, Hp, Wp)
    total = 0.0
    for person in scene.persons:
        for j in Joint:
            for site in readout_sites(person.joints_2d, j):
                if not _in_bounds(site, grid):
                    continue
                cx, cy = pixel_to_cell(site, grid.stride_pose)
                xs, ys = _disc_cells((cx, cy), radius, (hp, wp))
                d2 = (xs - cx) ** 2 + (ys - cy) ** 2
                weights = np.exp(-d2 / (2.0 * LOSS_SIGMA**2))
                total += float((weights * diff2[j, ys, xs]).sum())
    return total
