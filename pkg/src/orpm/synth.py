"""Built-in synthetic person records and scene samplers.

Records are desk-scale stand-ins for motion-capture data: an articulated
17-joint pose posed fronto-parallel at a sampled depth, with a silhouette
mask rasterized as a union of capsules around the projected bones.  Scene
samplers layer several records with controllable separation so tests can
force isolation, overlap, or same-type joint collisions without any
external dataset.
"""

import numpy as np

from .compositor import (
    AugmentParams,
    AugmentRanges,
    Camera,
    ComposedScene,
    PersonRecord,
    augment,
    compose_scene,
    project,
    unproject,
)
from .errors import ContractError
from .maps import DEFAULT_GRID, GridSpec
from .skeleton import (
    PARENT_INDEX,
    PARENT_RELATIVE,
    Joint,
    Pose3D,
    readout_sites,
    to_root_relative,
)

# Parent-relative offsets (meters) of a neutral standing pose; +y is down.
_TEMPLATE = np.zeros((17, 3))
_TEMPLATE[Joint.SPINE] = (0.0, -0.25, 0.0)
_TEMPLATE[Joint.NECK] = (0.0, -0.25, 0.0)
_TEMPLATE[Joint.HEAD] = (0.0, -0.12, 0.0)
_TEMPLATE[Joint.HEAD_TOP] = (0.0, -0.13, 0.0)
_TEMPLATE[Joint.SHOULDER_L] = (0.18, 0.02, 0.0)
_TEMPLATE[Joint.ELBOW_L] = (0.05, 0.26, 0.0)
_TEMPLATE[Joint.WRIST_L] = (0.03, 0.25, 0.0)
_TEMPLATE[Joint.SHOULDER_R] = (-0.18, 0.02, 0.0)
_TEMPLATE[Joint.ELBOW_R] = (-0.05, 0.26, 0.0)
_TEMPLATE[Joint.WRIST_R] = (-0.03, 0.25, 0.0)
_TEMPLATE[Joint.HIP_L] = (0.10, 0.02, 0.0)
_TEMPLATE[Joint.KNEE_L] = (0.02, 0.42, 0.0)
_TEMPLATE[Joint.ANKLE_L] = (0.0, 0.40, 0.0)
_TEMPLATE[Joint.HIP_R] = (-0.10, 0.02, 0.0)
_TEMPLATE[Joint.KNEE_R] = (-0.02, 0.42, 0.0)
_TEMPLATE[Joint.ANKLE_R] = (0.0, 0.40, 0.0)
_TEMPLATE.flags.writeable = False

# Swing ranges (radians) per articulated bone at articulation = 1.
_SWING = {
    Joint.ELBOW_L: 0.7,
    Joint.WRIST_L: 0.7,
    Joint.ELBOW_R: 0.7,
    Joint.WRIST_R: 0.7,
    Joint.KNEE_L: 0.3,
    Joint.ANKLE_L: 0.3,
    Joint.KNEE_R: 0.3,
    Joint.ANKLE_R: 0.3,
    Joint.HEAD: 0.15,
    Joint.HEAD_TOP: 0.15,
}
_TILT_MAX = 0.25  # out-of-plane swing toward/away from the camera

# Capsule radii (meters) for silhouette rasterization, keyed by child joint.
_BONE_RADIUS = {
    Joint.SPINE: 0.11,
    Joint.NECK: 0.10,
    Joint.HEAD: 0.07,
    Joint.HEAD_TOP: 0.09,
    Joint.SHOULDER_L: 0.06,
    Joint.SHOULDER_R: 0.06,
    Joint.ELBOW_L: 0.045,
    Joint.ELBOW_R: 0.045,
    Joint.WRIST_L: 0.04,
    Joint.WRIST_R: 0.04,
    Joint.HIP_L: 0.07,
    Joint.HIP_R: 0.07,
    Joint.KNEE_L: 0.055,
    Joint.KNEE_R: 0.055,
    Joint.ANKLE_L: 0.05,
    Joint.ANKLE_R: 0.05,
}

def default_camera(grid: GridSpec) -> Camera:
    return Camera(fx=210.0, fy=210.0, cx=grid.input_w / 2.0, cy=grid.input_h / 2.0)


def _rot_z(v, theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])


def _rot_x(v, phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]])


def articulated_pose(rng: np.random.Generator, articulation: float = 0.8) -> Pose3D:
    """Template pose with seeded limb articulation; bone lengths preserved."""
    coords = _TEMPLATE.copy()
    for j, swing in _SWING.items():
        theta = rng.uniform(-swing, swing) * articulation
        phi = rng.uniform(-_TILT_MAX, _TILT_MAX) * articulation
        coords[j] = _rot_x(_rot_z(coords[j], theta), phi)
    return Pose3D(coords, PARENT_RELATIVE)


def silhouette_mask(joints_cam: np.ndarray, camera: Camera, grid: GridSpec) -> np.ndarray:
    """Union of capsules around the projected bones, radii scaled by depth."""
    mask = np.zeros((grid.input_h, grid.input_w), dtype=bool)
    joints_px = project(joints_cam, camera)
    for j, radius_m in _BONE_RADIUS.items():
        p = PARENT_INDEX[j]
        a, b = joints_px[p], joints_px[j]
        z_mid = (joints_cam[p, 2] + joints_cam[j, 2]) / 2.0
        radius = radius_m * camera.fx / z_mid
        _paint_capsule(mask, a, b, radius)
    return mask


def _paint_capsule(mask: np.ndarray, a: np.ndarray, b: np.ndarray, radius: float) -> None:
    h, w = mask.shape
    lo = np.floor(np.minimum(a, b) - radius).astype(int)
    hi = np.ceil(np.maximum(a, b) + radius).astype(int)
    x0, x1 = max(lo[0], 0), min(hi[0] + 1, w)
    y0, y1 = max(lo[1], 0), min(hi[1] + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    gx, gy = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    seg = b - a
    len2 = float(seg @ seg)
    if len2 == 0.0:
        d2 = (gx - a[0]) ** 2 + (gy - a[1]) ** 2
    else:
        t = np.clip(((gx - a[0]) * seg[0] + (gy - a[1]) * seg[1]) / len2, 0.0, 1.0)
        d2 = (gx - (a[0] + t * seg[0])) ** 2 + (gy - (a[1] + t * seg[1])) ** 2
    mask[y0:y1, x0:x1] |= d2 <= radius**2


def make_person_record(
    grid: GridSpec,
    camera: Camera,
    pose_parent_rel: Pose3D,
    depth: float,
    center_px,
) -> PersonRecord:
    """Place a pose fronto-parallel with its pelvis projecting to `center_px`
    at the given depth, and rasterize its silhouette."""
    root_rel = to_root_relative(pose_parent_rel)
    pelvis_cam = unproject(center_px, depth, camera)
    joints_cam = root_rel.coords + pelvis_cam
    mask = silhouette_mask(joints_cam, camera, grid)
    return PersonRecord(mask, joints_cam, camera)


def sample_person_record(
    rng: np.random.Generator,
    grid: GridSpec,
    camera: Camera,
    depth_range: tuple[float, float],
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    articulation: float = 0.8,
) -> PersonRecord:
    depth = float(rng.uniform(*depth_range))
    center = (float(rng.uniform(*x_range)), float(rng.uniform(*y_range)))
    pose = articulated_pose(rng, articulation)
    return make_person_record(grid, camera, pose, depth, center)


def generate_scene(
    seed: int,
    grid: GridSpec = DEFAULT_GRID,
    n_persons: int = 2,
    depth_range: tuple[float, float] | None = None,
    articulation: float = 0.8,
    camera: Camera | None = None,
    aug: AugmentRanges | None = None,
) -> ComposedScene:
    """Random multi-person scene; placement is uniform with the pelvis kept
    in frame, occlusion left to chance."""
    if not 1 <= n_persons <= 4:
        raise ContractError("scenes hold 1 to 4 persons")
    camera = camera or default_camera(grid)
    depth_range = depth_range or (3.0 + 0.4 * (n_persons - 1), 4.6)
    rng = np.random.default_rng(seed)
    margin_x = 0.18 * grid.input_w
    y_lo, y_hi = 0.45 * grid.input_h, 0.55 * grid.input_h
    records = [
        sample_person_record(
            rng, grid, camera, depth_range, (margin_x, grid.input_w - margin_x), (y_lo, y_hi), articulation
        )
        for _ in range(n_persons)
    ]
    return compose_scene(records, grid, seed=seed, aug=aug)


def _cross_person_min_sep(scene: ComposedScene) -> float:
    """Smallest 2D distance between any joints of different persons."""
    persons = scene.scene_gt.persons
    if len(persons) < 2:
        return np.inf
    best = np.inf
    for i in range(len(persons)):
        for k in range(i + 1, len(persons)):
            d = persons[i].joints_2d[:, None, :] - persons[k].joints_2d[None, :, :]
            best = min(best, float(np.sqrt((d**2).sum(axis=-1)).min()))
    return best


def _bones_resolve_cells(scene: ComposedScene) -> bool:
    """True when every bone's endpoints land in distinct pose-grid cells, so
    detection-center segments keep a direction."""
    stride = scene.scene_gt.grid.stride_pose
    for p in scene.scene_gt.persons:
        cells = np.floor(p.joints_2d / stride).astype(int)
        for j in Joint:
            par = PARENT_INDEX[j]
            if par >= 0 and (cells[j] == cells[par]).all():
                return False
    return True


def _all_in_frame(scene: ComposedScene, margin: float = 3.0) -> bool:
    grid = scene.scene_gt.grid
    for p in scene.scene_gt.persons:
        x, y = p.joints_2d[:, 0], p.joints_2d[:, 1]
        if (x < margin).any() or (x >= grid.input_w - margin).any():
            return False
        if (y < margin).any() or (y >= grid.input_h - margin).any():
            return False
    return True


def generate_isolated_scene(
    seed: int,
    grid: GridSpec = DEFAULT_GRID,
    n_persons: int = 2,
    min_sep: float = 12.0,
    articulation: float = 0.8,
    depth_range: tuple[float, float] | None = None,
    camera: Camera | None = None,
    max_tries: int = 200,
) -> ComposedScene:
    """Scene whose persons are mutually unoccluded with every cross-person
    joint pair at least `min_sep` pixels apart (a superset of same-type
    separation), sampled by rejection.  Deterministic per seed."""
    if not 1 <= n_persons <= 4:
        raise ContractError("scenes hold 1 to 4 persons")
    camera = camera or default_camera(grid)
    rng = np.random.default_rng(seed)
    if depth_range is None:
        depth_lo = 3.0 + 0.45 * (n_persons - 1)
        depth_range = (depth_lo, depth_lo + 1.2)
    slot_w = grid.input_w / n_persons
    for _ in range(max_tries):
        records = []
        for s in range(n_persons):
            x_lo = s * slot_w + 0.38 * slot_w
            x_hi = (s + 1) * slot_w - 0.38 * slot_w
            records.append(
                sample_person_record(
                    rng,
                    grid,
                    camera,
                    depth_range,
                    (x_lo, max(x_hi, x_lo + 1e-6)),
                    (0.46 * grid.input_h, 0.54 * grid.input_h),
                    articulation,
                )
            )
        scene = compose_scene(records, grid, seed=seed)
        occluded = np.stack([p.occluded for p in scene.scene_gt.persons])
        if not _all_in_frame(scene):
            continue
        if occluded.any():
            continue
        if _cross_person_min_sep(scene) < min_sep:
            continue
        if not _bones_resolve_cells(scene):
            continue
        return scene
    raise ContractError(f"no isolated scene found for seed {seed} in {max_tries} tries")


def _handshake_pose(reach_sign: float, rng: np.random.Generator) -> Pose3D:
    """Articulated pose whose right arm is extended horizontally toward
    `reach_sign` (+1 reaches right in the image, -1 left)."""
    pose = articulated_pose(rng, articulation=0.5)
    coords = pose.coords.copy()
    coords[Joint.ELBOW_R] = (reach_sign * 0.25, 0.03, 0.0)
    coords[Joint.WRIST_R] = (reach_sign * 0.25, 0.02, 0.0)
    return Pose3D(coords, PARENT_RELATIVE)


def _readout_clearance(scene: ComposedScene, exclude: Joint) -> float:
    """Smallest distance between any person's joint (other than `exclude`)
    and the other persons' read-out sites of the same joint type.  Joints
    clearing this distance by the isolation threshold stay valid sites."""
    persons = scene.scene_gt.persons
    best = np.inf
    for i, pi in enumerate(persons):
        for k, pk in enumerate(persons):
            if i == k:
                continue
            for j in Joint:
                if j == exclude:
                    continue
                loc = pi.joints_2d[j]
                for site in readout_sites(pk.joints_2d, j):
                    best = min(best, float(np.hypot(site[0] - loc[0], site[1] - loc[1])))
    return best


def generate_collision_scene(
    seed: int,
    grid: GridSpec = DEFAULT_GRID,
    separation_px: float = 14.0,
    depth_delta: float = 0.6,
    min_clearance: float = 20.0,
    camera: Camera | None = None,
    max_tries: int = 200,
) -> ComposedScene:
    """Two persons reaching toward each other so their right wrists land
    exactly `separation_px` apart while every other joint keeps at least
    `min_clearance` from the other person's same-type read-out sites.  Used
    to force read-out site collisions and contested pose-map cells."""
    camera = camera or default_camera(grid)
    rng = np.random.default_rng(seed)
    w, h = grid.input_w, grid.input_h
    for _ in range(max_tries):
        depth_a = float(rng.uniform(3.2, 3.8))
        depth_b = depth_a + depth_delta
        ya = float(rng.uniform(0.47 * h, 0.53 * h))
        yb = float(rng.uniform(0.47 * h, 0.53 * h))
        rec_a = make_person_record(
            grid, camera, _handshake_pose(-1.0, rng), depth_a, (0.68 * w, ya)
        )
        rec_b = make_person_record(
            grid, camera, _handshake_pose(+1.0, rng), depth_b, (0.32 * w, yb)
        )
        wrist_a = project(rec_a.joints_cam[Joint.WRIST_R], camera)
        wrist_b = project(rec_b.joints_cam[Joint.WRIST_R], camera)
        delta = wrist_a + np.array([-separation_px, 0.0]) - wrist_b
        rec_b = augment(rec_b, AugmentParams(jitter_px=(float(delta[0]), float(delta[1]))))
        scene = compose_scene([rec_a, rec_b], grid, seed=seed)
        if not _all_in_frame(scene):
            continue
        if not _bones_resolve_cells(scene):
            continue
        pa, pb = scene.scene_gt.persons
        wrist_pair = float(
            np.hypot(*(pa.joints_2d[Joint.WRIST_R] - pb.joints_2d[Joint.WRIST_R]))
        )
        if abs(wrist_pair - separation_px) > 0.5:
            continue
        if _readout_clearance(scene, exclude=Joint.WRIST_R) < min_clearance:
            continue
        return scene
    raise ContractError(f"no collision scene found for seed {seed} in {max_tries} tries")
