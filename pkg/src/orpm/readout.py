"""Hierarchical occlusion-aware 3D pose read-out.

A complete base pose is sampled at one torso anchor (neck, else pelvis);
each limb is then refined by re-reading the whole limb at its most distal
valid joint.  A joint location is a valid read-out site only when its
detection confidence clears a threshold and it is sufficiently isolated
from every read-out site of the same joint type belonging to other people.
"""

from dataclasses import dataclass, replace

import numpy as np

from .association import Detection2D
from .errors import ContractError
from .maps import MapStack, sample_map
from .skeleton import (
    LIMBS,
    N_JOINTS,
    PARENT_RELATIVE,
    Joint,
    Limb,
    Pose3D,
    limb_of,
    to_root_relative,
)

PROV_TORSO_BASE = "torso_base"
PROV_UNDETECTED = "undetected_person"


def prov_limb_at(j: Joint) -> str:
    return f"limb_at_{Joint(j).name.lower()}"


@dataclass(frozen=True)
class ReadoutConfig:
    """Thresholds governing read-out site validity.

    `t_d` of None resolves to twice the pose-map stride, tying isolation to
    map resolution.  `torso_only` skips limb refinement (ablation mode).
    """

    t_c: float = 0.1
    t_d: float | None = None
    torso_priority: tuple[Joint, Joint] = (Joint.NECK, Joint.PELVIS)
    torso_only: bool = False

    def __post_init__(self):
        if not 0.0 < self.t_c < 1.0:
            raise ContractError("t_c must lie in (0, 1)")
        if self.t_d is not None and self.t_d < 0.0:
            raise ContractError("t_d must be >= 0")

    def resolved(self, stride_pose: int) -> "ReadoutConfig":
        if self.t_d is not None:
            return self
        return replace(self, t_d=2.0 * stride_pose)


@dataclass(frozen=True)
class PoseResult:
    """A read-out pose with per-joint provenance tags."""

    detected: bool
    pose: Pose3D | None  # root_relative when detected
    provenance: tuple[str, ...]

    def __post_init__(self):
        if len(self.provenance) != N_JOINTS:
            raise ContractError("provenance must cover all 17 joints")
        if self.detected and self.pose is None:
            raise ContractError("detected results need a pose")
        if not self.detected and self.pose is not None:
            raise ContractError("undetected results carry no pose")


def detection_readout_sites(det: Detection2D, j: Joint) -> tuple[tuple[float, float], ...]:
    """Read-out sites of joint `j` available in a detection: torso anchors
    plus the joint's limb members, restricted to detected joints."""
    limb = limb_of(j)
    members = limb.members if limb is not None else ()
    sites: list[tuple[float, float]] = []
    for k in (Joint.NECK, Joint.PELVIS, *members):
        if not det.has_joint(k):
            continue
        loc = (float(det.joints_2d[k, 0]), float(det.joints_2d[k, 1]))
        if loc not in sites:
            sites.append(loc)
    return tuple(sites)


def is_valid_readout(
    det: Detection2D,
    all_dets: list[Detection2D],
    j: Joint,
    cfg: ReadoutConfig,
) -> bool:
    """True iff joint `j` of `det` clears the confidence threshold and lies
    at least `t_d` pixels from every read-out site of joint `j` of every
    other detection."""
    if cfg.t_d is None:
        raise ContractError("t_d is unresolved; call cfg.resolved(stride) first")
    if not det.confidences[j] > cfg.t_c:
        return False
    loc = det.joints_2d[j]
    for other in all_dets:
        if other is det:
            continue
        for site in detection_readout_sites(other, j):
            if np.hypot(site[0] - loc[0], site[1] - loc[1]) < cfg.t_d:
                return False
    return True


def read_base_pose(
    det: Detection2D,
    maps: MapStack,
    cfg: ReadoutConfig,
    all_dets: list[Detection2D] | None = None,
) -> tuple[Pose3D, Joint] | None:
    """Sample every joint's pose-map at the first valid torso anchor.

    Returns the parent-relative base pose and the anchor used, or None when
    both anchors are invalid (the person is treated as not visible).
    """
    all_dets = all_dets if all_dets is not None else [det]
    cfg = cfg.resolved(maps.grid.stride_pose)
    for anchor in cfg.torso_priority:
        if not is_valid_readout(det, all_dets, anchor, cfg):
            continue
        site = det.joints_2d[anchor]
        coords = np.zeros((N_JOINTS, 3))
        for j in Joint:
            coords[j] = sample_map(maps.orpms[j], site, maps.grid.stride_pose)
        return Pose3D(coords, PARENT_RELATIVE), anchor
    return None


def refine_limb(
    base_coords: np.ndarray,
    provenance: list[str],
    det: Detection2D,
    maps: MapStack,
    limb: Limb,
    cfg: ReadoutConfig,
    all_dets: list[Detection2D],
) -> None:
    """Overwrite a limb's base entries with values read at its most distal
    valid joint; in place, no-op when the whole limb is invalid."""
    cfg = cfg.resolved(maps.grid.stride_pose)
    for j in reversed(limb.members):  # extremity toward proximal
        if not is_valid_readout(det, all_dets, j, cfg):
            continue
        site = det.joints_2d[j]
        for member in limb.members:
            base_coords[member] = sample_map(maps.orpms[member], site, maps.grid.stride_pose)
            provenance[member] = prov_limb_at(j)
        return


def infer_poses(
    maps: MapStack,
    dets: list[Detection2D],
    cfg: ReadoutConfig = ReadoutConfig(),
) -> list[PoseResult]:
    """Full read-out for every detection: base pose, limb refinement, and
    conversion to a root-relative pose with per-joint provenance."""
    cfg = cfg.resolved(maps.grid.stride_pose)
    results = []
    for det in dets:
        base = read_base_pose(det, maps, cfg, dets)
        if base is None:
            results.append(PoseResult(False, None, (PROV_UNDETECTED,) * N_JOINTS))
            continue
        coords = base[0].coords.copy()
        provenance = [PROV_TORSO_BASE] * N_JOINTS
        if not cfg.torso_only:
            for limb in LIMBS:
                refine_limb(coords, provenance, det, maps, limb, cfg, dets)
        pose = to_root_relative(Pose3D(coords, PARENT_RELATIVE))
        results.append(PoseResult(True, pose, tuple(provenance)))
    return results
