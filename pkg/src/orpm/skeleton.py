"""Joint taxonomy, kinematic tree, limb decomposition, and frame conversions.

The 17-joint set and its parent assignments follow the MPI-INF-3DHP
convention.  All data here is immutable after import; every function is
pure, so the module is safe for unrestricted parallel use.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractError

N_JOINTS = 17

PARENT_RELATIVE = "parent_relative"
ROOT_RELATIVE = "root_relative"
_FRAMES = (PARENT_RELATIVE, ROOT_RELATIVE)


class Joint(IntEnum):
    PELVIS = 0
    SPINE = 1
    NECK = 2
    HEAD = 3
    HEAD_TOP = 4
    SHOULDER_L = 5
    ELBOW_L = 6
    WRIST_L = 7
    SHOULDER_R = 8
    ELBOW_R = 9
    WRIST_R = 10
    HIP_L = 11
    KNEE_L = 12
    ANKLE_L = 13
    HIP_R = 14
    KNEE_R = 15
    ANKLE_R = 16


JOINT_NAMES = tuple(j.name.lower() for j in Joint)

# Parent of each joint; -1 marks the pelvis root.  Indices are topologically
# sorted: every parent precedes its children.
_PARENT_INDEX = (-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15)

PARENT_INDEX = np.array(_PARENT_INDEX, dtype=np.int64)
PARENT_INDEX.flags.writeable = False


def parent(j: Joint) -> Joint | None:
    """Kinematic parent of `j`; None for the pelvis root."""
    p = _PARENT_INDEX[Joint(j)]
    return None if p < 0 else Joint(p)


@dataclass(frozen=True)
class Limb:
    """A kinematic chain, ordered proximal to distal."""

    name: str
    members: tuple[Joint, ...]

    @property
    def extremity(self) -> Joint:
        return self.members[-1]


ARM_L = Limb("arm_l", (Joint.SHOULDER_L, Joint.ELBOW_L, Joint.WRIST_L))
ARM_R = Limb("arm_r", (Joint.SHOULDER_R, Joint.ELBOW_R, Joint.WRIST_R))
LEG_L = Limb("leg_l", (Joint.HIP_L, Joint.KNEE_L, Joint.ANKLE_L))
LEG_R = Limb("leg_r", (Joint.HIP_R, Joint.KNEE_R, Joint.ANKLE_R))
HEAD_LIMB = Limb("head", (Joint.HEAD,))

LIMBS = (ARM_L, ARM_R, LEG_L, LEG_R, HEAD_LIMB)

_LIMB_OF = {j: limb for limb in LIMBS for j in limb.members}

# Joints outside every limb.  Together with the limb members they partition
# the joint set.
NON_LIMB_JOINTS = (Joint.PELVIS, Joint.SPINE, Joint.NECK, Joint.HEAD_TOP)

# The common minimum joint set used for evaluation: pelvis, spine, and
# head_top are excluded.
EVAL_SUBSET = (
    Joint.HEAD,
    Joint.NECK,
    Joint.SHOULDER_L,
    Joint.ELBOW_L,
    Joint.WRIST_L,
    Joint.SHOULDER_R,
    Joint.ELBOW_R,
    Joint.WRIST_R,
    Joint.HIP_L,
    Joint.KNEE_L,
    Joint.ANKLE_L,
    Joint.HIP_R,
    Joint.KNEE_R,
    Joint.ANKLE_R,
)


def limb_of(j: Joint) -> Limb | None:
    """Limb containing `j`, or None for pelvis/spine/neck/head_top."""
    return _LIMB_OF.get(Joint(j))


def readout_sites(p2d: np.ndarray, j: Joint) -> tuple[tuple[float, float], ...]:
    """2D locations where joint `j`'s 3D value can be read for one person.

    Always contains the neck and pelvis locations, plus the locations of
    every joint in `j`'s limb.  Deduplicated, order deterministic.
    `p2d` is the person's (17, 2) pixel array and must provide finite neck
    and pelvis rows.
    """
    p2d = np.asarray(p2d, dtype=np.float64)
    if p2d.shape != (N_JOINTS, 2):
        raise ContractError(f"p2d must have shape (17, 2), got {p2d.shape}")
    anchors = (Joint.NECK, Joint.PELVIS)
    if not np.isfinite(p2d[list(anchors)]).all():
        raise ContractError("readout_sites requires finite neck and pelvis locations")
    limb = limb_of(j)
    members = limb.members if limb is not None else ()
    sites: list[tuple[float, float]] = []
    for k in (*anchors, *members):
        loc = (float(p2d[k, 0]), float(p2d[k, 1]))
        if loc not in sites:
            sites.append(loc)
    return tuple(sites)


@dataclass(frozen=True, eq=False)
class Pose3D:
    """Metric joint offsets (meters) in a tagged coordinate frame.

    `parent_relative`: each row is the offset from the joint's kinematic
    parent (pelvis row is zero).  `root_relative`: offsets from the pelvis.
    """

    coords: np.ndarray
    frame: str

    def __eq__(self, other):
        if not isinstance(other, Pose3D):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.coords, other.coords)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape != (N_JOINTS, 3):
            raise ContractError(f"pose must have shape (17, 3), got {coords.shape}")
        if not np.isfinite(coords).all():
            raise ContractError("pose coordinates must be finite")
        if self.frame not in _FRAMES:
            raise ContractError(f"unknown frame tag {self.frame!r}")
        if self.frame == ROOT_RELATIVE and coords[Joint.PELVIS].any():
            raise ContractError("root_relative pose must have a zero pelvis row")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)


def to_root_relative(pose: Pose3D) -> Pose3D:
    """Accumulate parent-relative offsets along each chain to the pelvis."""
    if pose.frame != PARENT_RELATIVE:
        raise ContractError(f"expected a parent_relative pose, got {pose.frame}")
    out = np.zeros((N_JOINTS, 3))
    for j in Joint:  # index order is topological
        p = _PARENT_INDEX[j]
        if p >= 0:
            out[j] = out[p] + pose.coords[j]
    return Pose3D(out, ROOT_RELATIVE)


def to_parent_relative(pose: Pose3D) -> Pose3D:
    """Inverse of `to_root_relative`: per-joint differencing along the tree."""
    if pose.frame != ROOT_RELATIVE:
        raise ContractError(f"expected a root_relative pose, got {pose.frame}")
    out = np.zeros((N_JOINTS, 3))
    for j in Joint:
        p = _PARENT_INDEX[j]
        if p >= 0:
            out[j] = pose.coords[j] - pose.coords[p]
    return Pose3D(out, PARENT_RELATIVE)
