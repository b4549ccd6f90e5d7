"""2D joint detection and joint-to-person association.

Peaks extracted from the heatmaps are connected along the kinematic tree by
scoring part-affinity line integrals for every candidate child-parent pair,
greedily accepting the best-scoring connections one-to-one per bone type,
and collecting connected components into per-person detections.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .maps import GridSpec, MapStack, cell_center_px
from .skeleton import N_JOINTS, Joint, parent

DETECTION_THRESHOLD = 0.1
PAF_SAMPLES = 10

_TORSO_ANCHORS = (Joint.NECK, Joint.PELVIS)


@dataclass(frozen=True)
class Peak:
    """A strict local heatmap maximum, in grid-cell coordinates."""

    x: int
    y: int
    confidence: float


@dataclass(frozen=True)
class PeakSet:
    per_joint: tuple[tuple[Peak, ...], ...]  # indexed by joint

    def __post_init__(self):
        if len(self.per_joint) != N_JOINTS:
            raise ContractError("PeakSet needs one peak list per joint")


@dataclass(frozen=True, eq=False)
class Detection2D:
    """One person's associated 2D joints.

    Confidence 0 marks an undetected joint, whose location is NaN;
    detected locations are input-pixel coordinates at the grid-cell center.
    """

    joints_2d: np.ndarray  # (17, 2) float64, NaN where undetected
    confidences: np.ndarray  # (17,) float64 in [0, 1]

    def __eq__(self, other):
        if not isinstance(other, Detection2D):
            return NotImplemented
        return np.array_equal(self.confidences, other.confidences) and np.array_equal(
            self.joints_2d, other.joints_2d, equal_nan=True
        )

    def __post_init__(self):
        joints = np.asarray(self.joints_2d, dtype=np.float64)
        conf = np.asarray(self.confidences, dtype=np.float64)
        if joints.shape != (N_JOINTS, 2) or conf.shape != (N_JOINTS,):
            raise ContractError("Detection2D arrays must be (17, 2) and (17,)")
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise ContractError("confidences must lie in [0, 1]")
        missing = conf == 0.0
        if np.isfinite(joints[missing]).any():
            raise ContractError("joints with confidence 0 must have no location")
        if not np.isfinite(joints[~missing]).all():
            raise ContractError("joints with positive confidence need a location")
        joints = joints.copy()
        joints.flags.writeable = False
        conf = conf.copy()
        conf.flags.writeable = False
        object.__setattr__(self, "joints_2d", joints)
        object.__setattr__(self, "confidences", conf)

    def has_joint(self, j: Joint) -> bool:
        return self.confidences[j] > 0.0

    def total_confidence(self) -> float:
        return float(self.confidences.sum())

    def masked(self, joints) -> "Detection2D":
        """Copy with the given joints forced undetected (occlusion stand-in)."""
        j2d = self.joints_2d.copy()
        conf = self.confidences.copy()
        for j in joints:
            j2d[j] = np.nan
            conf[j] = 0.0
        return Detection2D(j2d, conf)


def extract_peaks(heatmaps: np.ndarray, threshold: float = DETECTION_THRESHOLD) -> PeakSet:
    """All cells strictly greater than their 8 neighbors and >= threshold."""
    if not np.isfinite(heatmaps).all():
        raise ContractError("heatmaps must be finite")
    per_joint = []
    for j in range(N_JOINTS):
        hm = heatmaps[j]
        padded = np.pad(hm.astype(np.float64), 1, constant_values=-np.inf)
        center = padded[1:-1, 1:-1]
        strict_max = np.ones_like(center, dtype=bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                neighbor = padded[1 + dy : padded.shape[0] - 1 + dy, 1 + dx : padded.shape[1] - 1 + dx]
                strict_max &= center > neighbor
        ys, xs = np.nonzero(strict_max & (center >= threshold))
        per_joint.append(tuple(Peak(int(x), int(y), float(hm[y, x])) for y, x in zip(ys, xs)))
    return PeakSet(tuple(per_joint))


def paf_score(
    child_px,
    parent_px,
    paf_map: np.ndarray,
    stride_paf: int,
    n_samples: int = PAF_SAMPLES,
) -> float:
    """Mean dot product between the field and the child->parent unit
    direction, over equidistant samples along the segment."""
    a = np.asarray(child_px, dtype=np.float64)
    b = np.asarray(parent_px, dtype=np.float64)
    seg = b - a
    length = float(np.hypot(*seg))
    if length < 1e-9:
        return 0.0
    direction = seg / length
    ts = np.linspace(0.0, 1.0, n_samples)
    pts = a[None, :] + ts[:, None] * seg[None, :]
    h, w = paf_map.shape[:2]
    xs = np.clip((pts[:, 0] // stride_paf).astype(int), 0, w - 1)
    ys = np.clip((pts[:, 1] // stride_paf).astype(int), 0, h - 1)
    vecs = paf_map[ys, xs]
    return float(np.mean(vecs @ direction))


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, node):
        self.parent.setdefault(node, node)
        root = node
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[node] != root:
            self.parent[node], node = root, self.parent[node]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def group_persons(
    peaks: PeakSet,
    pafs: np.ndarray,
    grid: GridSpec,
    n_samples: int = PAF_SAMPLES,
) -> list[Detection2D]:
    """Associate peaks into per-person detections via greedy per-bone
    matching on affinity scores.

    Each bone type's candidate connections are accepted in descending score
    order (ties broken by child then parent peak index), each peak used at
    most once per bone type and only positive scores accepted.  Connected
    components become detections; peaks left unattached are dropped unless
    they are torso anchors (neck or pelvis), which alone still permit a
    base-pose read-out.
    """
    uf = _UnionFind()
    connected: set = set()
    for j in Joint:
        p = parent(j)
        if p is None:
            continue
        children = peaks.per_joint[j]
        parents = peaks.per_joint[p]
        candidates = []
        for ci, child in enumerate(children):
            child_px = cell_center_px((child.x, child.y), grid.stride_pose)
            for pi, par_peak in enumerate(parents):
                parent_px = cell_center_px((par_peak.x, par_peak.y), grid.stride_pose)
                score = paf_score(child_px, parent_px, pafs[j], grid.stride_paf, n_samples)
                candidates.append((score, ci, pi))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        used_children: set[int] = set()
        used_parents: set[int] = set()
        for score, ci, pi in candidates:
            if score <= 0.0 or ci in used_children or pi in used_parents:
                continue
            used_children.add(ci)
            used_parents.add(pi)
            uf.union((int(j), ci), (int(p), pi))
            connected.add((int(j), ci))
            connected.add((int(p), pi))

    components: dict = {}
    for j in Joint:
        for idx in range(len(peaks.per_joint[j])):
            node = (int(j), idx)
            if node not in connected and j not in _TORSO_ANCHORS:
                continue  # unattached non-torso peak
            components.setdefault(uf.find(node), []).append(node)

    detections = []
    for nodes in components.values():
        joints = np.full((N_JOINTS, 2), np.nan)
        conf = np.zeros(N_JOINTS)
        signature = []
        for j, idx in sorted(nodes):
            peak = peaks.per_joint[j][idx]
            joints[j] = cell_center_px((peak.x, peak.y), grid.stride_pose)
            conf[j] = peak.confidence
            signature.append((j, peak.y, peak.x))
        detections.append((Detection2D(joints, conf), tuple(signature)))
    detections.sort(key=lambda d: (-d[0].total_confidence(), d[1]))
    return [d for d, _ in detections]


def detect_persons(stack: MapStack, threshold: float = DETECTION_THRESHOLD) -> list[Detection2D]:
    """Peak extraction plus grouping over a full map stack."""
    return group_persons(extract_peaks(stack.heatmaps, threshold), stack.pafs, stack.grid)
