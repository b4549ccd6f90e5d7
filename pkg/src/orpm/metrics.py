"""Evaluation protocol: 3DPCK, AUC, MPJPE, prediction-annotation matching,
occlusion splits, and bone-length retargeting.

All pose comparisons are root-relative over the 14-joint evaluation subset.
Annotated persons missed by the predictor contribute every subset joint as
incorrect to PCK and AUC but are excluded from MPJPE.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .skeleton import (
    EVAL_SUBSET,
    JOINT_NAMES,
    N_JOINTS,
    PARENT_INDEX,
    ROOT_RELATIVE,
    Joint,
    Pose3D,
)

PCK_RADIUS_MM = 150.0
MATCH_RADIUS_PX = 40.0
DEFAULT_THRESHOLDS_MM = tuple(float(t) for t in range(0, 151, 5))


@dataclass(frozen=True, eq=False)
class GroundTruthPerson:
    pose_root_rel: Pose3D
    occluded: np.ndarray  # (17,) bool
    joints_2d: np.ndarray  # (17, 2) px, used for matching

    def __post_init__(self):
        if self.pose_root_rel.frame != ROOT_RELATIVE:
            raise ContractError("ground-truth poses must be root_relative")
        occluded = np.asarray(self.occluded, dtype=bool).copy()
        joints_2d = np.asarray(self.joints_2d, dtype=np.float64).copy()
        if occluded.shape != (N_JOINTS,) or joints_2d.shape != (N_JOINTS, 2):
            raise ContractError("occluded must be (17,) and joints_2d (17, 2)")
        occluded.flags.writeable = False
        joints_2d.flags.writeable = False
        object.__setattr__(self, "occluded", occluded)
        object.__setattr__(self, "joints_2d", joints_2d)


@dataclass(frozen=True, eq=False)
class EvalPair:
    """One annotated person and the prediction matched to it (if any)."""

    gt: GroundTruthPerson
    pred: Pose3D | None  # root_relative
    matched: bool
    sequence: str = ""

    def __post_init__(self):
        if self.matched and self.pred is None:
            raise ContractError("matched pairs need a prediction")
        if self.pred is not None and self.pred.frame != ROOT_RELATIVE:
            raise ContractError("predictions must be root_relative")


@dataclass(frozen=True)
class SplitStats:
    n_joints: int
    n_correct: int

    @property
    def pck(self) -> float:
        return 100.0 * self.n_correct / self.n_joints


def _error_matrix(pairs, subset) -> np.ndarray:
    """(n_pairs, len(subset)) joint errors in millimeters; inf for misses."""
    subset = [Joint(j) for j in subset]
    errors = np.full((len(pairs), len(subset)), np.inf)
    for i, pair in enumerate(pairs):
        if not pair.matched or pair.pred is None:
            continue
        diff = pair.pred.coords[subset] - pair.gt.pose_root_rel.coords[subset]
        errors[i] = np.linalg.norm(diff, axis=1) * 1000.0
    return errors


def pck3d(pairs, radius_mm: float = PCK_RADIUS_MM, subset=EVAL_SUBSET) -> float:
    """Percent of subset joints within `radius_mm` of ground truth; missed
    persons count all joints wrong."""
    if not pairs:
        raise ContractError("pck3d needs at least one pair")
    errors = _error_matrix(pairs, subset)
    return 100.0 * float((errors <= radius_mm).sum()) / errors.size


def auc(pairs, thresholds_mm=DEFAULT_THRESHOLDS_MM, subset=EVAL_SUBSET) -> float:
    """Mean of the PCK curve over a threshold grid."""
    thresholds = tuple(thresholds_mm)
    if not thresholds:
        raise ContractError("auc needs a nonempty threshold grid")
    errors = _error_matrix(pairs, subset)
    curve = [100.0 * float((errors <= t).sum()) / errors.size for t in thresholds]
    return float(np.mean(curve))


def mpjpe(pairs, subset=EVAL_SUBSET) -> float:
    """Mean joint error (mm) over matched pairs only."""
    matched = [p for p in pairs if p.matched]
    if not matched:
        raise ContractError("mpjpe needs at least one matched pair")
    errors = _error_matrix(matched, subset)
    return float(errors.mean())


def match_predictions(
    gt_joints_2d: list[np.ndarray],
    pred_joints_2d: list[np.ndarray],
    radius_px: float = MATCH_RADIUS_PX,
) -> list[int | None]:
    """Greedy one-to-one matching by 2D joint agreement.

    The score of a (gt, pred) pair is the fraction of ground-truth joints
    whose predicted 2D location lies within `radius_px`; pairs are accepted
    in descending score order (ties by gt index then pred index) and only
    with positive score.  Returns one pred index or None per ground truth.
    """
    candidates = []
    for g, gt in enumerate(gt_joints_2d):
        for p, pred in enumerate(pred_joints_2d):
            dist = np.linalg.norm(np.asarray(pred, dtype=float) - gt, axis=1)
            agree = np.isfinite(dist) & (dist <= radius_px)
            score = float(agree.sum()) / len(gt)
            candidates.append((score, g, p))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    assignment: list[int | None] = [None] * len(gt_joints_2d)
    used_preds: set[int] = set()
    for score, g, p in candidates:
        if score <= 0.0 or assignment[g] is not None or p in used_preds:
            continue
        assignment[g] = p
        used_preds.add(p)
    return assignment


def _split_counts(pairs, radius_mm, subset, occluded_value: bool) -> SplitStats | None:
    subset = [Joint(j) for j in subset]
    errors = _error_matrix(pairs, subset)
    flags = np.stack([p.gt.occluded[subset] == occluded_value for p in pairs])
    n = int(flags.sum())
    if n == 0:
        return None
    correct = int(((errors <= radius_mm) & flags).sum())
    return SplitStats(n, correct)


def occlusion_breakdown(
    pairs, radius_mm: float = PCK_RADIUS_MM, subset=EVAL_SUBSET
) -> tuple[SplitStats | None, SplitStats | None]:
    """PCK restricted to occluded / un-occluded ground-truth joints; a split
    with no joints is reported as absent."""
    return (
        _split_counts(pairs, radius_mm, subset, True),
        _split_counts(pairs, radius_mm, subset, False),
    )


def bone_lengths(pose: Pose3D) -> np.ndarray:
    """Length of each parent->joint bone; zero at the pelvis root."""
    lengths = np.zeros(N_JOINTS)
    for j in Joint:
        p = PARENT_INDEX[j]
        if p >= 0:
            lengths[j] = np.linalg.norm(pose.coords[j] - pose.coords[p])
    return lengths


def retarget_bones(pred: Pose3D, gt_bone_lengths: np.ndarray) -> Pose3D:
    """Rescale each bone to the ground-truth length, preserving direction.

    Walks the tree root-down; a zero-length predicted bone inherits the
    direction used for its parent's bone (falling back to +y when none is
    available) so the output still honors every ground-truth length.
    """
    if pred.frame != ROOT_RELATIVE:
        raise ContractError("retarget_bones expects a root_relative pose")
    gt_bone_lengths = np.asarray(gt_bone_lengths, dtype=np.float64)
    if gt_bone_lengths.shape != (N_JOINTS,):
        raise ContractError("gt_bone_lengths must have shape (17,)")
    out = np.zeros((N_JOINTS, 3))
    directions = np.zeros((N_JOINTS, 3))
    fallback = np.array([0.0, 1.0, 0.0])
    for j in Joint:  # topological order
        p = PARENT_INDEX[j]
        if p < 0:
            continue
        vec = pred.coords[j] - pred.coords[p]
        largest = float(np.abs(vec).max())
        if largest > 0.0:
            scaled = vec / largest  # scale-invariant: no underflow for tiny bones
            direction = scaled / np.linalg.norm(scaled)
        else:
            direction = directions[p] if directions[p].any() else fallback
        directions[j] = direction
        out[j] = out[p] + direction * gt_bone_lengths[j]
    return Pose3D(out, ROOT_RELATIVE)


@dataclass(frozen=True)
class EvalReport:
    """Aggregated metrics with sequence, joint, and occlusion breakdowns."""

    total: SplitStats
    auc: float
    mpjpe_matched_mm: float | None
    detection_rate: float
    n_annotated: int
    n_matched: int
    radius_mm: float
    thresholds_mm: tuple[float, ...]
    pck_curve: tuple[float, ...]
    per_sequence: dict[str, SplitStats] = field(default_factory=dict)
    per_joint: dict[str, SplitStats] = field(default_factory=dict)
    occluded: SplitStats | None = None
    unoccluded: SplitStats | None = None

    @property
    def pck_total(self) -> float:
        return self.total.pck


def evaluate(
    pairs,
    radius_mm: float = PCK_RADIUS_MM,
    thresholds_mm=DEFAULT_THRESHOLDS_MM,
    subset=EVAL_SUBSET,
) -> EvalReport:
    if not pairs:
        raise ContractError("evaluate needs at least one pair")
    thresholds = tuple(float(t) for t in thresholds_mm)
    if not thresholds:
        raise ContractError("evaluate needs a nonempty threshold grid")
    subset = [Joint(j) for j in subset]
    errors = _error_matrix(pairs, subset)
    correct = errors <= radius_mm

    total = SplitStats(errors.size, int(correct.sum()))
    curve = tuple(100.0 * float((errors <= t).sum()) / errors.size for t in thresholds)

    per_sequence: dict[str, SplitStats] = {}
    for name in sorted({p.sequence for p in pairs}):
        rows = [i for i, p in enumerate(pairs) if p.sequence == name]
        per_sequence[name] = SplitStats(
            errors[rows].size, int(correct[rows].sum())
        )

    per_joint = {
        JOINT_NAMES[j]: SplitStats(len(pairs), int(correct[:, k].sum()))
        for k, j in enumerate(subset)
    }

    occluded, unoccluded = occlusion_breakdown(pairs, radius_mm, subset)
    matched = [p for p in pairs if p.matched]
    return EvalReport(
        total=total,
        auc=float(np.mean(curve)),
        mpjpe_matched_mm=mpjpe(pairs, subset) if matched else None,
        detection_rate=len(matched) / len(pairs),
        n_annotated=len(pairs),
        n_matched=len(matched),
        radius_mm=radius_mm,
        thresholds_mm=thresholds,
        pck_curve=curve,
        per_sequence=per_sequence,
        per_joint=per_joint,
        occluded=occluded,
        unoccluded=unoccluded,
    )
