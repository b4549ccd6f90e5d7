"""Occlusion-robust pose-map toolkit for multi-person 3D pose.

Encodes ground-truth scenes into fixed-count map stacks (heatmaps,
pose-maps, part affinity fields), associates 2D joint detections to
persons, reads 3D poses back out with occlusion-aware limb refinement,
composites annotated synthetic scenes, and evaluates predictions with the
3DPCK/AUC/MPJPE protocol.
"""

from .association import Detection2D, PeakSet, detect_persons, extract_peaks, group_persons, paf_score
from .compositor import (
    AugmentParams,
    AugmentRanges,
    Camera,
    ComposedScene,
    PersonRecord,
    annotate_occlusion,
    augment,
    compose_scene,
    project,
    unproject,
)
from .errors import ContractError, FormatError
from .maps import (
    DEFAULT_GRID,
    GridSpec,
    MapStack,
    PersonGT,
    SceneGT,
    encode_orpm,
    encode_scene,
    heatmap_target,
    orpm_loss,
    paf_target,
    sample_map,
)
from .metrics import (
    EvalPair,
    EvalReport,
    GroundTruthPerson,
    SplitStats,
    auc,
    bone_lengths,
    evaluate,
    match_predictions,
    mpjpe,
    occlusion_breakdown,
    pck3d,
    retarget_bones,
)
from .readout import (
    PoseResult,
    ReadoutConfig,
    infer_poses,
    is_valid_readout,
    read_base_pose,
    refine_limb,
)
from .skeleton import (
    EVAL_SUBSET,
    JOINT_NAMES,
    LIMBS,
    N_JOINTS,
    Joint,
    Limb,
    Pose3D,
    limb_of,
    parent,
    readout_sites,
    to_parent_relative,
    to_root_relative,
)
from .synth import (
    articulated_pose,
    generate_collision_scene,
    generate_isolated_scene,
    generate_scene,
    make_person_record,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
