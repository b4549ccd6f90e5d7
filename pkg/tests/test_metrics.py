import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import neutral_pose_coords
from orpm.errors import ContractError
from orpm.metrics import (
    DEFAULT_THRESHOLDS_MM,
    EvalPair,
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
from orpm.skeleton import (
    EVAL_SUBSET,
    N_JOINTS,
    PARENT_INDEX,
    PARENT_RELATIVE,
    ROOT_RELATIVE,
    Joint,
    Pose3D,
    to_root_relative,
)


def gt_pose() -> Pose3D:
    return to_root_relative(Pose3D(neutral_pose_coords(), PARENT_RELATIVE))


def displaced(pose: Pose3D, mm: float, joints=None) -> Pose3D:
    coords = pose.coords.copy()
    joints = [j for j in Joint if j != Joint.PELVIS] if joints is None else joints
    for j in joints:
        coords[j, 0] += mm / 1000.0
    return Pose3D(coords, ROOT_RELATIVE)


def pair_for(pred: Pose3D | None, occluded=None, matched=None, sequence="s") -> EvalPair:
    gt = GroundTruthPerson(
        gt_pose(),
        np.zeros(N_JOINTS, bool) if occluded is None else occluded,
        np.zeros((N_JOINTS, 2)),
    )
    matched = pred is not None if matched is None else matched
    return EvalPair(gt, pred, matched, sequence)


def test_pck_exact_pose_is_100():
    assert pck3d([pair_for(gt_pose())]) == 100.0


def test_pck_threshold_boundary():
    assert pck3d([pair_for(displaced(gt_pose(), 149.0))]) == 100.0
    assert pck3d([pair_for(displaced(gt_pose(), 151.0))]) == 0.0


def test_pck_radius_is_inclusive():
    # binary-exact construction: zero ground truth, 0.125 m displacement,
    # so the error is exactly 125.0 mm
    gt = GroundTruthPerson(
        Pose3D(np.zeros((N_JOINTS, 3)), ROOT_RELATIVE),
        np.zeros(N_JOINTS, bool),
        np.zeros((N_JOINTS, 2)),
    )
    coords = np.zeros((N_JOINTS, 3))
    coords[list(EVAL_SUBSET), 0] = 0.125
    pairs = [EvalPair(gt, Pose3D(coords, ROOT_RELATIVE), True)]
    assert pck3d(pairs, radius_mm=125.0) == 100.0
    assert pck3d(pairs, radius_mm=124.9999) == 0.0


def test_pck_half_right():
    pred = displaced(gt_pose(), 400.0, joints=list(EVAL_SUBSET)[:7])
    assert pck3d([pair_for(pred)]) == 50.0


def test_pck_unmatched_counts_all_wrong():
    pairs = [pair_for(gt_pose()), pair_for(None)]
    assert pck3d(pairs) == 50.0


def test_pck_frame_mismatch_rejected():
    with pytest.raises(ContractError):
        EvalPair(
            GroundTruthPerson(gt_pose(), np.zeros(N_JOINTS, bool), np.zeros((N_JOINTS, 2))),
            Pose3D(neutral_pose_coords(), PARENT_RELATIVE),
            True,
        )


def test_auc_exact_pose_is_100():
    assert auc([pair_for(gt_pose())]) == 100.0


def test_auc_uniform_75mm_step_curve():
    # all subset joints displaced the same 75 mm: the PCK curve is a step,
    # and the AUC equals the enumerated fraction of grid points past it
    gt = GroundTruthPerson(
        Pose3D(np.zeros((N_JOINTS, 3)), ROOT_RELATIVE),
        np.zeros(N_JOINTS, bool),
        np.zeros((N_JOINTS, 2)),
    )
    coords = np.zeros((N_JOINTS, 3))
    coords[list(EVAL_SUBSET), 1] = 75.0 / 1000.0
    pairs = [EvalPair(gt, Pose3D(coords, ROOT_RELATIVE), True)]
    err_mm = np.linalg.norm(coords[Joint.NECK]) * 1000.0  # one shared error
    grid = DEFAULT_THRESHOLDS_MM
    assert len(grid) == 31
    expected = 100.0 * sum(1 for t in grid if err_mm <= t) / len(grid)
    assert auc(pairs) == pytest.approx(expected, abs=1e-9)
    assert expected in (100.0 * 15 / 31, 100.0 * 16 / 31)


def test_auc_never_exceeds_pck_at_max_threshold():
    rng = np.random.default_rng(3)
    for _ in range(10):
        coords = gt_pose().coords + rng.normal(scale=0.08, size=(N_JOINTS, 3))
        coords[Joint.PELVIS] = 0
        pairs = [pair_for(Pose3D(coords, ROOT_RELATIVE))]
        assert auc(pairs) <= pck3d(pairs) + 1e-12


def test_auc_empty_grid_rejected():
    with pytest.raises(ContractError):
        auc([pair_for(gt_pose())], thresholds_mm=())


def test_mpjpe_values():
    assert mpjpe([pair_for(gt_pose())]) == 0.0
    assert mpjpe([pair_for(displaced(gt_pose(), 50.0))]) == pytest.approx(50.0)


def test_mpjpe_mixed_matches_brute_force():
    rng = np.random.default_rng(4)
    coords = gt_pose().coords + rng.normal(scale=0.05, size=(N_JOINTS, 3))
    coords[Joint.PELVIS] = 0
    pred = Pose3D(coords, ROOT_RELATIVE)
    expected = np.mean(
        [np.linalg.norm(pred.coords[j] - gt_pose().coords[j]) * 1000 for j in EVAL_SUBSET]
    )
    assert mpjpe([pair_for(pred)]) == pytest.approx(expected, rel=1e-12)


def test_mpjpe_excludes_unmatched():
    pairs = [pair_for(gt_pose()), pair_for(None)]
    assert mpjpe(pairs) == 0.0
    with pytest.raises(ContractError):
        mpjpe([pair_for(None)])


def test_match_identity():
    joints = np.zeros((N_JOINTS, 2))
    assert match_predictions([joints], [joints]) == [0]


def test_match_zero_predictions():
    joints = np.zeros((N_JOINTS, 2))
    assignment = match_predictions([joints, joints + 100.0], [])
    assert assignment == [None, None]
    pairs = [pair_for(None), pair_for(None)]
    report = evaluate(pairs)
    assert report.detection_rate == 0.0
    assert report.pck_total == 0.0


def assignment_oracle(gts, preds, radius):
    """Exhaustive best-total-score one-to-one assignment on a 3x3 problem."""
    from itertools import permutations

    def score(g, p):
        d = np.linalg.norm(preds[p] - gts[g], axis=1)
        return float((d <= radius).sum()) / len(gts[g])

    best, best_total = None, -1.0
    for perm in permutations(range(len(preds))):
        total = sum(score(g, perm[g]) for g in range(len(gts)))
        if total > best_total:
            best_total, best = total, perm
    return list(best)


def test_match_recovers_permutation():
    rng = np.random.default_rng(5)
    gts = [rng.uniform(0, 200, size=(N_JOINTS, 2)) + off for off in (0.0, 300.0, 600.0)]
    perm = [2, 0, 1]
    preds = [gts[g] + rng.uniform(-3, 3, size=(N_JOINTS, 2)) for g in perm]
    got = match_predictions(gts, preds, radius_px=40.0)
    oracle = assignment_oracle(gts, preds, 40.0)
    assert got == oracle
    assert [perm[p] for p in got] == [0, 1, 2]


def test_occlusion_breakdown_empty_split():
    occ, unocc = occlusion_breakdown([pair_for(gt_pose())])
    assert occ is None
    assert unocc is not None and unocc.pck == 100.0


def test_occlusion_breakdown_all_occluded():
    occluded = np.ones(N_JOINTS, bool)
    occ, unocc = occlusion_breakdown([pair_for(gt_pose(), occluded=occluded)])
    assert unocc is None and occ.pck == 100.0


def test_occlusion_partition_identity_exact():
    occluded = np.zeros(N_JOINTS, bool)
    occluded[[Joint.WRIST_R, Joint.ANKLE_L, Joint.HEAD]] = True
    pred = displaced(gt_pose(), 400.0, joints=[Joint.WRIST_R, Joint.KNEE_L])
    pairs = [pair_for(pred, occluded=occluded), pair_for(None, occluded=occluded)]
    report = evaluate(pairs)
    occ, unocc = report.occluded, report.unoccluded
    n = occ.n_joints + unocc.n_joints
    c = occ.n_correct + unocc.n_correct
    assert n == report.total.n_joints and c == report.total.n_correct
    assert 100.0 * c / n == report.pck_total  # identical float expression


def test_bone_lengths():
    lengths = bone_lengths(gt_pose())
    assert lengths[Joint.PELVIS] == 0.0
    coords = gt_pose().coords
    for j in Joint:
        p = PARENT_INDEX[j]
        if p >= 0:
            assert lengths[j] == pytest.approx(np.linalg.norm(coords[j] - coords[p]))


def test_retarget_identity_when_lengths_match():
    pose = gt_pose()
    out = retarget_bones(pose, bone_lengths(pose))
    assert np.abs(out.coords - pose.coords).max() <= 1e-12


def test_retarget_uniform_scale_recovers_gt():
    pose = gt_pose()
    scaled = Pose3D(pose.coords * 2.0, ROOT_RELATIVE)
    out = retarget_bones(scaled, bone_lengths(pose))
    assert np.abs(out.coords - pose.coords).max() <= 1e-9


@given(
    arrays(
        np.float64,
        (N_JOINTS, 3),
        elements=st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False),
    )
)
@settings(max_examples=60)
def test_retarget_output_lengths_and_idempotence(coords):
    coords[Joint.PELVIS] = 0
    pred = Pose3D(coords, ROOT_RELATIVE)
    target_lengths = bone_lengths(gt_pose())
    out = retarget_bones(pred, target_lengths)
    assert np.abs(bone_lengths(out) - target_lengths).max() <= 1e-9
    again = retarget_bones(out, target_lengths)
    assert np.abs(again.coords - out.coords).max() <= 1e-9


def test_retarget_zero_bone_uses_parent_direction():
    coords = gt_pose().coords.copy()
    coords[Joint.WRIST_R] = coords[Joint.ELBOW_R]  # zero-length forearm
    out = retarget_bones(Pose3D(coords, ROOT_RELATIVE), bone_lengths(gt_pose()))
    assert np.abs(bone_lengths(out) - bone_lengths(gt_pose())).max() <= 1e-9


def test_report_order_invariance():
    pred = displaced(gt_pose(), 120.0, joints=[Joint.WRIST_L])
    pairs = [pair_for(gt_pose()), pair_for(pred), pair_for(None)]
    a = evaluate(pairs)
    b = evaluate(list(reversed(pairs)))
    assert a.pck_total == b.pck_total
    assert a.auc == b.auc
    assert a.mpjpe_matched_mm == b.mpjpe_matched_mm
    assert a.detection_rate == b.detection_rate
    assert a.per_joint == b.per_joint


def test_split_stats_pck():
    assert SplitStats(4, 3).pck == 75.0
