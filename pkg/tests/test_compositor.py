import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orpm.compositor import (
    AugmentParams,
    Camera,
    PersonRecord,
    annotate_occlusion,
    augment,
    compose_scene,
    project,
    unproject,
)
from orpm.errors import ContractError
from orpm.maps import DEFAULT_GRID, GridSpec, encode_scene
from orpm.skeleton import Joint, N_JOINTS
from orpm.synth import (
    articulated_pose,
    default_camera,
    generate_scene,
    make_person_record,
)

TINY_GRID = GridSpec(64, 64, 4, 8)


def tiny_record(depth=2.0, center=(32.0, 30.0), seed=0) -> PersonRecord:
    camera = Camera(fx=52.0, fy=52.0, cx=32.0, cy=32.0)
    pose = articulated_pose(np.random.default_rng(seed), articulation=0.4)
    return make_person_record(TINY_GRID, camera, pose, depth, center)


def test_project_on_axis():
    camera = Camera(500, 500, 32, 32)
    assert np.allclose(project((0, 0, 2), camera), (32, 32))


def test_project_offset():
    camera = Camera(500, 500, 32, 32)
    assert np.allclose(project((0.2, 0, 2), camera), (82, 32))


def test_project_behind_camera_rejected():
    camera = Camera(500, 500, 32, 32)
    with pytest.raises(ContractError):
        project((0, 0, 0.0), camera)
    with pytest.raises(ContractError):
        project((0, 0, -1.0), camera)


@given(
    st.floats(-1.0, 1.0),
    st.floats(-1.0, 1.0),
    st.floats(0.5, 8.0),
)
@settings(max_examples=100)
def test_project_unproject_round_trip(x, y, z):
    camera = Camera(321.0, 287.5, 31.25, 33.5)
    px = project((x, y, z), camera)
    # algebraic inverse computed inline, independent of unproject()
    expected = ((px[0] - camera.cx) * z / camera.fx, (px[1] - camera.cy) * z / camera.fy, z)
    assert np.abs(np.array(expected) - (x, y, z)).max() <= 1e-9
    assert np.abs(unproject(px, z, camera) - (x, y, z)).max() <= 1e-9


def test_augment_identity_is_noop():
    rec = tiny_record()
    out = augment(rec, AugmentParams())
    assert np.array_equal(out.mask, rec.mask)
    assert np.array_equal(out.joints_cam, rec.joints_cam)


def test_augment_scale_doubles_offsets_from_center():
    rec = tiny_record(depth=4.5, center=(32.0, 32.0))
    out = augment(rec, AugmentParams(scale=2.0))
    center = np.array([32.0, 32.0])
    expected = (rec.joints_2d - center) * 2.0 + center
    assert np.abs(out.joints_2d - expected).max() <= 1e-9
    ratio = out.mask.sum() / rec.mask.sum()
    assert 3.5 <= ratio <= 4.5  # x4 up to rasterization error


def test_augment_rotation_90_rotates_joints():
    rec = tiny_record()
    out = augment(rec, AugmentParams(rotation_deg=90.0))
    center = np.array([32.0, 32.0])
    rel = rec.joints_2d - center
    expected = np.stack([-rel[:, 1], rel[:, 0]], axis=1) + center
    assert np.abs(out.joints_2d - expected).max() <= 0.5


def test_augment_preserves_depths_and_consistency():
    rec = tiny_record()
    out = augment(rec, AugmentParams(rotation_deg=30.0, scale=1.3, jitter_px=(2.0, -3.0)))
    assert np.array_equal(out.joints_cam[:, 2], rec.joints_cam[:, 2])
    assert np.abs(project(out.joints_cam, out.camera) - out.joints_2d).max() <= 1e-9


def test_augment_rejects_nonpositive_scale():
    with pytest.raises(ContractError):
        augment(tiny_record(), AugmentParams(scale=0.0))


def test_compose_single_person():
    rec = tiny_record()
    scene = compose_scene([rec], TINY_GRID)
    assert np.array_equal(scene.composite_mask != 0, rec.mask)
    assert set(np.unique(scene.composite_mask)) <= {0, 1}
    assert not scene.scene_gt.persons[0].occluded.any()


def test_compose_empty_rejected():
    with pytest.raises(ContractError):
        compose_scene([], TINY_GRID)


def test_compose_occlusion_of_covered_wrist():
    far = tiny_record(depth=3.0, center=(32.0, 30.0))
    near = tiny_record(depth=2.0, center=(33.0, 30.0), seed=1)
    scene = compose_scene([near, far], TINY_GRID)
    flags = annotate_occlusion(scene)
    # per-pixel coverage oracle
    for i, person in enumerate(scene.scene_gt.persons):
        depths = [p.root_depth for p in scene.scene_gt.persons]
        for j in Joint:
            x, y = person.joints_2d[j]
            if not (0 <= x < 64 and 0 <= y < 64):
                expected = True
            else:
                label = scene.composite_mask[int(y), int(x)]
                expected = label != 0 and label != i + 1 and depths[label - 1] < depths[i]
            assert flags[i, j] == expected
    assert np.array_equal(flags, np.stack([p.occluded for p in scene.scene_gt.persons]))


def test_compose_determinism():
    from orpm.compositor import AugmentRanges

    recs = [tiny_record(), tiny_record(depth=2.5, center=(20.0, 30.0), seed=2)]
    aug = AugmentRanges(rotation_max_deg=20.0, scale_range=(0.9, 1.1), jitter_max_px=3.0)
    a = compose_scene(recs, TINY_GRID, seed=7, aug=aug)
    b = compose_scene(recs, TINY_GRID, seed=7, aug=aug)
    assert np.array_equal(a.composite_mask, b.composite_mask)
    for pa, pb in zip(a.scene_gt.persons, b.scene_gt.persons):
        assert np.array_equal(pa.joints_2d, pb.joints_2d)
        assert pa.pose_parent_rel == pb.pose_parent_rel


def test_composite_labels_are_min_depth_cover():
    recs = [
        tiny_record(depth=2.0, center=(30.0, 30.0)),
        tiny_record(depth=2.6, center=(34.0, 30.0), seed=3),
        tiny_record(depth=3.2, center=(26.0, 32.0), seed=4),
    ]
    scene = compose_scene(recs, TINY_GRID)
    depths = [r.root_depth for r in recs]
    for y in range(64):
        for x in range(64):
            covering = [i for i, r in enumerate(recs) if r.mask[y, x]]
            if not covering:
                assert scene.composite_mask[y, x] == 0
            else:
                best = min(covering, key=lambda i: (depths[i], i))
                assert scene.composite_mask[y, x] == best + 1


def test_truncated_joint_flagged():
    rec = tiny_record(center=(2.0, 30.0))  # part of the body leaves the frame
    scene = compose_scene([rec], TINY_GRID)
    person = scene.scene_gt.persons[0]
    outside = (
        (person.joints_2d[:, 0] < 0)
        | (person.joints_2d[:, 0] >= 64)
        | (person.joints_2d[:, 1] < 0)
        | (person.joints_2d[:, 1] >= 64)
    )
    assert outside.any()
    assert np.array_equal(person.occluded, outside)


def test_occlusion_monotone_in_depth():
    base_far = tiny_record(depth=3.0, center=(32.0, 30.0))
    other = tiny_record(depth=2.5, center=(33.0, 31.0), seed=5)
    scene_far = compose_scene([other, base_far], TINY_GRID)
    # move the second person strictly nearer, same silhouette placement
    joints_near = base_far.joints_cam * np.array([1.0, 1.0, 2.0 / 3.0])
    nearer = PersonRecord(base_far.mask, joints_near, base_far.camera)
    scene_near = compose_scene([other, nearer], TINY_GRID)
    before = scene_far.scene_gt.persons[0].occluded
    after = scene_near.scene_gt.persons[0].occluded
    assert (before <= after).all()


def test_generated_scene_satisfies_map_preconditions():
    scene = generate_scene(99, n_persons=3)
    stack = encode_scene(scene.scene_gt)  # must not raise
    assert stack.heatmaps.shape[0] == N_JOINTS
    camera = default_camera(DEFAULT_GRID)
    assert camera.cx == DEFAULT_GRID.input_w / 2
