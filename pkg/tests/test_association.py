import numpy as np
import pytest

from conftest import make_person, make_scene
from orpm.association import (
    Detection2D,
    detect_persons,
    extract_peaks,
    group_persons,
    paf_score,
)
from orpm.errors import ContractError
from orpm.maps import HEATMAP_SIGMA, encode_scene, heatmap_target, pixel_to_cell
from orpm.skeleton import Joint, N_JOINTS
from orpm.synth import generate_isolated_scene


def gaussian_map(shape, peaks, sigma=HEATMAP_SIGMA):
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    out = np.zeros(shape, dtype=np.float32)
    for px, py in peaks:
        g = np.exp(-((xs - px) ** 2 + (ys - py) ** 2) / (2 * sigma**2))
        out = np.maximum(out, g.astype(np.float32))
    return out


def peak_scan_oracle(hm, threshold):
    """Exhaustive 8-neighborhood scan."""
    found = []
    h, w = hm.shape
    for y in range(h):
        for x in range(w):
            v = hm[y, x]
            if v < threshold:
                continue
            strict = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and not v > hm[ny, nx]:
                        strict = False
            if strict:
                found.append((x, y))
    return found


def stack_of(hm):
    maps = np.zeros((N_JOINTS, *hm.shape), dtype=np.float32)
    maps[Joint.WRIST_R] = hm
    return maps


def test_extract_peaks_single_gaussian():
    hm = gaussian_map((16, 16), [(8, 8)])
    peaks = extract_peaks(stack_of(hm), threshold=0.1)
    assert [(p.x, p.y, p.confidence) for p in peaks.per_joint[Joint.WRIST_R]] == [(8, 8, 1.0)]


def test_extract_peaks_all_zero():
    peaks = extract_peaks(np.zeros((N_JOINTS, 16, 16), dtype=np.float32))
    assert all(len(p) == 0 for p in peaks.per_joint)


def test_extract_peaks_two_gaussians_match_scan_oracle():
    hm = gaussian_map((16, 16), [(4, 4), (12, 4)])
    peaks = extract_peaks(stack_of(hm), threshold=0.1)
    got = [(p.x, p.y) for p in peaks.per_joint[Joint.WRIST_R]]
    assert sorted(got) == sorted(peak_scan_oracle(hm, 0.1))
    assert len(got) == 2


def test_paf_score_aligned_field():
    paf = np.zeros((8, 8, 2), dtype=np.float32)
    paf[:, :, 0] = 1.0  # everywhere +x
    assert paf_score((8.0, 32.0), (56.0, 32.0), paf, 8) == pytest.approx(1.0)


def test_paf_score_orthogonal_field():
    paf = np.zeros((8, 8, 2), dtype=np.float32)
    paf[:, :, 1] = 1.0
    assert paf_score((8.0, 32.0), (56.0, 32.0), paf, 8) == pytest.approx(0.0)


def test_paf_score_half_aligned():
    paf = np.zeros((8, 8, 2), dtype=np.float32)
    paf[:, :4, 0] = 1.0  # left half aligned, right half zero
    # sample-mean oracle over the 10 equidistant samples
    samples = np.linspace([8.0, 32.0], [56.0, 32.0], 10)
    expected = np.mean([paf[int(y // 8), int(x // 8), 0] for x, y in samples])
    got = paf_score((8.0, 32.0), (56.0, 32.0), paf, 8)
    assert got == pytest.approx(expected)
    assert got == pytest.approx(0.5)


def test_paf_score_antisymmetric_under_negation():
    rng = np.random.default_rng(0)
    paf = rng.normal(size=(8, 8, 2)).astype(np.float32)
    s = paf_score((5.0, 10.0), (60.0, 50.0), paf, 8)
    s_neg = paf_score((5.0, 10.0), (60.0, 50.0), -paf, 8)
    assert s_neg == pytest.approx(-s)


def test_paf_score_coincident_peaks():
    paf = np.ones((8, 8, 2), dtype=np.float32)
    assert paf_score((10.0, 10.0), (10.0, 10.0), paf, 8) == 0.0


def test_group_single_person_complete():
    scene = generate_isolated_scene(21, n_persons=1)
    stack = encode_scene(scene.scene_gt)
    dets = detect_persons(stack)
    assert len(dets) == 1
    assert (dets[0].confidences > 0).sum() == 17


def test_group_two_disjoint_persons_no_cross_joints():
    scene = generate_isolated_scene(22, n_persons=2)
    stack = encode_scene(scene.scene_gt)
    dets = detect_persons(stack)
    assert len(dets) == 2
    gt = [p.joints_2d for p in scene.scene_gt.persons]
    for det in dets:
        # every joint of a detection belongs to the same ground-truth person
        owners = set()
        for j in Joint:
            dists = [np.linalg.norm(det.joints_2d[j] - g[j]) for g in gt]
            owners.add(int(np.argmin(dists)))
        assert len(owners) == 1


def test_group_empty_peaks():
    from orpm.association import PeakSet
    from orpm.maps import GridSpec

    peaks = PeakSet(tuple(() for _ in range(N_JOINTS)))
    grid = GridSpec(64, 64, 4, 8)
    assert group_persons(peaks, np.zeros((N_JOINTS, 8, 8, 2), dtype=np.float32), grid) == []


def test_group_round_trip_property():
    for seed in (31, 32, 33, 34):
        for m in (1, 2, 3):
            scene = generate_isolated_scene(seed * 10 + m, n_persons=m)
            stack = encode_scene(scene.scene_gt)
            dets = detect_persons(stack)
            assert len(dets) == m, f"seed {seed} m {m}"
            for det in dets:
                assert (det.confidences > 0).all()


def test_group_one_to_one_peak_use():
    scene = generate_isolated_scene(41, n_persons=3)
    stack = encode_scene(scene.scene_gt)
    dets = detect_persons(stack)
    for j in Joint:
        cells = [tuple(d.joints_2d[j]) for d in dets if d.has_joint(j)]
        assert len(cells) == len(set(cells))


def test_group_determinism():
    scene = generate_isolated_scene(42, n_persons=3)
    stack = encode_scene(scene.scene_gt)
    a = detect_persons(stack)
    b = detect_persons(stack)
    assert len(a) == len(b)
    for da, db in zip(a, b):
        assert np.array_equal(da.joints_2d, db.joints_2d, equal_nan=True)
        assert np.array_equal(da.confidences, db.confidences)


def test_detection_requires_consistent_conf_and_location():
    joints = np.full((N_JOINTS, 2), np.nan)
    conf = np.zeros(N_JOINTS)
    conf[0] = 0.5  # confident joint without a location
    with pytest.raises(ContractError):
        Detection2D(joints, conf)


def test_heatmap_peaks_recover_joint_cells():
    scene = make_scene([make_person()])
    hm = heatmap_target(scene)
    peaks = extract_peaks(hm)
    person = scene.persons[0]
    for j in Joint:
        cell = pixel_to_cell(person.joints_2d[j], scene.grid.stride_pose)
        assert [(p.x, p.y) for p in peaks.per_joint[j]] == [cell]
