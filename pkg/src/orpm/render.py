"""Deterministic raster overlays: masks, 2D skeletons, and read-out sites
drawn into a portable pixmap.

Pure numpy rasterization; identical inputs yield byte-identical images.
Visible joints are filled squares, occluded joints are drawn as crosses
(the documented alternate style), and the torso read-out anchors (neck and
pelvis, sites of every joint's pose-map) carry a larger halo.
"""

import numpy as np

from .errors import ContractError
from .maps import SceneGT
from .skeleton import Joint, PARENT_INDEX

# Muted fill colors per person label, cycled.
MASK_PALETTE = (
    (60, 70, 110),
    (70, 100, 60),
    (110, 70, 60),
    (90, 60, 100),
)
BONE_COLOR = (230, 230, 230)
JOINT_COLOR = (250, 220, 40)
OCCLUDED_COLOR = (240, 60, 60)
ANCHOR_COLOR = (60, 220, 220)
REFINE_SITE_COLOR = (230, 80, 230)

_TORSO_ANCHORS = (Joint.NECK, Joint.PELVIS)


def _paint_square(img, x, y, half, color):
    h, w = img.shape[:2]
    x0, x1 = max(x - half, 0), min(x + half + 1, w)
    y0, y1 = max(y - half, 0), min(y + half + 1, h)
    if x0 < x1 and y0 < y1:
        img[y0:y1, x0:x1] = color


def _paint_cross(img, x, y, half, color):
    h, w = img.shape[:2]
    for d in range(-half, half + 1):
        for px, py in ((x + d, y + d), (x + d, y - d)):
            if 0 <= px < w and 0 <= py < h:
                img[py, px] = color


def _paint_segment(img, a, b, color):
    length = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    n = max(int(np.ceil(length * 2)), 1)
    h, w = img.shape[:2]
    for t in np.linspace(0.0, 1.0, n + 1):
        x = int(np.floor(a[0] + t * (b[0] - a[0])))
        y = int(np.floor(a[1] + t * (b[1] - a[1])))
        if 0 <= x < w and 0 <= y < h:
            img[y, x] = color


def render_scene(
    scene: SceneGT,
    composite_mask: np.ndarray | None = None,
    detections=None,
    poses=None,
) -> np.ndarray:
    """(H, W, 3) uint8 overlay of masks, skeletons, and read-out sites.

    When pose results and their detections are given, the limb read-out
    sites named by each pose's provenance are marked as hollow diamonds.
    """
    if not scene.persons:
        raise ContractError("nothing to render: the scene has no persons")
    h, w = scene.grid.input_h, scene.grid.input_w
    img = np.zeros((h, w, 3), dtype=np.uint8)
    if composite_mask is not None:
        for label in np.unique(composite_mask):
            if label == 0:
                continue
            img[composite_mask == label] = MASK_PALETTE[(label - 1) % len(MASK_PALETTE)]
    for person in scene.persons:
        pts = person.joints_2d
        for j in Joint:
            p = PARENT_INDEX[j]
            if p >= 0:
                _paint_segment(img, pts[p], pts[j], BONE_COLOR)
        for anchor in _TORSO_ANCHORS:
            _paint_square(img, int(pts[anchor, 0]), int(pts[anchor, 1]), 3, ANCHOR_COLOR)
        for j in Joint:
            x, y = int(pts[j, 0]), int(pts[j, 1])
            if person.occluded[j]:
                _paint_cross(img, x, y, 2, OCCLUDED_COLOR)
            else:
                _paint_square(img, x, y, 1, JOINT_COLOR)
    if detections is not None and poses is not None:
        for det, result in zip(detections, poses):
            for site in _refinement_sites(det, result):
                _paint_cross(img, int(site[0]), int(site[1]), 3, REFINE_SITE_COLOR)
    return img


def _refinement_sites(det, result):
    """Detection locations the pose's provenance names as limb read-outs."""
    sites = []
    for tag in dict.fromkeys(result.provenance):
        if not tag.startswith("limb_at_"):
            continue
        j = Joint[tag.removeprefix("limb_at_").upper()]
        if det.confidences[j] > 0:
            sites.append(det.joints_2d[j])
    return sites


def write_ppm(img: np.ndarray) -> bytes:
    """Binary P6 portable pixmap."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ContractError("write_ppm expects an (H, W, 3) uint8 image")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()
