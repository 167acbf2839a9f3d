"""Scan-side pipeline: keyframe selection, accumulation, and query imprints.

Input frames are pose-stamped 2D point sets already labeled road/building
(upstream perception owns segmentation and the 3D-to-ground projection).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .geometry import Pose2, wrap_angle
from .grid import GridImage, PixelPoint
from .imaging import harris_corners, morph_close_open, skeletonize


@dataclass(frozen=True)
class SemanticFrame:
    pose: Pose2                 # vehicle pose in the odometry frame
    road: np.ndarray            # (N, 2) points, vehicle frame, meters
    building: np.ndarray        # (M, 2)
    timestamp: float = 0.0
    index: int = 0              # position in the source stream


def select_keyframes(
    stream, D_p: float, D_h: float
):
    """Keep the first frame, then frames moving >= D_p or turning >= D_h.

    Lazily yields from any frame iterable; deterministic and order-preserving.
    """
    last = None
    for frame in stream:
        if last is None:
            last = frame
            yield frame
            continue
        dp = math.hypot(frame.pose.x - last.pose.x, frame.pose.y - last.pose.y)
        dh = abs(wrap_angle(frame.pose.theta - last.pose.theta))
        if dp >= D_p or dh >= D_h:
            last = frame
            yield frame


@dataclass(frozen=True)
class KeyframeWindow:
    keyframes: tuple

    @property
    def center_index(self) -> int:
        return len(self.keyframes) // 2

    @property
    def center(self) -> "SemanticFrame":
        return self.keyframes[self.center_index]


def accumulate(window: KeyframeWindow) -> tuple[np.ndarray, np.ndarray]:
    """Express every keyframe's points in the middle keyframe's vehicle frame."""
    mid_inv = window.center.pose.invert()
    roads, builds = [], []
    for kf in window.keyframes:
        rel = mid_inv.compose(kf.pose)
        if len(kf.road):
            roads.append(rel.apply_array(kf.road))
        if len(kf.building):
            builds.append(rel.apply_array(kf.building))
    road = np.vstack(roads) if roads else np.zeros((0, 2))
    build = np.vstack(builds) if builds else np.zeros((0, 2))
    return road, build


def project_road_imprint(points: np.ndarray, cfg: Config,
                         center: Pose2 | None = None) -> GridImage:
    """Splat road points, infer the surface by closing/opening, then thin."""
    img = GridImage.blank(cfg.image_size_m, cfg.image_resolution_m,
                          center or Pose2.identity())
    if len(points):
        img.set_points_px(img.metric_to_px_array(points))
    if not img.bits.any():
        return img
    img = morph_close_open(img, cfg.morph_kernel_radius_px)
    return skeletonize(img)


def project_building_imprint(points: np.ndarray, cfg: Config,
                             center: Pose2 | None = None) -> GridImage:
    """Splat building points directly; no morphology or thinning."""
    img = GridImage.blank(cfg.image_size_m, cfg.image_resolution_m,
                          center or Pose2.identity())
    if len(points):
        img.set_points_px(img.metric_to_px_array(points))
    return img


def detect_intersection(imprint: GridImage, vehicle_px: PixelPoint,
                        cfg: Config) -> PixelPoint | None:
    """Harris corner of the skeleton nearest the vehicle; None when there is none.

    Distance ties resolve by lowest (v, u).
    """
    corners = harris_corners(imprint, cfg.harris_window_px, cfg.harris_k,
                             cfg.harris_threshold_rel)
    if not corners:
        return None
    return min(corners, key=lambda c: (c.distance_to(vehicle_px), c.v, c.u))


@dataclass(frozen=True)
class ObservedIntersection:
    position: PixelPoint        # detected point, image coordinates
    road_imprint: GridImage
    building_imprint: GridImage


def observe_window(window: KeyframeWindow, cfg: Config) -> ObservedIntersection | None:
    """Accumulate a window, build both imprints, and detect the intersection."""
    road_pts, bld_pts = accumulate(window)
    center = window.center.pose
    road = project_road_imprint(road_pts, cfg, center)
    vehicle = PixelPoint(road.side_px / 2.0, road.side_px / 2.0)
    det = detect_intersection(road, vehicle, cfg)
    if det is None:
        return None
    bld = project_building_imprint(bld_pts, cfg, center)
    return ObservedIntersection(det, road, bld)


# -- frame stream serialization (.jsonl) --------------------------------------

def frame_to_json(frame: SemanticFrame) -> str:
    return json.dumps({
        "t": frame.timestamp,
        "pose": [frame.pose.x, frame.pose.y, frame.pose.theta],
        "road": np.asarray(frame.road, dtype=float).tolist(),
        "building": np.asarray(frame.building, dtype=float).tolist(),
    })


def frame_from_json(line: str, index: int = 0) -> SemanticFrame:
    obj = json.loads(line)
    return SemanticFrame(
        pose=Pose2(*obj["pose"]),
        road=np.array(obj.get("road", []), dtype=np.float64).reshape(-1, 2),
        building=np.array(obj.get("building", []), dtype=np.float64).reshape(-1, 2),
        timestamp=float(obj.get("t", 0.0)),
        index=index,
    )


def write_frames(frames, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for fr in frames:
            f.write(frame_to_json(fr) + "\n")


def read_frames(path: str) -> list[SemanticFrame]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for i, ln in enumerate(f):
            ln = ln.strip()
            if ln:
                out.append(frame_from_json(ln, index=i))
    return out
