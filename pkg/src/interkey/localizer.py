"""Match gating and georeferencing of the vehicle pose into the global frame."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

from .config import Config
from .descriptor import describe
from .errors import (
    DegenerateIntersectionError,
    FingerprintMismatchError,
    PatternBoundsError,
)
from .geometry import Pose2
from .matchdb import DescriptorDatabase, MatchResult, query
from .scan import KeyframeWindow, observe_window

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalizationFix:
    global_pose: Pose2               # vehicle pose in G at frame_index
    matched_intersection_id: int
    hamming: int
    window_center_pose: Pose2        # implied pose of the window's middle keyframe in G
    frame_index: int = 0
    timestamp: float = 0.0


def georeference(
    match: MatchResult,
    obs_pose_in_Lc: Pose2,
    odom_Lc_to_Lk: Pose2,
    tau_h: int,
) -> LocalizationFix | None:
    """Chain map pose, inverted observation pose, and odometry; gate on Hamming."""
    if match.hamming > tau_h:
        return None
    t_g_lc = match.record.global_pose.compose(obs_pose_in_Lc.invert())
    return LocalizationFix(
        global_pose=t_g_lc.compose(odom_Lc_to_Lk),
        matched_intersection_id=match.record.intersection_id,
        hamming=match.hamming,
        window_center_pose=t_g_lc,
    )


def run_localization(stream, db: DescriptorDatabase, cfg: Config):
    """Online localization over a frame stream.

    Every new keyframe completing a window triggers detection, description,
    top-1 retrieval, and gating. Returns (fixes, estimates) where estimates
    holds one Pose2 or None per input frame, dead-reckoned from the latest
    fix with incremental odometry.
    """
    if db.fingerprint != cfg.fingerprint():
        raise FingerprintMismatchError(
            "database was built with a different configuration")
    fixes: list[LocalizationFix] = []
    estimates: list[Pose2 | None] = []
    kf: deque = deque(maxlen=cfg.keyframe_count)
    last_kf = None
    anchor = None  # (global pose at fix, odometry pose at fix)

    for frame in stream:
        is_kf = False
        if last_kf is None:
            is_kf = True
        else:
            dp = math.hypot(frame.pose.x - last_kf.pose.x,
                            frame.pose.y - last_kf.pose.y)
            dh = abs((frame.pose.theta - last_kf.pose.theta + math.pi)
                     % (2 * math.pi) - math.pi)
            is_kf = dp >= cfg.keyframe_position_threshold_m or \
                dh >= cfg.keyframe_heading_threshold_rad
        if is_kf:
            last_kf = frame
            kf.append(frame)
            if len(kf) == cfg.keyframe_count:
                fix = _process_window(KeyframeWindow(tuple(kf)), frame, db, cfg)
                if fix is not None:
                    fixes.append(fix)
                    anchor = (fix.global_pose, frame.pose)
        if anchor is None:
            estimates.append(None)
        else:
            g0, o0 = anchor
            estimates.append(g0.compose(o0.invert().compose(frame.pose)))
    return fixes, estimates


def _process_window(window: KeyframeWindow, newest, db, cfg):
    obs = observe_window(window, cfg)
    if obs is None:
        return None
    try:
        res = describe(
            obs.road_imprint, obs.building_imprint, obs.position,
            R_i=cfg.descriptor_inner_radius_m,
            R_o=cfg.descriptor_outer_radius_m,
            tau_s=cfg.symmetry_threshold,
            N_r=cfg.pattern_ring_count,
            N_b=cfg.pattern_base_cell_count,
            mode="query",
            source=f"scan:{newest.index}",
        )
    except DegenerateIntersectionError:
        return None
    except PatternBoundsError:
        # detection too close to the image rim for the pattern; a window
        # centered nearer the intersection will describe it instead
        return None
    qdesc = res.descriptors[0]
    top = query(db, qdesc, 1)
    if not top:
        return None
    mx, my = obs.road_imprint.px_to_metric(qdesc.refined_point)
    obs_pose = Pose2(mx, my, math.atan2(qdesc.orientation[1], qdesc.orientation[0]))
    # observation is in the center keyframe's vehicle frame
    obs_in_lc = obs_pose
    odom_rel = window.center.pose.invert().compose(newest.pose)
    fix = georeference(top[0], obs_in_lc, odom_rel, cfg.matching_threshold_bits)
    if fix is None:
        return None
    return LocalizationFix(
        global_pose=fix.global_pose,
        matched_intersection_id=fix.matched_intersection_id,
        hamming=fix.hamming,
        window_center_pose=fix.window_center_pose,
        frame_index=newest.index,
        timestamp=newest.timestamp,
    )
