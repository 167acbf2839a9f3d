"""Evaluation metrics: match verification, Recall@TopN, PR curves, Recall@Km."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import Pose2


@dataclass
class GroundTruth:
    """Per-frame truth poses plus the odometry stream they were derived from."""

    poses: list                      # list[Pose2], global frame
    odom: list                       # list[Pose2], odometry frame (same length)
    timestamps: list = field(default_factory=list)


def verify_match(
    query_pos_in_Lc: tuple,
    truth_pose: Pose2,
    candidate_pos_in_G: tuple,
    radius: float = 5.0,
) -> bool:
    """True iff the truth-transformed query lands within radius of the candidate."""
    gx, gy = truth_pose.apply(query_pos_in_Lc[0], query_pos_in_Lc[1])
    return math.hypot(gx - candidate_pos_in_G[0], gy - candidate_pos_in_G[1]) < radius


def recall_at_topN(results: list, truth: list, N: int) -> float | None:
    """Fraction of queries with a true intersection among the top-N candidates.

    results: per query, a ranked list of (intersection_id, distance);
    truth: per query, the set of true intersection ids. Candidates are
    deduplicated by id before the first N are taken. None when there are no
    queries.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if len(results) != len(truth):
        raise ValueError("results and truth must align")
    if not results:
        return None
    hits = 0
    for ranked, true_ids in zip(results, truth):
        seen: list[int] = []
        for iid, _ in ranked:
            if iid not in seen:
                seen.append(iid)
            if len(seen) == N:
                break
        if any(iid in true_ids for iid in seen):
            hits += 1
    return hits / len(results)


def precision_recall_curve(results: list, thresholds: list) -> list:
    """PR points for top-1 acceptance at each threshold.

    results: per query, (top1_distance, is_true). Returns a list of
    (precision, recall) aligned with thresholds; precision is None where no
    query is accepted.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    total = len(results)
    out = []
    for tau in thresholds:
        accepted = [t for t in results if t[0] <= tau]
        true_acc = sum(1 for t in accepted if t[1])
        precision = true_acc / len(accepted) if accepted else None
        recall = true_acc / total if total else 0.0
        out.append((precision, recall))
    return out


def recall_at_Km(estimates: list, truth_poses: list, K: float) -> float:
    """Proportion of frames with position error under K meters.

    estimates holds one Pose2 or None per frame; frames without an estimate
    count as failures.
    """
    if len(estimates) != len(truth_poses):
        raise ValueError("estimates and truth must align")
    if not truth_poses:
        return 0.0
    ok = 0
    for est, tru in zip(estimates, truth_poses):
        if est is None:
            continue
        if math.hypot(est.x - tru.x, est.y - tru.y) < K:
            ok += 1
    return ok / len(truth_poses)
