"""Planar rigid transforms (SE(2)) shared by every frame in the pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    t = math.remainder(theta, TAU)
    if t <= -math.pi:
        t += TAU
    return t


@dataclass(frozen=True)
class Pose2:
    """Rigid 2D transform: translation in meters, heading in radians.

    ``a.compose(b)`` maps coordinates expressed in frame b into frame a's
    parent; heading is kept in (-pi, pi].
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, 0.0, 0.0)

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def invert(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def apply(self, px: float, py: float) -> tuple[float, float]:
        """Transform a point expressed in this pose's frame into the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`apply` for an (N, 2) array."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        out = np.empty_like(pts)
        out[:, 0] = self.x + c * pts[:, 0] - s * pts[:, 1]
        out[:, 1] = self.y + s * pts[:, 0] + c * pts[:, 1]
        return out

    def translation(self) -> tuple[float, float]:
        return self.x, self.y


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def invert(p: Pose2) -> Pose2:
    return p.invert()


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between two 2D vectors."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    return abs(math.atan2(ax * by - ay * bx, ax * bx + ay * by))
