"""Intersection description: branch segmentation, discrepancy mitigation,
characteristic orientation, and area-equalized polar shape encoding.

Both modalities share this code path; the only asymmetry is the handling of
rotationally symmetric intersections (a query keeps one orientation, a
database record is emitted per branch orientation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateIntersectionError, PatternBoundsError
from .grid import GridImage, PixelPoint, draw_polyline
from .imaging import ray_cast_visibility

# metric slack when deciding whether a component touches the inner annulus
# boundary: the first pixel inside can sit up to ~1.5 px beyond the circle
_INNER_TOUCH_SLACK_PX = 2.0


@dataclass(frozen=True)
class Branch:
    """Connected road-skeleton component inside the consistent annulus."""

    start: PixelPoint          # member pixel nearest the inner boundary
    centroid: PixelPoint       # mean of member pixel coordinates
    orientation: np.ndarray    # metric unit vector, refined-point -> centroid
    pixels: np.ndarray         # (N, 2) integer (u, v) member pixels

    def line(self) -> tuple[PixelPoint, np.ndarray]:
        """Approximate branch line through start and centroid (pixel space)."""
        d = np.array([self.centroid.u - self.start.u, self.centroid.v - self.start.v])
        n = float(np.hypot(d[0], d[1]))
        if n == 0.0:
            d = np.array([1.0, 0.0])
            n = 1.0
        return self.start, d / n


def _unit_metric(from_px: PixelPoint, to_px: PixelPoint) -> np.ndarray:
    """Unit vector in center-frame metric axes (+x right, +y up) between pixels."""
    dx = to_px.u - from_px.u
    dy = -(to_px.v - from_px.v)
    n = math.hypot(dx, dy)
    if n == 0.0:
        return np.array([1.0, 0.0])
    return np.array([dx / n, dy / n])


def segment_branches(
    road: GridImage, rho_I: PixelPoint, R_i: float, R_o: float
) -> list[Branch]:
    """8-connected skeleton components in the annulus R_i <= d <= R_o.

    Skeleton junction pixels (>= 3 set 8-neighbors) are removed first, so a
    branch ends before any further junction; components that do not reach the
    inner boundary (fragments beyond a second junction, roads clipping the
    annulus rim) are discarded. Branches are ordered by start pixel (v, u).
    """
    bits = road.bits
    r = road.resolution
    vs, us = np.nonzero(bits)
    if len(vs) == 0:
        return []
    d = np.hypot(us - rho_I.u, vs - rho_I.v) * r
    ann = (d >= R_i) & (d <= R_o)

    neigh = ndimage.convolve(bits.astype(np.uint8), np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]]),
                             mode="constant")
    junction = bits & (neigh >= 3)

    mask = np.zeros_like(bits)
    mask[vs[ann], us[ann]] = True
    mask &= ~junction
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))

    branches = []
    for lab in range(1, n + 1):
        lv, lu = np.nonzero(labels == lab)
        ld = np.hypot(lu - rho_I.u, lv - rho_I.v) * r
        if ld.min() > R_i + _INNER_TOUCH_SLACK_PX * r:
            continue
        order = np.lexsort((lu, lv, ld))
        s = order[0]
        start = PixelPoint(float(lu[s]), float(lv[s]))
        centroid = PixelPoint(float(lu.mean()), float(lv.mean()))
        branches.append(
            Branch(start, centroid, _unit_metric(rho_I, centroid),
                   np.stack([lu, lv], axis=1))
        )
    branches.sort(key=lambda b: (b.start.v, b.start.u))
    return branches


def refine_intersection(branches: list[Branch], rho_I: PixelPoint, R_i: float,
                        resolution: float) -> PixelPoint:
    """Pixel in the inner disk minimizing summed squared distances to branch lines.

    Exhaustive evaluation over every grid pixel with ||p - rho_I|| <= R_i;
    ties resolved by distance to rho_I, then lowest (v, u).
    """
    if len(branches) < 2:
        raise DegenerateIntersectionError(f"need >= 2 branches, got {len(branches)}")
    rad = R_i / resolution
    u0, v0 = rho_I.u, rho_I.v
    uu = np.arange(math.floor(u0 - rad), math.ceil(u0 + rad) + 1)
    vv = np.arange(math.floor(v0 - rad), math.ceil(v0 + rad) + 1)
    gu, gv = np.meshgrid(uu, vv)
    gu = gu.ravel().astype(np.float64)
    gv = gv.ravel().astype(np.float64)
    d2c = (gu - u0) ** 2 + (gv - v0) ** 2
    inside = d2c <= rad * rad
    gu, gv, d2c = gu[inside], gv[inside], d2c[inside]

    obj = np.zeros_like(gu)
    for b in branches:
        p, dirv = b.line()
        dx, dy = dirv[0], dirv[1]
        cross = (gu - p.u) * dy - (gv - p.v) * dx
        obj = obj + cross * cross  # |dir| == 1, so cross is the perpendicular distance

    best = obj.min()
    tie = obj == best
    keys = np.lexsort((gu[tie], gv[tie], d2c[tie]))
    k = np.nonzero(tie)[0][keys[0]]
    return PixelPoint(float(gu[k]), float(gv[k]))


def refine_road_imprint(
    road: GridImage,
    rho_hat: PixelPoint,
    starts: list[PixelPoint],
    rho_I: PixelPoint,
    R_i: float,
) -> GridImage:
    """Replace the discrepant inner disk with straight spokes to branch starts.

    Pixels inside the disk of radius R_i about the original point are cleared,
    annulus content is kept as-is, and one-pixel lines are drawn from the
    refined point to every branch start.
    """
    out = road.copy()
    r = road.resolution
    vs, us = np.nonzero(out.bits)
    d = np.hypot(us - rho_I.u, vs - rho_I.v) * r
    kill = d < R_i
    out.bits[vs[kill], us[kill]] = False
    for s in starts:
        out = draw_polyline(out, [rho_hat, s], 1)
    return out


def refine_building_imprint(building: GridImage, rho_hat: PixelPoint) -> GridImage:
    """Visibility-filter the building imprint from the refined point."""
    return ray_cast_visibility(building, rho_hat)


def _image_angle(vec: np.ndarray) -> float:
    """Orientation angle in [0, 2*pi) in the center-frame metric axes."""
    a = math.atan2(vec[1], vec[0])
    return a + 2.0 * math.pi if a < 0.0 else a


def characteristic_orientations(
    branches: list[Branch],
    rho_hat: PixelPoint,
    tau_s: float,
    mode: str,
) -> list[np.ndarray]:
    """Pick the pattern-steering orientation(s) from branch orientations.

    Branch orientations are recomputed from the refined point. If the summed
    orientation vector is longer than tau_s, the branch orientation nearest
    the sum wins. Otherwise the intersection is symmetric: a query keeps the
    branch with the smallest image angle; a database entry keeps every branch
    orientation so matching can choose among them.
    """
    if mode not in ("query", "database"):
        raise ValueError(f"mode must be 'query' or 'database', got {mode!r}")
    if len(branches) < 2:
        raise DegenerateIntersectionError(f"need >= 2 branches, got {len(branches)}")
    nus = [_unit_metric(rho_hat, b.centroid) for b in branches]
    summary = np.sum(nus, axis=0)
    if float(np.hypot(summary[0], summary[1])) > tau_s:
        gaps = [abs(math.remainder(_image_angle(nu) - _image_angle(summary), 2 * math.pi))
                for nu in nus]
        return [nus[int(np.argmin(gaps))]]
    if mode == "query":
        return [nus[int(np.argmin([_image_angle(nu) for nu in nus]))]]
    return nus


@dataclass(frozen=True)
class SamplingPattern:
    """Polar disk decomposition: ring i holds base_cells * i equal-area cells."""

    R_o: float
    N_r: int
    N_b: int
    kappa: float = field(init=False)
    ring_radii: tuple = field(init=False)        # outer radius of each ring
    cells_per_ring: tuple = field(init=False)
    cell_areas: tuple = field(init=False)

    def __post_init__(self):
        if self.N_r < 1 or self.N_b < 1:
            raise ValueError("N_r and N_b must be >= 1")
        kappa = math.pi * self.R_o**2 / (self.N_b * self.N_r**2)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(
            self, "ring_radii", tuple(self.R_o * i / self.N_r for i in range(1, self.N_r + 1))
        )
        object.__setattr__(
            self, "cells_per_ring", tuple(self.N_b * i for i in range(1, self.N_r + 1))
        )
        object.__setattr__(
            self, "cell_areas", tuple(kappa * (2.0 - 1.0 / i) for i in range(1, self.N_r + 1))
        )

    @property
    def total_bits(self) -> int:
        return self.N_b * self.N_r * (self.N_r + 1) // 2

    def ring_offset(self, i: int) -> int:
        """Bit offset of ring i (1-based) in the descriptor string."""
        return self.N_b * (i - 1) * i // 2


def build_pattern(R_o: float, N_r: int, N_b: int) -> SamplingPattern:
    return SamplingPattern(R_o, N_r, N_b)


@dataclass(frozen=True)
class Descriptor:
    """Binary intersection descriptor plus the pose quantities it was built at."""

    bits: np.ndarray           # (Q,) uint8 of 0/1, rings inner -> outer, CCW
    refined_point: PixelPoint
    orientation: np.ndarray    # metric unit vector
    source: str = ""           # e.g. "map:17" or "scan:3"

    def packed(self) -> bytes:
        return np.packbits(self.bits, bitorder="little").tobytes()

    def hex(self) -> str:
        return self.packed().hex()

    @staticmethod
    def from_packed(payload: bytes, q: int, refined_point: PixelPoint,
                    orientation: np.ndarray, source: str = "") -> "Descriptor":
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8),
                             count=q, bitorder="little")
        return Descriptor(bits, refined_point, orientation, source)


def encode(
    combined: GridImage,
    rho_hat: PixelPoint,
    nu_hat: np.ndarray,
    pattern: SamplingPattern,
) -> np.ndarray:
    """Sample the combined imprint into the steered polar pattern (bit per cell).

    A cell is 1 iff any set pixel center lies inside it; the pattern is
    centered at the refined point with every ring's cell 0 leading boundary
    on nu_hat, bits ordered inner ring to outer, counter-clockwise.
    """
    m = combined.side_px
    r = combined.resolution
    rad_px = pattern.R_o / r
    if (rho_hat.u - rad_px < -0.5 or rho_hat.u + rad_px > m - 0.5
            or rho_hat.v - rad_px < -0.5 or rho_hat.v + rad_px > m - 0.5):
        raise PatternBoundsError(
            f"pattern radius {pattern.R_o} m exceeds image bounds from "
            f"({rho_hat.u:.1f}, {rho_hat.v:.1f}); need image size >= 2*(R_o + R_i)"
        )
    bits = np.zeros(pattern.total_bits, dtype=np.uint8)
    vs, us = np.nonzero(combined.bits)
    if len(vs) == 0:
        return bits
    dx = (us - rho_hat.u) * r
    dy = -(vs - rho_hat.v) * r
    dist = np.hypot(dx, dy)
    inside = dist <= pattern.R_o
    dx, dy, dist = dx[inside], dy[inside], dist[inside]
    if len(dist) == 0:
        return bits

    ring = np.ceil(dist * pattern.N_r / pattern.R_o).astype(np.int64)
    np.clip(ring, 1, pattern.N_r, out=ring)
    phi0 = math.atan2(nu_hat[1], nu_hat[0])
    rel = np.mod(np.arctan2(dy, dx) - phi0, 2.0 * math.pi)
    ncell = pattern.N_b * ring
    cell = np.floor(rel * ncell / (2.0 * math.pi)).astype(np.int64)
    np.clip(cell, 0, ncell - 1, out=cell)
    offset = pattern.N_b * (ring - 1) * ring // 2
    bits[offset + cell] = 1
    return bits


@dataclass(frozen=True)
class DescribeResult:
    descriptors: list
    refined_point: PixelPoint
    branches: list


def describe(
    road: GridImage,
    building: GridImage,
    rho_I: PixelPoint,
    *,
    R_i: float,
    R_o: float,
    tau_s: float,
    N_r: int,
    N_b: int,
    mode: str,
    source: str = "",
) -> DescribeResult:
    """Full description pipeline for one intersection in either modality.

    Returns one descriptor per characteristic orientation, each carrying the
    shared refined point and its own steering orientation. Raises
    DegenerateIntersectionError when fewer than two branches are found.
    """
    branches = segment_branches(road, rho_I, R_i, R_o)
    if len(branches) < 2:
        raise DegenerateIntersectionError(
            f"{source or 'intersection'}: {len(branches)} branch(es) in annulus"
        )
    rho_hat = refine_intersection(branches, rho_I, R_i, road.resolution)
    road_ref = refine_road_imprint(road, rho_hat, [b.start for b in branches], rho_I, R_i)
    bld_ref = refine_building_imprint(building, rho_hat)
    combined = road_ref.copy()
    combined.bits |= bld_ref.bits

    pattern = build_pattern(R_o, N_r, N_b)
    orients = characteristic_orientations(branches, rho_hat, tau_s, mode)
    descs = [
        Descriptor(encode(combined, rho_hat, nu, pattern), rho_hat, nu, source)
        for nu in orients
    ]
    return DescribeResult(descs, rho_hat, branches)
