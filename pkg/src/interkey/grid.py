"""Binary top-view raster grid and its pixel/metric coordinate conventions.

Convention, fixed for both modalities so images are bit-compatible:
(u, v) = (column, row); the center frame's origin sits at pixel
(M/2, M/2); +u is +x of the center frame and +v is -y (rows grow
downward). All metric coordinates handled here are expressed in the
image's center frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2


@dataclass(frozen=True)
class PixelPoint:
    """Continuous (sub-pixel) image coordinate."""

    u: float
    v: float

    def round(self) -> tuple[int, int]:
        # floor(x + 0.5): deterministic half-up, unlike banker's rounding
        return int(math.floor(self.u + 0.5)), int(math.floor(self.v + 0.5))

    def distance_to(self, other: "PixelPoint") -> float:
        return math.hypot(self.u - other.u, self.v - other.v)


@dataclass
class GridImage:
    """M x M binary occupancy raster with physical resolution and center frame."""

    side_px: int
    resolution: float
    center: Pose2 = field(default_factory=Pose2.identity)
    bits: np.ndarray | None = None

    def __post_init__(self):
        if self.bits is None:
            self.bits = np.zeros((self.side_px, self.side_px), dtype=bool)
        else:
            self.bits = np.asarray(self.bits, dtype=bool)
            if self.bits.shape != (self.side_px, self.side_px):
                raise ValueError(
                    f"bits shape {self.bits.shape} does not match side_px {self.side_px}"
                )

    @staticmethod
    def blank(size_m: float, resolution: float, center: Pose2 | None = None) -> "GridImage":
        side = int(round(size_m / resolution))
        return GridImage(side, resolution, center or Pose2.identity())

    @property
    def size_m(self) -> float:
        return self.side_px * self.resolution

    def copy(self) -> "GridImage":
        return GridImage(self.side_px, self.resolution, self.center, self.bits.copy())

    def count(self) -> int:
        return int(self.bits.sum())

    # -- coordinate conversions (metric coords are in the center frame) --

    def metric_to_px(self, x: float, y: float) -> PixelPoint:
        half = self.side_px / 2.0
        return PixelPoint(half + x / self.resolution, half - y / self.resolution)

    def px_to_metric(self, p: PixelPoint) -> tuple[float, float]:
        half = self.side_px / 2.0
        return (p.u - half) * self.resolution, (half - p.v) * self.resolution

    def metric_to_px_array(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        half = self.side_px / 2.0
        out = np.empty_like(pts)
        out[:, 0] = half + pts[:, 0] / self.resolution
        out[:, 1] = half - pts[:, 1] / self.resolution
        return out

    def px_to_metric_array(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        half = self.side_px / 2.0
        out = np.empty_like(uv)
        out[:, 0] = (uv[:, 0] - half) * self.resolution
        out[:, 1] = (half - uv[:, 1]) * self.resolution
        return out

    def in_bounds(self, p: PixelPoint) -> bool:
        u, v = p.round()
        return 0 <= u < self.side_px and 0 <= v < self.side_px

    def set_points_px(self, uv: np.ndarray) -> None:
        """Splat continuous pixel coordinates: each point sets its nearest pixel."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        if len(uv) == 0:
            return
        cols = np.floor(uv[:, 0] + 0.5).astype(np.int64)
        rows = np.floor(uv[:, 1] + 0.5).astype(np.int64)
        ok = (cols >= 0) & (cols < self.side_px) & (rows >= 0) & (rows < self.side_px)
        self.bits[rows[ok], cols[ok]] = True


def _clip_segment(x0, y0, x1, y1, lo, hi):
    """Liang-Barsky clip of a segment to the square [lo, hi]^2; None if outside."""
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - lo), (dx, hi - x0), (-dy, y0 - lo), (dy, hi - y0)):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return x0 + t0 * dx, y0 + t0 * dy, x0 + t1 * dx, y0 + t1 * dy


def _bresenham(u0: int, v0: int, u1: int, v1: int) -> np.ndarray:
    """Integer pixels of the 8-connected line from (u0,v0) to (u1,v1), inclusive."""
    du, dv = abs(u1 - u0), abs(v1 - v0)
    su = 1 if u1 >= u0 else -1
    sv = 1 if v1 >= v0 else -1
    n = max(du, dv) + 1
    out = np.empty((n, 2), dtype=np.int64)
    u, v = u0, v0
    err = du - dv
    for i in range(n):
        out[i, 0] = u
        out[i, 1] = v
        e2 = 2 * err
        if e2 > -dv:
            err -= dv
            u += su
        if e2 < du:
            err += du
            v += sv
    return out


def draw_polyline(img: GridImage, pts: list[PixelPoint], width_px: int = 1) -> GridImage:
    """Rasterize segments between consecutive points; out-of-bounds parts are clipped.

    Endpoints are rounded half-up to grid points before Bresenham; for
    width_px > 1 the 1-px line is dilated by a disk of radius width_px // 2.
    """
    if width_px < 1:
        raise ValueError(f"width_px must be >= 1, got {width_px}")
    out = img.copy()
    if len(pts) < 1:
        return out
    m = img.side_px
    line = np.zeros_like(out.bits) if width_px > 1 else out.bits
    margin = float(width_px)  # keep pixels whose brush reaches into the image
    prev = pts[0]
    if len(pts) == 1:
        u, v = prev.round()
        if 0 <= u < m and 0 <= v < m:
            line[v, u] = True
    for cur in pts[1:]:
        seg = _clip_segment(prev.u, prev.v, cur.u, cur.v, -margin, m - 1 + margin)
        if seg is not None:
            u0, v0 = int(math.floor(seg[0] + 0.5)), int(math.floor(seg[1] + 0.5))
            u1, v1 = int(math.floor(seg[2] + 0.5)), int(math.floor(seg[3] + 0.5))
            px = _bresenham(u0, v0, u1, v1)
            ok = (px[:, 0] >= 0) & (px[:, 0] < m) & (px[:, 1] >= 0) & (px[:, 1] < m)
            px = px[ok]
            line[px[:, 1], px[:, 0]] = True
        prev = cur
    if width_px > 1:
        from .imaging import dilate_disk

        out.bits |= dilate_disk(line, width_px // 2)
    return out


# -- PGM (P5) serialization with line-oriented key=value sidecar metadata --

def write_pgm(img: GridImage, path: str) -> None:
    """Write 8-bit binary PGM (0 = empty, 255 = set) plus a ``.meta`` sidecar."""
    data = np.where(img.bits, 255, 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.side_px} {img.side_px}\n255\n".encode("ascii"))
        f.write(data.tobytes())
    meta = (
        f"side_px={img.side_px}\n"
        f"resolution={img.resolution!r}\n"
        f"center_x={img.center.x!r}\n"
        f"center_y={img.center.y!r}\n"
        f"center_theta={img.center.theta!r}\n"
    )
    with open(path + ".meta", "w", encoding="ascii") as f:
        f.write(meta)


def read_pgm(path: str) -> GridImage:
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width height, maxval, single whitespace, then raster
    parts = blob.split(b"\n", 3)
    if len(parts) < 4:
        raise ValueError(f"{path}: truncated PGM header")
    w, h = (int(t) for t in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError(f"{path}: expected maxval 255")
    raster = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    if raster.size != w * h:
        raise ValueError(f"{path}: truncated PGM raster")
    if w != h:
        raise ValueError(f"{path}: expected square image, got {w}x{h}")

    meta: dict[str, str] = {}
    with open(path + ".meta", "r", encoding="ascii") as f:
        for ln in f:
            ln = ln.strip()
            if ln and "=" in ln:
                k, val = ln.split("=", 1)
                meta[k] = val
    center = Pose2(float(meta["center_x"]), float(meta["center_y"]), float(meta["center_theta"]))
    img = GridImage(int(meta["side_px"]), float(meta["resolution"]), center,
                    raster.reshape(h, w) != 0)
    return img
