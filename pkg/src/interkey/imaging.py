"""Binary image primitives: disk morphology, thinning, corner detection, ray casting.

Morphology uses exact Euclidean distance transforms, which realizes disk
dilation/erosion clipped to the image window. That pair is an adjunction on
the window lattice, so closing-then-opening is exactly idempotent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import GridImage, PixelPoint


def dilate_disk(bits: np.ndarray, radius_px: float) -> np.ndarray:
    """Pixels within Euclidean distance radius_px of a set pixel."""
    if radius_px <= 0 or not bits.any():
        return bits.copy()
    dist = ndimage.distance_transform_edt(~bits)
    return dist <= radius_px


def erode_disk(bits: np.ndarray, radius_px: float) -> np.ndarray:
    """Pixels whose distance to the nearest unset pixel exceeds radius_px."""
    if radius_px <= 0:
        return bits.copy()
    if bits.all():
        return bits.copy()
    dist = ndimage.distance_transform_edt(bits)
    return dist > radius_px


def morph_close_open(img: GridImage, kernel_radius_px: int) -> GridImage:
    """Disk closing followed by disk opening; idempotent under re-application."""
    if kernel_radius_px < 1:
        raise ValueError(f"kernel_radius_px must be >= 1, got {kernel_radius_px}")
    r = float(kernel_radius_px)
    closed = erode_disk(dilate_disk(img.bits, r), r)
    opened = dilate_disk(erode_disk(closed, r), r)
    out = img.copy()
    out.bits = opened
    return out


# -- Zhang-Suen thinning ----------------------------------------------------

def _zs_pass(img: np.ndarray, step: int) -> np.ndarray:
    """One Zhang-Suen sub-iteration; returns the mask of pixels to delete."""
    p = np.pad(img, 1, mode="constant").astype(np.uint8)
    # neighbours P2..P9 clockwise from north
    p2 = p[:-2, 1:-1]
    p3 = p[:-2, 2:]
    p4 = p[1:-1, 2:]
    p5 = p[2:, 2:]
    p6 = p[2:, 1:-1]
    p7 = p[2:, :-2]
    p8 = p[1:-1, :-2]
    p9 = p[:-2, :-2]
    ring = (p2, p3, p4, p5, p6, p7, p8, p9)
    n = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    trans = np.zeros_like(n)
    for a, b in zip(ring, ring[1:] + ring[:1]):
        trans += (a == 0) & (b == 1)
    if step == 0:
        c3 = (p2 * p4 * p6) == 0
        c4 = (p4 * p6 * p8) == 0
    else:
        c3 = (p2 * p4 * p8) == 0
        c4 = (p2 * p6 * p8) == 0
    return img & (n >= 2) & (n <= 6) & (trans == 1) & c3 & c4


_RING8 = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _neighbors_single_component(bits: np.ndarray, v: int, u: int) -> bool:
    """True if the set 8-neighbors of (v, u) are mutually 8-connected without it."""
    cells = [(v + dv, u + du) for dv, du in _RING8
             if 0 <= v + dv < bits.shape[0] and 0 <= u + du < bits.shape[1]
             and bits[v + dv, u + du]]
    if not cells:
        return False
    comp = {cells[0]}
    frontier = [cells[0]]
    rest = set(cells[1:])
    while frontier:
        cv, cu = frontier.pop()
        for c in list(rest):
            if max(abs(c[0] - cv), abs(c[1] - cu)) <= 1:
                rest.discard(c)
                comp.add(c)
                frontier.append(c)
    return not rest


def _break_2x2_blocks(bits: np.ndarray) -> None:
    """Delete one safely removable pixel from every fully-set 2x2 block."""
    while True:
        blocks = bits[:-1, :-1] & bits[1:, :-1] & bits[:-1, 1:] & bits[1:, 1:]
        bv, bu = np.nonzero(blocks)
        if len(bv) == 0:
            return
        deleted = False
        for v, u in zip(bv, bu):
            for dv, du in ((0, 0), (0, 1), (1, 0), (1, 1)):
                if bits[v + dv, u + du] and _neighbors_single_component(bits, v + dv, u + du):
                    bits[v + dv, u + du] = False
                    deleted = True
                    break
            if deleted:
                break
        if not deleted:
            # every candidate deletion would disconnect a component; bail out
            return


def skeletonize(img: GridImage) -> GridImage:
    """Iterative thinning to an 8-connected one-pixel-wide centerline."""
    bits = img.bits
    out = img.copy()
    if not bits.any():
        return out
    # work on the content bounding box only
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    sk = bits[r0:r1, c0:c1].copy()
    while True:
        changed = False
        for step in (0, 1):
            kill = _zs_pass(sk, step)
            if kill.any():
                sk &= ~kill
                changed = True
        if not changed:
            break
    _break_2x2_blocks(sk)
    out.bits = np.zeros_like(bits)
    out.bits[r0:r1, c0:c1] = sk
    return out


# -- Harris corner detection -------------------------------------------------

@dataclass(frozen=True)
class HarrisParams:
    window_px: int = 5
    k: float = 0.04
    threshold_rel: float = 0.01


def harris_corners(
    img: GridImage,
    window_px: int = 5,
    k: float = 0.04,
    threshold: float = 0.01,
) -> list[PixelPoint]:
    """Local maxima of R = det(M) - k trace(M)^2 on the structure tensor.

    Gradients are Sobel; tensor products are smoothed with a Gaussian of
    sigma window_px / 3. threshold is relative to the maximum response, and
    maxima are suppressed within a window_px neighborhood. Detections within
    window_px of the border are dropped.
    """
    f = img.bits.astype(np.float32)
    ix = ndimage.sobel(f, axis=1, mode="constant")
    iy = ndimage.sobel(f, axis=0, mode="constant")
    sigma = window_px / 3.0
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="constant")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="constant")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="constant")
    resp = (sxx * syy - sxy * sxy) - k * (sxx + syy) ** 2

    peak = float(resp.max(initial=0.0))
    if peak <= 0.0:
        return []
    level = threshold * peak
    local_max = resp == ndimage.maximum_filter(resp, size=window_px, mode="constant")
    cand = (resp > level) & local_max
    cand[:window_px, :] = False
    cand[-window_px:, :] = False
    cand[:, :window_px] = False
    cand[:, -window_px:] = False
    vs, us = np.nonzero(cand)
    order = np.lexsort((us, vs, -resp[vs, us]))
    # greedy suppression: response plateaus (symmetric junctions) keep one point
    kept: list[tuple[int, int]] = []
    for i in order:
        u, v = int(us[i]), int(vs[i])
        if all((u - ku) ** 2 + (v - kv) ** 2 > window_px**2 for ku, kv in kept):
            kept.append((u, v))
    return [PixelPoint(float(u), float(v)) for u, v in kept]


# -- Ray-cast visibility filtering -------------------------------------------

def ray_cast_visibility(img: GridImage, origin: PixelPoint) -> GridImage:
    """Keep, per ray of a dense fan from origin, only the first set pixel hit.

    Rays are marched at 0.5 px steps with angular step atan(1 / (M * sqrt(2)))
    so every pixel subtends at least one ray; everything behind a first hit
    is cleared. Output is a subset of the input and the filter is idempotent.
    """
    out = img.copy()
    bits = img.bits
    if not bits.any():
        return out
    m = img.side_px
    ou, ov = origin.u, origin.v
    if not (0 <= ou <= m - 1 and 0 <= ov <= m - 1):
        raise ValueError(f"origin ({ou}, {ov}) outside image bounds")

    vs, us = np.nonzero(bits)
    max_r = float(np.sqrt((us - ou) ** 2 + (vs - ov) ** 2).max()) + 1.0
    n_rays = int(math.ceil(2.0 * math.pi / math.atan(1.0 / (m * math.sqrt(2.0)))))
    step = 0.5
    ts = np.arange(0.0, max_r + step, step)

    keep = np.zeros_like(bits)
    chunk = max(1, int(4e6 // len(ts)))
    angles = np.linspace(0.0, 2.0 * math.pi, n_rays, endpoint=False)
    for a0 in range(0, n_rays, chunk):
        ang = angles[a0 : a0 + chunk]
        cu = np.floor(ou + np.cos(ang)[:, None] * ts[None, :] + 0.5).astype(np.int32)
        cv = np.floor(ov + np.sin(ang)[:, None] * ts[None, :] + 0.5).astype(np.int32)
        inb = (cu >= 0) & (cu < m) & (cv >= 0) & (cv < m)
        hit = np.zeros(cu.shape, dtype=bool)
        hit[inb] = bits[cv[inb], cu[inb]]
        first = hit.argmax(axis=1)
        rows = np.nonzero(hit.any(axis=1))[0]
        keep[cv[rows, first[rows]], cu[rows, first[rows]]] = True
    out.bits = bits & keep
    return out
