"""OSM extract parsing, intersection collection, and map-side imprints.

Ways are split at every node shared by two or more qualifying road ways (and
at way endpoints) so junction degree counts are correct on the resulting
graph. Coordinates are projected to a local metric plane with an
equirectangular projection about the midpoint of the node bounding box.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .descriptor import describe
from .errors import DegenerateIntersectionError, InterkeyError
from .geometry import Pose2
from .grid import GridImage, PixelPoint, draw_polyline

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6378137.0
ROAD_HIGHWAY_TYPES = frozenset({"residential", "service", "tertiary"})


class OsmParseError(InterkeyError):
    pass


@dataclass(frozen=True)
class RoadEdge:
    a: int
    b: int
    polyline: np.ndarray  # (N, 2) metric positions, endpoints first/last


@dataclass
class RoadGraph:
    nodes: dict = field(default_factory=dict)   # id -> (x, y)
    edges: list = field(default_factory=list)   # list[RoadEdge]

    def adjacency(self) -> dict:
        adj: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for i, e in enumerate(self.edges):
            adj[e.a].append(i)
            adj[e.b].append(i)
        return adj

    def degree(self, node_id: int) -> int:
        d = 0
        for e in self.edges:
            if e.a == node_id:
                d += 1
            if e.b == node_id:
                d += 1
        return d


@dataclass
class BuildingSet:
    polygons: list = field(default_factory=list)  # list[np.ndarray (N, 2)]


@dataclass(frozen=True)
class IntersectionNode:
    id: int
    position: tuple
    degree: int


def _byte_offset_of_error(data: bytes) -> int:
    from xml.parsers import expat

    p = expat.ParserCreate()
    try:
        p.Parse(data, True)
    except expat.ExpatError:
        return p.ErrorByteIndex
    return -1


def parse_osm(data: bytes) -> tuple[RoadGraph, BuildingSet]:
    """Parse an OSM XML extract into a split road graph and building polygons.

    Roads are ways tagged highway in {residential, service, tertiary} with a
    non-empty name; buildings are ways tagged building (except building=no).
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        off = _byte_offset_of_error(data)
        raise OsmParseError(
            f"malformed OSM XML at line {e.position[0]}, column {e.position[1]}"
            f" (byte offset {off})"
        ) from e

    latlon: dict[int, tuple[float, float]] = {}
    road_ways: list[list[int]] = []
    building_ways: list[list[int]] = []
    for el in root:
        if el.tag == "node":
            latlon[int(el.attrib["id"])] = (
                float(el.attrib["lat"]), float(el.attrib["lon"]))
        elif el.tag == "way":
            refs = [int(nd.attrib["ref"]) for nd in el if nd.tag == "nd"]
            tags = {t.attrib["k"]: t.attrib["v"] for t in el if t.tag == "tag"}
            if len(refs) < 2:
                continue
            if tags.get("highway") in ROAD_HIGHWAY_TYPES and tags.get("name"):
                road_ways.append(refs)
            if tags.get("building") and tags.get("building") != "no":
                building_ways.append(refs)

    if not latlon:
        return RoadGraph(), BuildingSet()
    lats = [ll[0] for ll in latlon.values()]
    lons = [ll[1] for ll in latlon.values()]
    lat0 = (min(lats) + max(lats)) / 2.0
    lon0 = (min(lons) + max(lons)) / 2.0
    coslat = math.cos(math.radians(lat0))
    pos = {
        nid: (EARTH_RADIUS_M * math.radians(lon - lon0) * coslat,
              EARTH_RADIUS_M * math.radians(lat - lat0))
        for nid, (lat, lon) in latlon.items()
    }

    # split road ways at endpoints and at nodes used more than once
    usage: dict[int, int] = {}
    for refs in road_ways:
        for nid in refs:
            usage[nid] = usage.get(nid, 0) + 1
    graph = RoadGraph()
    split_at = set()
    for refs in road_ways:
        split_at.add(refs[0])
        split_at.add(refs[-1])
    split_at.update(nid for nid, n in usage.items() if n >= 2)

    for refs in road_ways:
        seg = [refs[0]]
        for nid in refs[1:]:
            seg.append(nid)
            if nid in split_at:
                poly = np.array([pos[m] for m in seg], dtype=np.float64)
                graph.edges.append(RoadEdge(seg[0], seg[-1], poly))
                graph.nodes.setdefault(seg[0], pos[seg[0]])
                graph.nodes.setdefault(seg[-1], pos[seg[-1]])
                seg = [nid]
        if len(seg) > 1:  # way not terminated by a split node (defensive)
            poly = np.array([pos[m] for m in seg], dtype=np.float64)
            graph.edges.append(RoadEdge(seg[0], seg[-1], poly))
            graph.nodes.setdefault(seg[0], pos[seg[0]])
            graph.nodes.setdefault(seg[-1], pos[seg[-1]])

    buildings = BuildingSet()
    for refs in building_ways:
        ring = refs[:-1] if refs[0] == refs[-1] else refs
        if len(ring) >= 3:
            buildings.polygons.append(
                np.array([pos[m] for m in ring], dtype=np.float64))
    return graph, buildings


def collect_intersections(g: RoadGraph) -> list[IntersectionNode]:
    """Graph nodes with at least three incident edges, ordered by id."""
    deg: dict[int, int] = {nid: 0 for nid in g.nodes}
    for e in g.edges:
        deg[e.a] += 1
        deg[e.b] += 1
    return [
        IntersectionNode(nid, g.nodes[nid], deg[nid])
        for nid in sorted(g.nodes)
        if deg[nid] >= 3
    ]


def trace_local_subgraph(g: RoadGraph, center: IntersectionNode, S: float) -> RoadGraph:
    """Depth-first edge collection from the center node.

    A branch stops at the first node outside the S x S window (the edge to
    it is still included) or when a node has no unvisited edges; each edge
    appears exactly once.
    """
    cx, cy = center.position
    half = S / 2.0

    def in_range(nid: int) -> bool:
        x, y = g.nodes[nid]
        return abs(x - cx) <= half and abs(y - cy) <= half

    adj = g.adjacency()
    sub = RoadGraph()
    seen_edges: set[int] = set()
    stack = [center.id]
    expanded: set[int] = set()
    while stack:
        nid = stack.pop()
        if nid in expanded:
            continue
        expanded.add(nid)
        for ei in adj.get(nid, ()):
            if ei in seen_edges:
                continue
            seen_edges.add(ei)
            e = g.edges[ei]
            sub.edges.append(e)
            sub.nodes.setdefault(e.a, g.nodes[e.a])
            sub.nodes.setdefault(e.b, g.nodes[e.b])
            other = e.b if e.a == nid else e.a
            if in_range(other):
                stack.append(other)
    return sub


def road_imprint(sub: RoadGraph, center: IntersectionNode, cfg: Config) -> GridImage:
    """Rasterize the local subgraph as one-pixel-wide lines around the node."""
    cx, cy = center.position
    img = GridImage.blank(cfg.image_size_m, cfg.image_resolution_m,
                          Pose2(cx, cy, 0.0))
    for e in sub.edges:
        rel = e.polyline - np.array([cx, cy])
        uv = img.metric_to_px_array(rel)
        img = draw_polyline(img, [PixelPoint(u, v) for u, v in uv], 1)
    return img


def building_imprint(b: BuildingSet, center: IntersectionNode, cfg: Config) -> GridImage:
    """Draw contours of buildings having at least one vertex inside the window."""
    cx, cy = center.position
    half = cfg.image_size_m / 2.0
    img = GridImage.blank(cfg.image_size_m, cfg.image_resolution_m,
                          Pose2(cx, cy, 0.0))
    for poly in b.polygons:
        rel = poly - np.array([cx, cy])
        if not ((np.abs(rel[:, 0]) <= half) & (np.abs(rel[:, 1]) <= half)).any():
            continue
        ring = np.vstack([rel, rel[:1]])
        uv = img.metric_to_px_array(ring)
        img = draw_polyline(img, [PixelPoint(u, v) for u, v in uv], 1)
    return img


def build_database(g: RoadGraph, b: BuildingSet, cfg: Config):
    """Describe every intersection node and assemble the descriptor database.

    Symmetric intersections produce one record per branch orientation.
    Intersections with fewer than two branches are skipped with a warning.
    """
    from .matchdb import DescriptorDatabase, IntersectionRecord

    db = DescriptorDatabase(cfg.fingerprint())
    for node in collect_intersections(g):
        sub = trace_local_subgraph(g, node, cfg.image_size_m)
        road = road_imprint(sub, node, cfg)
        bld = building_imprint(b, node, cfg)
        rho_I = PixelPoint(road.side_px / 2.0, road.side_px / 2.0)
        try:
            res = describe(
                road, bld, rho_I,
                R_i=cfg.descriptor_inner_radius_m,
                R_o=cfg.descriptor_outer_radius_m,
                tau_s=cfg.symmetry_threshold,
                N_r=cfg.pattern_ring_count,
                N_b=cfg.pattern_base_cell_count,
                mode="database",
                source=f"map:{node.id}",
            )
        except DegenerateIntersectionError as e:
            log.warning("skipping intersection %d: %s", node.id, e)
            continue
        for desc in res.descriptors:
            mx, my = road.px_to_metric(desc.refined_point)
            pose = Pose2(node.position[0] + mx, node.position[1] + my,
                         math.atan2(desc.orientation[1], desc.orientation[0]))
            db.add(IntersectionRecord(node.id, pose, desc))
    return db
