"""
2D propagation scenes and image-method path tracing.

A scene is one or more base stations, a rectangular grid of user positions and a
set of convex polygonal obstacles. Paths between a BS and a user are the direct
segment (when unobstructed) plus every specular reflection sequence up to the
scene's reflection order, found by mirroring the BS across the reflecting edges
and walking back from the user.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import product
from typing import List, NamedTuple, Optional, Sequence, Tuple

from shapely.geometry import LineString, Point, Polygon
from shapely.geometry.polygon import orient
from shapely.prepared import prep

from .config import GEOM_TOL, MAX_SUPPORTED_ORDER
from .errors import ConfigError, GeometryError


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class GridSpec:
    origin: Point2D
    rows: int
    cols: int
    spacing: float

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class Scene:
    base_stations: Tuple[Point2D, ...]
    obstacles: Tuple[Tuple[Point2D, ...], ...]
    ue_grid: GridSpec
    carrier_frequency_hz: float
    bandwidth_hz: float
    tx_power_dbm: float = 0.0
    max_reflection_order: int = 2
    reflection_loss_db: float = 6.0
    name: str = ""

    def bounding_box(self) -> Tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) over base stations, obstacles and the grid."""
        g = self.ue_grid
        xs = [p.x for p in self.base_stations]
        ys = [p.y for p in self.base_stations]
        for poly in self.obstacles:
            xs.extend(p.x for p in poly)
            ys.extend(p.y for p in poly)
        xs.extend([g.origin.x, g.origin.x + (g.cols - 1) * g.spacing])
        ys.extend([g.origin.y, g.origin.y + (g.rows - 1) * g.spacing])
        return min(xs), min(ys), max(xs), max(ys)

    def bounding_diagonal(self) -> float:
        x0, y0, x1, y1 = self.bounding_box()
        return math.hypot(x1 - x0, y1 - y0)


@dataclass(frozen=True)
class RayPath:
    vertices: Tuple[Point2D, ...]
    length_m: float
    # (obstacle index, edge index) of every bounce, BS side first
    surfaces: Tuple[Tuple[int, int], ...] = ()

    @property
    def bounce_count(self) -> int:
        return len(self.vertices) - 2


@dataclass(frozen=True)
class Edge:
    obstacle: int
    index: int
    a: Point2D
    b: Point2D
    # outward unit normal (vertices are counter-clockwise)
    nx: float
    ny: float

    def side(self, p: Point2D) -> float:
        """Signed distance of p from the edge line, positive on the outward side."""
        return (p.x - self.a.x) * self.nx + (p.y - self.a.y) * self.ny

    def mirror(self, p: Point2D) -> Point2D:
        d = self.side(p)
        return Point2D(p.x - 2.0 * d * self.nx, p.y - 2.0 * d * self.ny)


# ==============================================================================
# VALIDATION
# ==============================================================================

def _as_point(value: Sequence[float]) -> Point2D:
    if len(value) != 2:
        raise ConfigError(f"expected an (x, y) pair, got {value!r}")
    return Point2D(float(value[0]), float(value[1]))


def _normalize_polygon(vertices: Sequence[Sequence[float]], index: int) -> Tuple[Point2D, ...]:
    """Validate one obstacle and return its vertices counter-clockwise."""
    pts = [_as_point(v) for v in vertices]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len(pts) < 3:
        raise GeometryError(f"obstacle {index} needs at least 3 vertices")
    poly = Polygon(pts)
    if not poly.is_valid or poly.area <= GEOM_TOL:
        raise GeometryError(f"obstacle {index} is not a simple polygon with positive area")
    if poly.convex_hull.area - poly.area > 1e-9 * max(1.0, poly.area):
        raise GeometryError(f"obstacle {index} is not convex")
    ccw = orient(poly, sign=1.0)
    coords = list(ccw.exterior.coords)[:-1]
    return tuple(Point2D(float(x), float(y)) for x, y in coords)


def validate_scene(scene: Scene) -> Scene:
    """Check every Scene invariant; returns a scene with CCW obstacles."""
    g = scene.ue_grid
    if g.rows < 1 or g.cols < 1:
        raise ConfigError("ue_grid rows and cols must be >= 1")
    if not g.spacing > 0:
        raise ConfigError("ue_grid spacing must be > 0")
    if not scene.base_stations:
        raise ConfigError("scene needs at least one base station")
    if not scene.carrier_frequency_hz > 0:
        raise ConfigError("carrier_frequency_hz must be positive")
    if not scene.bandwidth_hz > 0:
        raise ConfigError("bandwidth_hz must be positive")
    if scene.max_reflection_order < 0:
        raise ConfigError("max_reflection_order must be non-negative")
    if scene.max_reflection_order > MAX_SUPPORTED_ORDER:
        raise ConfigError(f"max_reflection_order above {MAX_SUPPORTED_ORDER} is not supported")
    if scene.reflection_loss_db < 0:
        raise ConfigError("reflection_loss_db must be non-negative")

    obstacles = tuple(_normalize_polygon(poly, i) for i, poly in enumerate(scene.obstacles))
    fixed = replace(scene, obstacles=obstacles)
    geom = _geometry(fixed)
    for user_id, p in build_grid(fixed):
        if geom.strictly_inside(p):
            raise ConfigError(f"user {user_id} at {tuple(p)} lies inside an obstacle")
    for i, p in enumerate(fixed.base_stations):
        if geom.strictly_inside(p):
            raise ConfigError(f"base station {i} at {tuple(p)} lies inside an obstacle")
    return fixed


def sub_grid(scene: Scene, rows: int, cols: int) -> Scene:
    """Same scene restricted to the first rows x cols block of its user grid."""
    g = scene.ue_grid
    if not (1 <= rows <= g.rows and 1 <= cols <= g.cols):
        raise ConfigError(f"sub-grid {rows}x{cols} does not fit in {g.rows}x{g.cols}")
    return replace(scene, ue_grid=GridSpec(g.origin, rows, cols, g.spacing))


# ==============================================================================
# OCCLUSION
# ==============================================================================

class SceneGeometry:
    """Shapely view of the obstacles plus the reflecting edges."""

    def __init__(self, obstacles: Tuple[Tuple[Point2D, ...], ...]):
        # CCW so (dy, -dx) points outward
        self.polygons = [orient(Polygon(poly), sign=1.0) for poly in obstacles]
        self.prepared = [prep(p) for p in self.polygons]
        self.edges: List[Edge] = []
        for i, shape in enumerate(self.polygons):
            poly = [Point2D(float(x), float(y)) for x, y in list(shape.exterior.coords)[:-1]]
            n = len(poly)
            for j in range(n):
                a, b = poly[j], poly[(j + 1) % n]
                dx, dy = b.x - a.x, b.y - a.y
                norm = math.hypot(dx, dy)
                if norm <= GEOM_TOL:
                    continue
                self.edges.append(Edge(i, j, a, b, dy / norm, -dx / norm))

    def strictly_inside(self, p: Point2D) -> bool:
        pt = Point(p)
        return any(poly.contains(pt) and poly.exterior.distance(pt) > GEOM_TOL
                   for poly in self.polygons)

    def segment_clear(self, p: Point2D, q: Point2D) -> bool:
        """True when p->q crosses or touches no obstacle away from its own endpoints.

        Grazing a vertex or running along an edge counts as blocked. Contact at
        p or q themselves (a reflection point sits on its wall) is ignored.
        """
        line = LineString([p, q])
        for poly, prepared in zip(self.polygons, self.prepared):
            if not prepared.intersects(line):
                continue
            hit = poly.intersection(line)
            if not _only_endpoint_contact(hit, p, q):
                return False
        return True


def _near(x: float, y: float, p: Point2D) -> bool:
    return abs(x - p.x) <= GEOM_TOL and abs(y - p.y) <= GEOM_TOL


def _only_endpoint_contact(hit, p: Point2D, q: Point2D) -> bool:
    if hit.is_empty:
        return True
    parts = getattr(hit, "geoms", None)
    if parts is not None:
        return all(_only_endpoint_contact(part, p, q) for part in parts)
    if hit.geom_type == "LineString" and hit.length > GEOM_TOL:
        return False
    return all(_near(x, y, p) or _near(x, y, q) for x, y in hit.coords)


@lru_cache(maxsize=16)
def _geometry(scene: Scene) -> SceneGeometry:
    return SceneGeometry(scene.obstacles)


# ==============================================================================
# OPERATIONS
# ==============================================================================

def _check_endpoints(geom: SceneGeometry, bs: Point2D, ue: Point2D) -> None:
    if math.hypot(ue.x - bs.x, ue.y - bs.y) <= GEOM_TOL:
        raise GeometryError(f"base station and user coincide at {tuple(bs)}")
    if geom.strictly_inside(bs):
        raise GeometryError(f"base station {tuple(bs)} lies inside an obstacle")
    if geom.strictly_inside(ue):
        raise GeometryError(f"user {tuple(ue)} lies inside an obstacle")


def is_los(scene: Scene, bs: Point2D, ue: Point2D) -> bool:
    bs, ue = Point2D(*bs), Point2D(*ue)
    geom = _geometry(scene)
    _check_endpoints(geom, bs, ue)
    return geom.segment_clear(bs, ue)


def build_grid(scene: Scene) -> List[Tuple[int, Point2D]]:
    """Row-major user positions; user_id = row * cols + col."""
    g = scene.ue_grid
    out = []
    for r in range(g.rows):
        for c in range(g.cols):
            out.append((r * g.cols + c,
                        Point2D(g.origin.x + c * g.spacing, g.origin.y + r * g.spacing)))
    return out


def path_length(vertices: Sequence[Point2D]) -> float:
    return sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(vertices, vertices[1:]))


def _cross(ax: float, ay: float, bx: float, by: float) -> float:
    return ax * by - ay * bx


def _hit_edge(src: Point2D, dst: Point2D, edge: Edge) -> Optional[Point2D]:
    """Point where segment src->dst crosses the edge, or None."""
    rx, ry = dst.x - src.x, dst.y - src.y
    dx, dy = edge.b.x - edge.a.x, edge.b.y - edge.a.y
    denom = _cross(rx, ry, dx, dy)
    if abs(denom) <= 1e-15 * max(1.0, math.hypot(rx, ry) * math.hypot(dx, dy)):
        return None
    wx, wy = edge.a.x - src.x, edge.a.y - src.y
    t = _cross(wx, wy, dx, dy) / denom
    s = _cross(wx, wy, rx, ry) / denom
    if not (0.0 < t < 1.0) or s < 0.0 or s > 1.0:
        return None
    return Point2D(edge.a.x + s * dx, edge.a.y + s * dy)


def _reflect_sequence(edges: Sequence[Edge], bs: Point2D, ue: Point2D) -> Optional[List[Point2D]]:
    images = [bs]
    for edge in edges:
        images.append(edge.mirror(images[-1]))

    points: List[Point2D] = [bs] * len(edges)
    target = ue
    for j in range(len(edges) - 1, -1, -1):
        hit = _hit_edge(images[j + 1], target, edges[j])
        if hit is None:
            return None
        points[j] = hit
        target = hit

    vertices = [bs] + points + [ue]
    for j, edge in enumerate(edges):
        if edge.side(vertices[j]) <= GEOM_TOL or edge.side(vertices[j + 2]) <= GEOM_TOL:
            return None
    return vertices


def trace_paths(scene: Scene, bs: Point2D, ue: Point2D) -> List[RayPath]:
    """Direct path (if LOS) plus all valid reflections up to the scene's order.

    Sorted by length, ties broken by comparing vertices; identical input gives
    an identical list.
    """
    bs, ue = Point2D(*bs), Point2D(*ue)
    if scene.max_reflection_order > MAX_SUPPORTED_ORDER:
        raise ConfigError(f"max_reflection_order above {MAX_SUPPORTED_ORDER} is not supported")
    geom = _geometry(scene)
    _check_endpoints(geom, bs, ue)

    found: List[RayPath] = []
    if geom.segment_clear(bs, ue):
        found.append(RayPath((bs, ue), math.hypot(ue.x - bs.x, ue.y - bs.y)))

    edges = geom.edges
    for order in range(1, scene.max_reflection_order + 1):
        for seq in product(range(len(edges)), repeat=order):
            if any(seq[i] == seq[i + 1] for i in range(order - 1)):
                continue
            chosen = [edges[k] for k in seq]
            vertices = _reflect_sequence(chosen, bs, ue)
            if vertices is None:
                continue
            if not all(geom.segment_clear(a, b) for a, b in zip(vertices, vertices[1:])):
                continue
            found.append(RayPath(tuple(vertices), path_length(vertices),
                                 tuple((e.obstacle, e.index) for e in chosen)))

    found.sort(key=lambda p: (p.length_m, p.vertices))
    unique: List[RayPath] = []
    for path in found:
        if unique and _same_route(unique[-1], path):
            continue
        unique.append(path)
    return unique


def _same_route(a: RayPath, b: RayPath) -> bool:
    if len(a.vertices) != len(b.vertices):
        return False
    return all(_near(q.x, q.y, p) for p, q in zip(a.vertices, b.vertices))
