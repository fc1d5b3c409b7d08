"""Power diagrams of weighted sites clipped to a convex polygonal domain.

Points and polygons are plain float arrays of shape ``(n, 2)``; polygons are
counterclockwise. A cell that is empty is represented by ``None``.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _backend
from .errors import CoincidentSitesError, GeometryError

# points within this distance of a bisector are on it; shorter shared edges are dropped
TOL = 1e-12
# cells smaller than this fraction of the domain are treated as empty
EMPTY_AREA_FRACTION = 1e-12


class Edge(NamedTuple):
    i: int
    j: int
    shared_len: float
    dual_len: float
    w: float


@dataclass
class PowerDiagram:
    cells: list
    edges: list
    areas: np.ndarray
    domain_area: float
    sites: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)

    @property
    def k(self):
        return len(self.cells)

    def nonempty(self):
        return np.array([c is not None for c in self.cells])

    def neighbors(self, i):
        out = []
        for e in self.edges:
            if e.i == i:
                out.append(e.j)
            elif e.j == i:
                out.append(e.i)
        return sorted(out)


@dataclass(frozen=True)
class SimilarityTransform:
    """``p' = scale * (p - center)``."""

    scale: float = 1.0
    center: tuple = (0.0, 0.0)

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts - np.asarray(self.center))

    def invert(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts / self.scale + np.asarray(self.center)

    def cost_factor(self, alpha=2.0):
        """Multiply normalized costs by this to get costs in original units."""
        return self.scale ** (-alpha)

    @property
    def is_identity(self):
        return self.scale == 1.0 and tuple(self.center) == (0.0, 0.0)


def signed_area(poly):
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def cell_area(cell):
    """Shoelace area of a convex cell; 0 for an empty one."""
    if cell is None or len(cell) < 3:
        return 0.0
    return abs(signed_area(cell))


def as_polygon(vertices):
    """Validate a convex polygon, returning it as a CCW float array.

    Clockwise input is reversed. Raises GeometryError on fewer than three
    vertices, zero area, non-finite coordinates or a reflex vertex.
    """
    p = np.array(vertices, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise GeometryError("a polygon needs at least 3 two-dimensional vertices")
    if not np.all(np.isfinite(p)):
        raise GeometryError("polygon has non-finite coordinates")
    a = signed_area(p)
    if abs(a) <= TOL:
        raise GeometryError("polygon has zero area")
    if a < 0:
        p = p[::-1].copy()
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = np.linalg.norm(e, axis=1) * np.roll(np.linalg.norm(e, axis=1), -1)
    if np.any(cross < -TOL * np.maximum(scale, 1.0)):
        raise GeometryError("polygon is not convex")
    return p


def regular_polygon(m=64, radius=1.0, center=(0.0, 0.0)):
    """Regular m-gon inscribed in the circle of ``radius``; stands in for a disk."""
    if m < 3:
        raise GeometryError("a regular polygon needs m >= 3")
    t = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def contains(poly, points, tol=TOL):
    """Boolean mask of points inside (or within ``tol`` of) a convex CCW polygon."""
    p = np.asarray(poly, dtype=np.float64)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    e = np.roll(p, -1, axis=0) - p
    rel_x = pts[:, None, 0] - p[None, :, 0]
    rel_y = pts[:, None, 1] - p[None, :, 1]
    cross = e[None, :, 0] * rel_y - e[None, :, 1] * rel_x
    return np.all(cross >= -tol * np.linalg.norm(e, axis=1)[None, :], axis=1)


def normalize_to_unit_domain(points, domain):
    """Map ``domain`` into the unit disk by a uniform scale and translation.

    A domain already inside the unit disk is left alone. Otherwise its
    bounding-box centre goes to the origin and its farthest vertex to radius 1.
    """
    dom = as_polygon(domain)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise GeometryError("no points to normalize")
    if np.max(np.hypot(dom[:, 0], dom[:, 1])) <= 1.0 + TOL:
        transform = SimilarityTransform()
    else:
        center = 0.5 * (dom.min(axis=0) + dom.max(axis=0))
        radius = np.max(np.hypot(*(dom - center).T))
        transform = SimilarityTransform(1.0 / radius, (float(center[0]), float(center[1])))
    return transform, transform.apply(pts), transform.apply(dom)


def clip_convex_polygon(poly, halfplane):
    """Intersect a convex polygon with ``{p : a*x + b*y + c <= 0}``.

    ``halfplane`` is the triple ``(a, b, c)``. Returns the clipped polygon or
    ``None`` when nothing is left.
    """
    if poly is None:
        return None
    a, b, c = (float(v) for v in halfplane)
    norm = np.hypot(a, b)
    if norm == 0.0:
        raise GeometryError("degenerate half-plane normal")
    p = np.asarray(poly, dtype=np.float64)
    f = (p @ np.array([a, b]) + c) / norm
    inside = f <= TOL
    if inside.all():
        return p.copy()
    if not inside.any():
        return None
    out = []
    n = len(p)
    for e in range(n):
        q = (e + 1) % n
        if inside[e]:
            out.append(p[e])
            if not inside[q]:
                t = f[e] / (f[e] - f[q])
                out.append(p[e] + t * (p[q] - p[e]))
        elif inside[q]:
            t = f[e] / (f[e] - f[q])
            out.append(p[e] + t * (p[q] - p[e]))
    out = np.array(out)
    if len(out) < 3 or cell_area(out) <= TOL:
        return None
    return out


def site_order(sites):
    """Per-site neighbour order by distance; raises on coincident sites."""
    s = np.asarray(sites, dtype=np.float64)
    diff = s[:, None, :] - s[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if len(s) > 1:
        flat = int(np.argmin(d2))
        i, j = divmod(flat, len(s))
        if d2[i, j] <= TOL * TOL:
            raise CoincidentSitesError(min(i, j), max(i, j))
    np.fill_diagonal(d2, -1.0)
    return np.argsort(d2, axis=1, kind="stable")


def build_power_diagram(sites, heights, domain, order=None, backend=None):
    """Power diagram of ``sites`` with ``heights`` restricted to ``domain``.

    Cell ``i`` is the part of the domain where ``|p - site_i|^2 - h_i`` is
    minimal. ``order`` is the cached result of :func:`site_order` for these
    sites; ``backend`` selects "compiled" or "python" kernels.
    """
    s = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    h = np.asarray(heights, dtype=np.float64).ravel()
    k = len(s)
    if k < 1:
        raise GeometryError("a power diagram needs at least one site")
    if len(h) != k:
        raise GeometryError(f"{k} sites but {len(h)} heights")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(h))):
        raise GeometryError("sites and heights must be finite")
    dom = np.asarray(domain, dtype=np.float64)
    dom_area = cell_area(dom)
    if order is None:
        order = site_order(s)
    raw = _backend.get_kernels(backend).power_cells(s, h, dom, order)

    min_area = EMPTY_AREA_FRACTION * dom_area
    cells = []
    areas = np.zeros(k)
    shared = {}
    for i, item in enumerate(raw):
        if item is None:
            cells.append(None)
            continue
        verts, labels = item
        area = cell_area(verts)
        if area <= min_area:
            cells.append(None)
            continue
        cells.append(verts)
        areas[i] = area
        seg = np.roll(verts, -1, axis=0) - verts
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        for j, length in zip(labels.tolist(), lengths.tolist()):
            if j >= 0:
                shared[(i, j)] = shared.get((i, j), 0.0) + length

    edges = []
    for (i, j), s_ij in shared.items():
        if i > j or cells[j] is None:
            continue
        s_ji = shared.get((j, i))
        length = s_ij if s_ji is None else 0.5 * (s_ij + s_ji)
        if length < TOL:
            continue
        dual = float(np.hypot(*(s[j] - s[i])))
        edges.append(Edge(i, j, length, dual, length / dual))
    for (j, i), s_ji in shared.items():
        # edge only seen from the higher-indexed side
        if j > i and (i, j) not in shared and cells[i] is not None and cells[j] is not None:
            if s_ji >= TOL:
                dual = float(np.hypot(*(s[j] - s[i])))
                edges.append(Edge(i, j, s_ji, dual, s_ji / dual))
    edges.sort(key=lambda e: (e.i, e.j))
    return PowerDiagram(cells, edges, areas, dom_area, s, h)
