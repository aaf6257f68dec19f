"""Polygonal meshes of rigid convex cells.

A mesh is a set of counter-clockwise convex vertex rings that tile a
domain.  Edges are derived from the rings: an edge shared by two cells is
an interface, an edge owned by one cell lies on the domain boundary.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "Cell",
    "Edge",
    "PolygonalMesh",
    "CellTriangulation",
    "build_mesh",
    "build_edges",
    "load_mesh",
    "dump_mesh",
    "generate_voronoi",
    "generate_grid",
    "generate_brick_wall",
    "fan_triangulate",
    "polygon_area",
    "unit_square",
]

# relative to the domain diameter
VERTEX_TOL = 1e-12
# generators snap vertices produced by independent clips of the same corner
SNAP_TOL = 1e-10


class MeshError(ValueError):
    """Raised for malformed or invalid mesh input."""


def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def unit_square() -> np.ndarray:
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _rectangle(domain) -> np.ndarray:
    x0, y0, x1, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


@dataclass(frozen=True, eq=False)
class Cell:
    id: int
    vertex_ids: tuple[int, ...]
    center: np.ndarray
    area: float


@dataclass(frozen=True, eq=False)
class Edge:
    """A mesh edge.

    ``normal`` points from ``c_minus`` to ``c_plus`` for interfaces and is
    the outward normal of the owning cell on the boundary.  Boundary edges
    have ``c_plus = None`` and are owned by ``c_minus``.
    """

    id: int
    vertex_ids: tuple[int, int]
    length: float
    midpoint: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    c_minus: int
    c_plus: int | None = None

    @property
    def is_boundary(self) -> bool:
        return self.c_plus is None

    @property
    def cell(self) -> int:
        """Owning cell of a boundary edge."""
        if self.c_plus is not None:
            raise MeshError(f"edge {self.id} is internal")
        return self.c_minus

    def side(self, cell_id: int) -> float:
        """``n_c . n_e`` for an adjacent cell: +1 for c_minus, -1 for c_plus."""
        if cell_id == self.c_minus:
            return 1.0
        if cell_id == self.c_plus:
            return -1.0
        raise MeshError(f"cell {cell_id} is not adjacent to edge {self.id}")


@dataclass(frozen=True, eq=False)
class PolygonalMesh:
    vertices: np.ndarray
    cells: tuple[Cell, ...]
    edges: tuple[Edge, ...]
    # cell_edges[c][i] is the edge between ring vertices i and i+1
    cell_edges: tuple[tuple[int, ...], ...]
    domain: np.ndarray | None = None
    internal_edges: tuple[int, ...] = field(init=False)
    boundary_edges: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "internal_edges", tuple(e.id for e in self.edges if not e.is_boundary)
        )
        object.__setattr__(
            self, "boundary_edges", tuple(e.id for e in self.edges if e.is_boundary)
        )

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def diameter(self) -> float:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cells])

    def cell_polygon(self, cell_id: int) -> np.ndarray:
        return self.vertices[list(self.cells[cell_id].vertex_ids)]

    def outward_normal(self, edge_id: int, cell_id: int) -> np.ndarray:
        e = self.edges[edge_id]
        return e.side(cell_id) * e.normal


def _validate_ring(cid: int, ring, vertices: np.ndarray, scale: float) -> float:
    if len(ring) < 3 or len(set(ring)) != len(ring):
        raise MeshError(f"cell {cid}: open or degenerate vertex ring {list(ring)}")
    pts = vertices[list(ring)]
    area = polygon_area(pts)
    if area <= 0.0:
        raise MeshError(f"cell {cid}: cell orientation is clockwise (area {area:.3g})")
    k = len(ring)
    for i in range(k):
        d0 = pts[(i + 1) % k] - pts[i]
        d1 = pts[(i + 2) % k] - pts[(i + 1) % k]
        if _cross(d0, d1) < -1e-12 * scale**2:
            raise MeshError(f"cell {cid}: non-convex at vertex {ring[(i + 1) % k]}")
    return area


def _check_center(cid: int, ring, center, vertices: np.ndarray, diameter: float):
    pts = vertices[list(ring)]
    k = len(ring)
    for i in range(k):
        a, b = pts[i], pts[(i + 1) % k]
        ab = b - a
        # signed distance to the edge line, positive inside for CCW rings
        dist = _cross(ab, center - a) / np.hypot(*ab)
        if dist <= 1e-12 * diameter:
            raise MeshError(f"cell {cid}: center {tuple(center)} not strictly inside")


def build_edges(vertices: np.ndarray, rings) -> tuple[tuple[Edge, ...], tuple]:
    """Derive the edge set from cell rings.

    Edge ids are assigned in order of ``(min vertex id, max vertex id)``,
    so the result does not depend on the cell enumeration order.  Returns
    the edges and, per cell, the edge id of each ring segment.
    """
    uses: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for cid, ring in enumerate(rings):
        k = len(ring)
        for i in range(k):
            a, b = int(ring[i]), int(ring[(i + 1) % k])
            uses.setdefault((min(a, b), max(a, b)), []).append((cid, a, b))

    keys = sorted(uses)
    index = {key: eid for eid, key in enumerate(keys)}
    edges = []
    for eid, key in enumerate(keys):
        owners = sorted(uses[key])
        if len(owners) > 2:
            raise MeshError(f"edge {key} shared by {len(owners)} cells")
        cid, a, b = owners[0]
        if len(owners) == 2:
            if owners[1][0] == cid:
                raise MeshError(f"cell {cid} uses edge {key} twice")
            if (owners[1][1], owners[1][2]) != (b, a):
                raise MeshError(f"edge {key}: cells {cid} and {owners[1][0]} disagree on orientation")
        pa, pb = vertices[a], vertices[b]
        d = pb - pa
        length = float(np.hypot(*d))
        if length <= 0.0:
            raise MeshError(f"edge {key} has zero length")
        # outward normal of the owner traversing a -> b counter-clockwise
        normal = np.array([d[1], -d[0]]) / length
        tangent = np.array([-normal[1], normal[0]])
        edges.append(
            Edge(
                id=eid,
                vertex_ids=key,
                length=length,
                midpoint=0.5 * (pa + pb),
                normal=normal,
                tangent=tangent,
                c_minus=cid,
                c_plus=owners[1][0] if len(owners) == 2 else None,
            )
        )
    cell_edges = tuple(
        tuple(
            index[(min(ring[i], ring[(i + 1) % len(ring)]), max(ring[i], ring[(i + 1) % len(ring)]))]
            for i in range(len(ring))
        )
        for ring in rings
    )
    return tuple(edges), cell_edges


def build_mesh(vertices, rings, centers=None, domain=None) -> PolygonalMesh:
    """Validate rings and assemble a mesh with derived edges.

    Cells without an explicit center use their centroid.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
        raise MeshError("vertices must be an (n >= 3, 2) array")
    rings = [tuple(int(v) for v in ring) for ring in rings]
    if not rings:
        raise MeshError("mesh has no cells")
    for ring in rings:
        for v in ring:
            if not 0 <= v < len(vertices):
                raise MeshError(f"vertex id {v} out of range")
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    diameter = float(np.hypot(*(hi - lo)))

    _check_distinct(vertices, VERTEX_TOL * diameter)

    cells = []
    for cid, ring in enumerate(rings):
        area = _validate_ring(cid, ring, vertices, diameter)
        if centers is None or centers[cid] is None:
            center = _centroid(vertices[list(ring)])
        else:
            center = np.asarray(centers[cid], dtype=float)
        _check_center(cid, ring, center, vertices, diameter)
        cells.append(Cell(cid, ring, center, area))

    edges, cell_edges = build_edges(vertices, rings)
    _check_no_hanging_nodes(vertices, edges, VERTEX_TOL * diameter)
    if domain is not None:
        domain = np.asarray(domain, dtype=float)
        total = sum(c.area for c in cells)
        dom_area = polygon_area(domain)
        if abs(total - dom_area) > 1e-9 * abs(dom_area):
            raise MeshError(f"cells cover area {total!r}, domain has {dom_area!r}")
    return PolygonalMesh(vertices, tuple(cells), edges, cell_edges, domain)


def _centroid(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    w = x * yn - xn * y
    a = 0.5 * w.sum()
    return np.array([((x + xn) * w).sum(), ((y + yn) * w).sum()]) / (6.0 * a)


def _check_distinct(vertices: np.ndarray, tol: float):
    order = np.lexsort((vertices[:, 1], vertices[:, 0]))
    xs = vertices[order, 0]
    for i, vi in enumerate(order):
        j = i + 1
        while j < len(order) and xs[j] - xs[i] <= tol:
            if np.hypot(*(vertices[order[j]] - vertices[vi])) <= tol:
                raise MeshError(f"vertices {vi} and {order[j]} coincide")
            j += 1


def _check_no_hanging_nodes(vertices: np.ndarray, edges, tol: float):
    for e in edges:
        if not e.is_boundary:
            continue
        a, b = vertices[e.vertex_ids[0]], vertices[e.vertex_ids[1]]
        for w in _points_on_segment(vertices, a, b, tol):
            if w not in e.vertex_ids:
                raise MeshError(f"hanging node {w} on edge {e.vertex_ids}")


def _points_on_segment(vertices: np.ndarray, a, b, tol: float) -> list[int]:
    d = b - a
    L2 = float(d @ d)
    rel = vertices - a
    t = rel @ d / L2
    dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / np.sqrt(L2)
    eps = tol / np.sqrt(L2)
    hit = np.nonzero((dist <= tol) & (t > eps) & (t < 1.0 - eps))[0]
    return sorted(hit.tolist(), key=lambda i: t[i])


# --------------------------------------------------------------------------
# .jmsh text format


def load_mesh(text: str) -> PolygonalMesh:
    """Parse a ``.jmsh`` document."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].split()
        if content:
            lines.append((lineno, content))
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file, expected {what}") from None

    def number(tok, lineno, conv=float):
        try:
            return conv(tok)
        except ValueError:
            raise MeshError(f"line {lineno}: bad number {tok!r}") from None

    lineno, tok = take("header")
    if tok != ["JMSH", "1"]:
        raise MeshError(f"line {lineno}: expected 'JMSH 1'")
    lineno, tok = take("VERTICES")
    if len(tok) != 2 or tok[0] != "VERTICES":
        raise MeshError(f"line {lineno}: expected 'VERTICES n'")
    nv = number(tok[1], lineno, int)
    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, tok = take("vertex")
        if len(tok) != 3 or number(tok[0], lineno, int) != i:
            raise MeshError(f"line {lineno}: expected 'id x y' with id {i}")
        vertices[i] = number(tok[1], lineno), number(tok[2], lineno)
    lineno, tok = take("CELLS")
    if len(tok) != 2 or tok[0] != "CELLS":
        raise MeshError(f"line {lineno}: expected 'CELLS m'")
    nc = number(tok[1], lineno, int)
    rings, centers = [], []
    for i in range(nc):
        lineno, tok = take("cell")
        if len(tok) < 4 or number(tok[0], lineno, int) != i:
            raise MeshError(f"line {lineno}: expected 'id cx cy k v0 ...' with id {i}")
        k = number(tok[3], lineno, int)
        if len(tok) != 4 + k:
            raise MeshError(f"line {lineno}: cell {i} lists {len(tok) - 4} vertices, declared {k}")
        centers.append((number(tok[1], lineno), number(tok[2], lineno)))
        rings.append([number(t, lineno, int) for t in tok[4:]])
    lineno, tok = take("END")
    if tok != ["END"]:
        raise MeshError(f"line {lineno}: expected 'END'")
    return build_mesh(vertices, rings, centers)


def dump_mesh(mesh: PolygonalMesh) -> str:
    out = ["JMSH 1", f"VERTICES {len(mesh.vertices)}"]
    out += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    out.append(f"CELLS {mesh.n_cells}")
    for c in mesh.cells:
        cx, cy = c.center.tolist()
        ring = " ".join(map(str, c.vertex_ids))
        out.append(f"{c.id} {cx!r} {cy!r} {len(c.vertex_ids)} {ring}")
    out.append("END")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# generators


def _clip_halfplane(poly: list, normal: np.ndarray, offset: float) -> list:
    """Keep the part of a convex polygon with ``normal . x <= offset``."""
    out = []
    k = len(poly)
    for i in range(k):
        p, q = poly[i], poly[(i + 1) % k]
        fp, fq = normal @ p - offset, normal @ q - offset
        if fp <= 0.0:
            out.append(p)
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


class _VertexPool:
    """Deduplicates points within a tolerance using a coarse hash grid."""

    def __init__(self, tol: float):
        self.tol = tol
        self.points: list[np.ndarray] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def add(self, p) -> int:
        p = np.asarray(p, dtype=float)
        gx, gy = int(np.floor(p[0] / self.tol)), int(np.floor(p[1] / self.tol))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in self._grid.get((gx + dx, gy + dy), ()):
                    if np.hypot(*(self.points[i] - p)) <= self.tol:
                        return i
        self.points.append(p)
        self._grid.setdefault((gx, gy), []).append(len(self.points) - 1)
        return len(self.points) - 1


def _conform(points: list, rings: list, tol: float):
    """Deduplicate ring vertices and insert vertices lying on other cells' sides."""
    vertices = np.array(points)
    out = []
    for ring in rings:
        # drop consecutive duplicates left by snapping
        ring = [v for i, v in enumerate(ring) if v != ring[i - 1]]
        full = []
        for i, a in enumerate(ring):
            b = ring[(i + 1) % len(ring)]
            full.append(a)
            full += [w for w in _points_on_segment(vertices, vertices[a], vertices[b], tol) if w not in ring]
        out.append(full)
    return vertices, out


def generate_voronoi(seeds, domain=None) -> PolygonalMesh:
    """Voronoi diagram of ``seeds`` clipped to a convex ``domain`` polygon.

    Each cell is obtained by clipping the domain against the perpendicular
    bisectors to every other seed.  Cell ``i`` has seed ``i`` as center.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    domain = unit_square() if domain is None else np.asarray(domain, dtype=float)
    if polygon_area(domain) < 0:
        domain = domain[::-1].copy()
    if len(seeds) == 0:
        raise MeshError("at least one seed is required")
    lo, hi = domain.min(axis=0), domain.max(axis=0)
    diameter = float(np.hypot(*(hi - lo)))
    k = len(domain)
    for i, s in enumerate(seeds):
        for j in range(k):
            a, b = domain[j], domain[(j + 1) % k]
            if _cross(b - a, s - a) / np.hypot(*(b - a)) <= 1e-12 * diameter:
                raise MeshError(f"seed {i} {tuple(s)} is not strictly inside the domain")
    for i in range(len(seeds)):
        d = np.hypot(*(seeds[i + 1 :] - seeds[i]).T)
        if np.any(d <= 1e-9 * diameter):
            raise MeshError(f"seed {i} duplicates seed {i + 1 + int(np.argmin(d))}")

    pool = _VertexPool(SNAP_TOL * diameter)
    rings = []
    for i, s in enumerate(seeds):
        poly = list(domain)
        others = np.argsort(np.hypot(*(seeds - s).T), kind="stable")
        for j in others:
            if j == i:
                continue
            normal = seeds[j] - s
            offset = float(normal @ (0.5 * (seeds[j] + s)))
            # polygon already on the near side of this bisector
            if max(normal @ p for p in poly) <= offset:
                continue
            poly = _clip_halfplane(poly, normal, offset)
        rings.append([pool.add(p) for p in poly])
    vertices, rings = _conform(pool.points, rings, SNAP_TOL * diameter)
    return build_mesh(vertices, rings, centers=seeds, domain=domain)


def generate_grid(nx: int, ny: int, domain=(0.0, 0.0, 1.0, 1.0)) -> PolygonalMesh:
    """Structured ``nx`` by ``ny`` grid of rectangles with centroid centers."""
    if nx < 1 or ny < 1:
        raise MeshError("grid counts must be >= 1")
    rect = _rectangle(domain)
    xs = np.linspace(rect[0, 0], rect[1, 0], nx + 1)
    ys = np.linspace(rect[0, 1], rect[2, 1], ny + 1)
    vertices = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (nx + 1) + i

    rings = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(ny)
        for i in range(nx)
    ]
    return build_mesh(vertices, rings, domain=rect)


def generate_brick_wall(rows: int, cols: int, domain=(0.0, 0.0, 1.0, 1.0)) -> PolygonalMesh:
    """Running-bond brick wall.

    Even rows hold ``cols`` full bricks; odd rows are shifted by half a
    brick and closed by half bricks at both ends.  Long brick sides are
    split wherever a brick of the neighbouring row ends, so every
    interface is shared by exactly two bricks.
    """
    if rows < 1 or cols < 1:
        raise MeshError("brick counts must be >= 1")
    x0, y0, x1, y1 = map(float, domain)
    rect = _rectangle(domain)
    w = (x1 - x0) / cols
    ys = np.linspace(y0, y1, rows + 1)

    def breaks(r):
        if r % 2 == 0:
            return list(np.linspace(x0, x1, cols + 1))
        return [x0] + [x0 + w * (k + 0.5) for k in range(cols)] + [x1]

    row_breaks = [breaks(r) for r in range(rows)]
    vertices: list[tuple[float, float]] = []
    line_ids: list[list[tuple[float, int]]] = []
    for j in range(rows + 1):
        xs = set()
        if j > 0:
            xs.update(row_breaks[j - 1])
        if j < rows:
            xs.update(row_breaks[j])
        line = []
        for x in sorted(_dedupe(sorted(xs), 1e-12 * (x1 - x0))):
            line.append((x, len(vertices)))
            vertices.append((x, ys[j]))
        line_ids.append(line)

    rings = []
    for r in range(rows):
        bx = row_breaks[r]
        for a, b in zip(bx[:-1], bx[1:]):
            bottom = _span(line_ids[r], a, b)
            top = _span(line_ids[r + 1], a, b)[::-1]
            rings.append(bottom + top)
    return build_mesh(np.array(vertices), rings, domain=rect)


def _dedupe(xs: list[float], tol: float) -> list[float]:
    out = []
    for x in xs:
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _span(line: list[tuple[float, int]], a: float, b: float) -> list[int]:
    xs = [x for x, _ in line]
    tol = 1e-12 * max(1.0, abs(b - a))
    i = bisect.bisect_left(xs, a - tol)
    j = bisect.bisect_right(xs, b + tol)
    return [vid for _, vid in line[i:j]]


# --------------------------------------------------------------------------
# fan triangulation


@dataclass(frozen=True, eq=False)
class CellTriangulation:
    """Fan of triangles around the cell center.

    ``points[0]`` is the apex and ``points[1:]`` the ring vertices.  Triangle
    ``i`` is ``(0, i + 1, i + 2)`` (wrapping) and owns boundary sub-edge
    ``boundary_edges[i]`` of the mesh; spoke ``k`` joins the apex to
    ring vertex ``k``.
    """

    cell_id: int
    points: np.ndarray
    triangles: np.ndarray
    boundary_edges: tuple[int, ...]
    areas: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def spokes(self) -> list[tuple[int, int]]:
        return [(0, k) for k in range(1, len(self.points))]

    def triangle_of_edge(self, edge_id: int) -> int:
        return self.boundary_edges.index(edge_id)


def fan_triangulate(cell: Cell, mesh: PolygonalMesh) -> CellTriangulation:
    ring = mesh.vertices[list(cell.vertex_ids)]
    points = np.vstack([cell.center, ring])
    n = len(ring)
    triangles = np.array([(0, i + 1, (i + 1) % n + 1) for i in range(n)])
    areas = np.array([polygon_area(points[t]) for t in triangles])
    bad = np.nonzero(areas <= 1e-12 * cell.area)[0]
    if len(bad):
        raise MeshError(f"cell {cell.id}: degenerate fan triangle {int(bad[0])}, apex on boundary")
    return CellTriangulation(cell.id, points, triangles, mesh.cell_edges[cell.id], areas)
