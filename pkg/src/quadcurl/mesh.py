"""Polygonal meshes: storage, file I/O, generation and nested refinement."""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import Voronoi, cKDTree

from .exceptions import MeshFormatError, MeshGenerationError, RefinementError, TopologyError
from .quadrature import polygon_area, polygon_centroid, polygon_diameter

MERGE_TOL = 1e-12


@dataclass(eq=False)
class PolygonMesh:
    """A conforming polygonal mesh of a planar domain.

    Parameters
    ----------
    vertices : array (nv, 2)
    cells : list of int arrays
        Counter-clockwise vertex loops.
    boundary_loops : list of (label, int array), optional
        Boundary vertex cycles; label 0 is the outer loop. Detected from the
        cells when omitted.
    parent_of_cell : int array, optional
        Index of the coarse cell containing each cell (nested families).
    level : int
    """

    vertices: np.ndarray
    cells: list
    boundary_loops: list = None
    parent_of_cell: np.ndarray = None
    level: int = 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        if self.parent_of_cell is not None:
            self.parent_of_cell = np.asarray(self.parent_of_cell, dtype=np.int64)
        if self.boundary_loops is None:
            _, self.boundary_loops = detect_boundary_loops(self)
        else:
            self.boundary_loops = [(int(lab), np.asarray(lp, dtype=np.int64))
                                   for lab, lp in self.boundary_loops]

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def betti(self):
        """Number of holes of the domain."""
        return len(self.boundary_loops) - 1

    # -- topology ----------------------------------------------------------
    @cached_property
    def _edge_data(self):
        lens = np.array([len(c) for c in self.cells])
        a = np.concatenate(self.cells)
        b = np.concatenate([np.roll(c, -1) for c in self.cells])
        pairs = np.sort(np.stack([a, b], axis=1), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        counts = np.bincount(inverse, minlength=len(edges))
        offsets = np.concatenate([[0], np.cumsum(lens)])
        return edges, inverse, counts, offsets, a, b

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, lexicographically ordered."""
        return self._edge_data[0]

    def cell_edge_ids(self, c):
        """Edge ids of cell ``c``; entry ``i`` is the edge from vertex ``i`` to ``i+1``."""
        _, inv, _, off, _, _ = self._edge_data
        return inv[off[c]:off[c + 1]]

    @cached_property
    def edge_cells(self):
        """``(ne, 2)`` adjacent cells per edge, ``-1`` on the boundary."""
        edges, inv, counts, off, _, _ = self._edge_data
        out = -np.ones((len(edges), 2), dtype=np.int64)
        cell_of = np.repeat(np.arange(self.n_cells), np.diff(off))
        order = np.argsort(inv, kind="stable")
        first = np.searchsorted(inv[order], np.arange(len(edges)))
        out[:, 0] = cell_of[order[first]]
        two = counts == 2
        out[two, 1] = cell_of[order[first[two] + 1]]
        return out

    @property
    def boundary_edge_mask(self):
        return self._edge_data[2] == 1

    @cached_property
    def oriented_boundary_edges(self):
        """Boundary edges ``(a, b)`` oriented as in their cell (domain on the left)."""
        _, inv, counts, _, a, b = self._edge_data
        on_bnd = counts[inv] == 1
        return np.stack([a[on_bnd], b[on_bnd]], axis=1), inv[on_bnd]

    @cached_property
    def groups(self):
        """Cells bucketed by vertex count: ``{n: (cell_ids, vertex_ids, edge_ids)}``."""
        _, inv, _, off, _, _ = self._edge_data
        lens = np.diff(off)
        out = {}
        for n in np.unique(lens):
            ids = np.flatnonzero(lens == n)
            verts = np.stack([self.cells[i] for i in ids])
            eids = inv[off[ids][:, None] + np.arange(n)]
            out[int(n)] = (ids, verts, eids)
        return out

    # -- geometry ----------------------------------------------------------
    def _per_cell(self, func, width=None):
        out = np.empty((self.n_cells,) if width is None else (self.n_cells, width))
        for _, (ids, verts, _) in self.groups.items():
            out[ids] = func(self.vertices[verts])
        return out

    @cached_property
    def cell_areas(self):
        return self._per_cell(polygon_area)

    @cached_property
    def cell_centroids(self):
        return self._per_cell(polygon_centroid, 2)

    @cached_property
    def cell_diameters(self):
        return self._per_cell(polygon_diameter)

    @property
    def h(self):
        return float(self.cell_diameters.max())

    @property
    def area(self):
        return float(self.cell_areas.sum())

    def cell_polygon(self, c):
        return self.vertices[self.cells[c]]

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_cells

    def loop_vertices(self, label):
        for lab, lp in self.boundary_loops:
            if lab == label:
                return lp
        raise KeyError(f"no boundary loop with label {label}")

    def validate(self):
        """Check the mesh invariants; raise on the first violation."""
        nv = self.n_vertices
        if not np.all(np.isfinite(self.vertices)):
            raise MeshFormatError("non-finite vertex coordinates")
        for i, c in enumerate(self.cells):
            if len(c) < 3:
                raise TopologyError(f"cell {i} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshFormatError(f"cell {i} references a vertex out of range")
            if len(np.unique(c)) != len(c):
                raise TopologyError(f"cell {i} repeats a vertex")
        if np.any(self.cell_areas <= 0):
            bad = int(np.flatnonzero(self.cell_areas <= 0)[0])
            raise TopologyError(f"cell {bad} is not positively oriented")
        counts = self._edge_data[2]
        if np.any(counts > 2):
            raise TopologyError("edge shared by more than two cells")
        # a shared edge must be traversed in opposite directions
        _, inv, _, _, a, _ = self._edge_data
        starts = np.zeros(len(counts))
        np.add.at(starts, inv, (a == self.edges[inv, 0]).astype(float))
        if np.any((counts == 2) & (starts != 1)):
            raise TopologyError("inconsistent cell orientation across an edge")
        labels = sorted(lab for lab, _ in self.boundary_loops)
        if labels.count(0) != 1 or labels != list(range(len(labels))):
            raise TopologyError("boundary loop labels must be 0..m with one outer loop")
        bnd = {tuple(sorted(e)) for e in self.oriented_boundary_edges[0].tolist()}
        seen = set()
        for _, lp in self.boundary_loops:
            for x, y in zip(lp, np.roll(lp, -1)):
                e = (min(x, y), max(x, y))
                if e not in bnd or e in seen:
                    raise TopologyError("boundary loops do not partition the boundary edges")
                seen.add(e)
        if seen != bnd:
            raise TopologyError("boundary loops do not cover the boundary edges")
        return self


# ---------------------------------------------------------------------------
# boundary loops

def _trace_loops(mesh):
    oriented, _ = mesh.oriented_boundary_edges
    nxt = {}
    for a, b in oriented.tolist():
        if a in nxt:
            raise TopologyError(f"boundary pinches at vertex {a}")
        nxt[a] = b
    loops = []
    remaining = set(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        cur = nxt[start]
        while cur != start:
            if cur not in remaining:
                raise TopologyError("open boundary chain")
            loop.append(cur)
            remaining.discard(cur)
            cur = nxt[cur]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def detect_boundary_loops(mesh):
    """Group the boundary edges into closed cycles and label them.

    The outer loop (label 0) is the one whose bounding box contains all the
    others; inner loops get labels ``1..m`` ordered by their
    lexicographically smallest vertex. Each cycle starts at that vertex and
    keeps the orientation of the cells (outer CCW, holes CW).

    Returns
    -------
    m : int
    loops : list of (label, vertex-index array)
    """
    loops = _trace_loops(mesh)
    if not loops:
        raise TopologyError("mesh has no boundary")
    X = mesh.vertices

    def canonical(lp):
        pts = X[lp]
        k = min(range(len(lp)), key=lambda i: (pts[i, 0], pts[i, 1]))
        return np.roll(lp, -k)

    loops = [canonical(lp) for lp in loops]
    boxes = np.array([[X[lp, 0].min(), X[lp, 1].min(), X[lp, 0].max(), X[lp, 1].max()]
                      for lp in loops])
    outer = None
    for i, b in enumerate(boxes):
        contains = np.all((boxes[:, 0] >= b[0]) & (boxes[:, 1] >= b[1])
                          & (boxes[:, 2] <= b[2]) & (boxes[:, 3] <= b[3]))
        if contains:
            if outer is not None:
                raise TopologyError("two boundary loops with identical bounding boxes")
            outer = i
    if outer is None:
        raise TopologyError("no boundary loop encloses the others")
    if polygon_area(X[loops[outer]]) <= 0:
        raise TopologyError("outer boundary loop is not counter-clockwise")
    inner = [i for i in range(len(loops)) if i != outer]
    for i in inner:
        if polygon_area(X[loops[i]]) >= 0:
            raise TopologyError("inner boundary loop is not clockwise")
    inner.sort(key=lambda i: (X[loops[i][0], 0], X[loops[i][0], 1]))
    labeled = [(0, loops[outer])] + [(j + 1, loops[i]) for j, i in enumerate(inner)]
    return len(inner), labeled


# ---------------------------------------------------------------------------
# file format

def save_mesh(mesh, path):
    """Write ``mesh`` in the ``polymesh 1`` text format.

    ``level`` and ``parents`` records are appended when present; readers
    that stop after the boundary loops ignore them.
    """
    lines = ["polymesh 1", f"{mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_loops)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells]
    lines += [" ".join(map(str, [lab, len(lp), *lp.tolist()])) for lab, lp in mesh.boundary_loops]
    lines.append(f"level {mesh.level}")
    if mesh.parent_of_cell is not None:
        lines.append("parents " + " ".join(map(str, mesh.parent_of_cell.tolist())))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _merge_close_vertices(vertices, cells, loops, tol):
    tree = cKDTree(vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return vertices, cells, loops
    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    rep = np.array([find(i) for i in range(len(vertices))])
    keep = np.unique(rep)
    new_index = -np.ones(len(vertices), dtype=np.int64)
    new_index[keep] = np.arange(len(keep))
    remap = new_index[rep]

    def squeeze(loop):
        loop = remap[loop]
        out = [v for i, v in enumerate(loop) if v != loop[i - 1]]
        return np.array(out, dtype=np.int64)

    cells = [squeeze(c) for c in cells]
    loops = None if loops is None else [(lab, squeeze(lp)) for lab, lp in loops]
    return vertices[keep], cells, loops


def _tokens(path):
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line.split()


def load_mesh(path):
    """Read and validate a ``polymesh 1`` file."""
    rows = list(_tokens(path))
    try:
        if rows[0] != ["polymesh", "1"]:
            raise MeshFormatError("missing 'polymesh 1' header")
        nv, nc, nl = map(int, rows[1])
        pos = 2
        verts = np.array([[float(t) for t in rows[pos + i]] for i in range(nv)])
        if verts.shape != (nv, 2):
            raise MeshFormatError("vertex lines must hold two coordinates")
        pos += nv
        cells = []
        for i in range(nc):
            r = list(map(int, rows[pos + i]))
            if r[0] != len(r) - 1:
                raise MeshFormatError(f"cell line {i} has a wrong vertex count")
            cells.append(np.array(r[1:], dtype=np.int64))
        pos += nc
        loops = []
        for i in range(nl):
            r = list(map(int, rows[pos + i]))
            if r[1] != len(r) - 2:
                raise MeshFormatError(f"boundary line {i} has a wrong vertex count")
            loops.append((r[0], np.array(r[2:], dtype=np.int64)))
        pos += nl
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"cannot parse {path}: {exc}") from exc
    level, parents = 0, None
    for r in rows[pos:]:
        if r[0] == "level":
            level = int(r[1])
        elif r[0] == "parents":
            parents = np.array(list(map(int, r[1:])), dtype=np.int64)
            if len(parents) != nc:
                raise MeshFormatError("parents record length differs from the cell count")
        else:
            raise MeshFormatError(f"unexpected record {r[0]!r}")
    for i, c in enumerate(cells):
        if len(c) < 3 or c.min() < 0 or c.max() >= nv:
            raise MeshFormatError(f"cell {i} references a vertex out of range")
    for lab, lp in loops:
        if len(lp) and (lp.min() < 0 or lp.max() >= nv):
            raise MeshFormatError(f"boundary loop {lab} references a vertex out of range")
    verts, cells, loops = _merge_close_vertices(verts, cells, loops or None, MERGE_TOL)
    mesh = PolygonMesh(verts, cells, loops, parent_of_cell=parents, level=level)
    return mesh.validate()


# ---------------------------------------------------------------------------
# domains

@dataclass
class DomainSpec:
    """A polygon with polygonal holes (outer CCW, holes in any orientation)."""

    outer: np.ndarray
    holes: list = field(default_factory=list)
    name: str = "custom"

    def __post_init__(self):
        self.outer = np.asarray(self.outer, dtype=float)
        self.holes = [np.asarray(h, dtype=float) for h in self.holes]

    def shapely(self):
        from shapely.geometry import Polygon
        return Polygon(self.outer, [h for h in self.holes])

    @property
    def area(self):
        return self.shapely().area

    @property
    def bbox(self):
        return (*self.outer.min(axis=0), *self.outer.max(axis=0))

    def max_interior_angle(self):
        """Largest interior angle of the domain, hole corners included."""
        best = 0.0
        rings = [(self.outer, True)] + [(h, False) for h in self.holes]
        for ring, is_outer in rings:
            ccw = polygon_area(ring) > 0
            # traverse with the domain on the left: outer CCW, holes CW
            r = ring if ccw == is_outer else ring[::-1]
            n = len(r)
            for i in range(n):
                u = r[i] - r[i - 1]
                v = r[(i + 1) % n] - r[i]
                turn = math.atan2(u[0] * v[1] - u[1] * v[0], u @ v)
                best = max(best, math.pi - turn)
        return best


def _square(a, b, c, d):
    return np.array([[a, c], [b, c], [b, d], [a, d]], dtype=float)


DOMAINS = {
    "square": DomainSpec(_square(0, 1, 0, 1), name="square"),
    "gamma": DomainSpec(np.array([[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [-1, 1]], float),
                        name="gamma"),
    "square_hole": DomainSpec(_square(0, 1, 0, 1), [_square(0.25, 0.75, 0.25, 0.75)],
                              name="square_hole"),
    "two_holes": DomainSpec(_square(0, 1, 0, 1), [_square(0.15, 0.45, 0.15, 0.45),
                                                   _square(0.55, 0.85, 0.55, 0.85)],
                            name="two_holes"),
}


def get_domain(domain):
    if isinstance(domain, DomainSpec):
        return domain
    try:
        return DOMAINS[domain]
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}; known: {sorted(DOMAINS)}") from None


# ---------------------------------------------------------------------------
# generators

def structured_voronoi(n):
    """Barycentric dual of the uniform ``n x n`` right-triangle mesh of the unit square.

    Interior cells are hexagons whose vertices are the centroids of the six
    triangles around a grid node. Cells of boundary nodes also contain the
    node itself and the midpoints of the adjacent boundary edges.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    g = np.linspace(0.0, 1.0, n + 1)
    P = np.array([[x, y] for y in g for x in g])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    tris = np.array(tris)
    cent = P[tris].mean(axis=1)

    bnd_edges = []
    for i in range(n):
        bnd_edges += [(vid(i, 0), vid(i + 1, 0)), (vid(n, i), vid(n, i + 1)),
                      (vid(i + 1, n), vid(i, n)), (vid(0, i + 1), vid(0, i))]
    bnd_nodes = sorted({v for e in bnd_edges for v in e})

    verts = [cent]
    verts.append(np.array([P[list(e)].mean(axis=0) for e in bnd_edges]))
    verts.append(P[bnd_nodes])
    V = np.vstack(verts)
    n_t, n_e = len(tris), len(bnd_edges)
    node_vertex = {v: n_t + n_e + k for k, v in enumerate(bnd_nodes)}

    incident = [[] for _ in range(len(P))]
    for t, tri in enumerate(tris):
        for v in tri:
            incident[v].append(t)
    for k, e in enumerate(bnd_edges):
        for v in e:
            incident[v].append(n_t + k)

    cells = []
    for v in range(len(P)):
        ids = list(incident[v])
        if v in node_vertex:
            ids.append(node_vertex[v])
        pts = V[ids]
        c = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
        cells.append(np.array(ids)[order])
    return PolygonMesh(V, cells)


def _clipped_regions(seeds, poly, span):
    from shapely.geometry import Polygon
    far = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float) * 10 * span
    far += np.asarray(poly.centroid.coords[0])
    vor = Voronoi(np.vstack([seeds, far]))
    out = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshGenerationError("unbounded Voronoi region for an interior seed")
        cell = Polygon(vor.vertices[region]).buffer(0)
        out.append(cell.intersection(poly))
    return out


def _polygons_of(geom):
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon" and g.area > 0]


def _insert_hanging_vertices(vertices, cells, tol):
    """Add vertices lying on the interior of a cell edge to that cell's loop."""
    tree = cKDTree(vertices)
    out = []
    for c in cells:
        loop = []
        for a, b in zip(c, np.roll(c, -1)):
            loop.append(a)
            pa, pb = vertices[a], vertices[b]
            d = pb - pa
            L = math.hypot(*d)
            cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * L + tol)
            hits = []
            for j in cand:
                if j == a or j == b:
                    continue
                w = vertices[j] - pa
                t = (w @ d) / (L * L)
                dist = abs(d[0] * w[1] - d[1] * w[0]) / L
                if 0 < t < 1 and dist < tol:
                    hits.append((t, j))
            loop.extend(j for _, j in sorted(hits))
        out.append(np.array(loop, dtype=np.int64))
    return out


def mesh_from_polygons(polys, tol):
    """Assemble a conforming mesh from shapely polygons that tile a domain."""
    from shapely.geometry.polygon import orient
    coords, cells, off = [], [], 0
    for p in polys:
        if len(p.interiors):
            raise MeshGenerationError("a cell encloses a hole of the domain")
        ring = np.asarray(orient(p, 1.0).exterior.coords)[:-1]
        coords.append(ring)
        cells.append(np.arange(off, off + len(ring)))
        off += len(ring)
    V, cells, _ = _merge_close_vertices(np.vstack(coords), cells, None, tol)
    cells = [c for c in cells if len(c) >= 3]
    cells = _insert_hanging_vertices(V, cells, tol)
    # drop vertices made redundant by merging (none normally) and reindex
    used = np.unique(np.concatenate(cells))
    remap = -np.ones(len(V), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return PolygonMesh(V[used], [remap[c] for c in cells])


def _reflex_vertex(ring):
    n = len(ring)
    for i in range(n):
        u = ring[i] - ring[i - 1]
        v = ring[(i + 1) % n] - ring[i]
        if u[0] * v[1] - u[1] * v[0] < -1e-12 * (u @ u + v @ v):
            return i
    return None


def _split_reflex(poly):
    """Cut a clipped cell at a reflex corner along one of its own diagonals.

    Cells that wrap a reentrant corner of the domain would otherwise refine
    into darts whose diagonals meet outside the quadrilateral. The diagonal
    giving the most even split by area is used, so no vertex is added to the
    neighbouring cells and no sliver is cut off at the corner. When no single
    diagonal leaves both angles at the corner convex, the corner is fanned
    by repeated splits.
    """
    from shapely.geometry import LineString, Polygon
    from shapely.geometry.polygon import orient
    ring = np.asarray(orient(poly, 1.0).exterior.coords)[:-1]
    i = _reflex_vertex(ring)
    if i is None:
        return [poly]
    n = len(ring)
    p = ring[i]
    u = ring[i - 1] - p
    v = ring[(i + 1) % n] - p

    def pieces(j):
        a = ring[i:j + 1] if i < j else np.vstack([ring[i:], ring[:j + 1]])
        b = ring[j:i + 1] if j < i else np.vstack([ring[j:], ring[:i + 1]])
        return a, b

    best, best_j = None, None
    for j in range(n):
        if j in (i, (i + 1) % n, (i - 1) % n):
            continue
        w = ring[j] - p
        if not poly.buffer(1e-12 * np.linalg.norm(w)).contains(LineString([p, ring[j]])):
            continue
        # prefer diagonals leaving both sub-angles at p below pi; otherwise the
        # piece that is still reflex at p is split again
        convex = (w[0] * u[1] - w[1] * u[0]) > 0 and (v[0] * w[1] - v[1] * w[0]) > 0
        score = (convex, min(polygon_area(q) for q in pieces(j)))
        if best is None or score > best:
            best, best_j = score, j
    if best_j is None:
        raise MeshGenerationError("could not split a nonconvex cell along a diagonal")
    a, b = pieces(best_j)
    return _split_reflex(Polygon(a)) + _split_reflex(Polygon(b))


def random_voronoi(domain, n_seeds, seed=0, lloyd_iters=100):
    """Lloyd-relaxed Voronoi mesh clipped to ``domain``.

    Relaxation stops once the largest seed displacement drops below
    ``1e-3`` times the nominal cell size ``sqrt(|domain| / n_seeds)`` or after
    ``lloyd_iters`` sweeps. Deterministic for a given ``seed``.
    """
    if n_seeds < 4:
        raise ValueError("n_seeds must be >= 4")
    dom = get_domain(domain)
    poly = dom.shapely()
    from shapely.geometry import Point
    x0, y0, x1, y1 = poly.bounds
    span = max(x1 - x0, y1 - y0)
    rng = np.random.default_rng(seed)
    seeds = []
    while len(seeds) < n_seeds:
        p = rng.uniform((x0, y0), (x1, y1))
        if poly.contains(Point(p)):
            seeds.append(p)
    seeds = np.array(seeds)
    hchar = math.sqrt(poly.area / n_seeds)
    for _ in range(lloyd_iters):
        regions = _clipped_regions(seeds, poly, span)
        new = np.array([r.centroid.coords[0] if not r.is_empty else s
                        for r, s in zip(regions, seeds)])
        move = np.max(np.linalg.norm(new - seeds, axis=1))
        seeds = new
        if move < 1e-3 * hchar:
            break
    regions = _clipped_regions(seeds, poly, span)
    polys = [q for r in regions for p in _polygons_of(r) for q in _split_reflex(p)]
    if len(polys) < 0.9 * n_seeds:
        raise MeshGenerationError(
            f"only {len(polys)} cells survived clipping for {n_seeds} seeds")
    mesh = mesh_from_polygons(polys, 1e-9 * span)
    return mesh.validate()


# ---------------------------------------------------------------------------
# refinement

def _point_in_polygon(p, poly):
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        (xa, ya), (xb, yb) = poly[i], poly[(i + 1) % n]
        if (ya > y) != (yb > y):
            xc = xa + (y - ya) * (xb - xa) / (yb - ya)
            if xc > x:
                inside = not inside
    return inside


def _refined_loops(mesh, mid_index):
    out = []
    for lab, lp in mesh.boundary_loops:
        new = []
        for a, b in zip(lp, np.roll(lp, -1)):
            new += [a, mid_index[(min(a, b), max(a, b))]]
        out.append((lab, np.array(new, dtype=np.int64)))
    return out


def _split_cells(mesh, centers):
    nv, ne = mesh.n_vertices, mesh.n_edges
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    V = np.vstack([mesh.vertices, mids, centers])
    cells, parents = [], []
    for c, loop in enumerate(mesh.cells):
        eids = nv + mesh.cell_edge_ids(c)
        ctr = nv + ne + c
        k = len(loop)
        for i in range(k):
            cells.append(np.array([loop[i], eids[i], ctr, eids[i - 1]]))
            parents.append(c)
    mid_index = {tuple(e): nv + i for i, e in enumerate(mesh.edges.tolist())}
    fine = PolygonMesh(V, cells, _refined_loops(mesh, mid_index),
                       parent_of_cell=np.array(parents), level=mesh.level + 1)
    if np.any(fine.cell_areas <= 0):
        bad = int(fine.parent_of_cell[np.flatnonzero(fine.cell_areas <= 0)[0]])
        raise RefinementError(f"refinement of cell {bad} produced an inverted quadrilateral")
    return fine


def refine_to_quads(mesh):
    """Split every n-gon into n quadrilaterals around its barycenter."""
    centers = mesh.cell_centroids
    for c in range(mesh.n_cells):
        if not _point_in_polygon(centers[c], mesh.cell_polygon(c)):
            raise RefinementError(f"barycenter of cell {c} lies outside the cell")
    return _split_cells(mesh, centers)


def refine_quads(mesh):
    """Uniformly refine a quadrilateral mesh through the diagonal intersections."""
    centers = np.empty((mesh.n_cells, 2))
    for c, loop in enumerate(mesh.cells):
        if len(loop) != 4:
            raise RefinementError(f"cell {c} is not a quadrilateral")
        p0, p1, p2, p3 = mesh.vertices[loop]
        d1, d2, r = p2 - p0, p3 - p1, p1 - p0
        den = d1[0] * d2[1] - d1[1] * d2[0]
        if den == 0:
            raise RefinementError(f"diagonals of cell {c} are parallel")
        s = (r[0] * d2[1] - r[1] * d2[0]) / den
        t = (r[0] * d1[1] - r[1] * d1[0]) / den
        if not (0 < s < 1 and 0 < t < 1):
            raise RefinementError(f"diagonals of cell {c} do not meet inside it")
        centers[c] = p0 + s * d1
    return _split_cells(mesh, centers)


def nested_family(mesh, levels):
    """``levels`` meshes: ``mesh``, its quad split, then uniform quad refinements."""
    family = [mesh]
    while len(family) < levels:
        prev = family[-1]
        family.append(refine_to_quads(prev) if len(family) == 1 else refine_quads(prev))
    return family


def check_nested(coarse, fine, rtol=1e-12):
    """True when every fine cell lies inside its parent (vertex test)."""
    if fine.parent_of_cell is None:
        raise TopologyError("fine mesh has no parent links")
    tol = rtol * max(coarse.h, 1.0)
    for c, loop in enumerate(fine.cells):
        poly = coarse.cell_polygon(fine.parent_of_cell[c])
        for p in fine.vertices[loop]:
            if not _point_in_polygon(p, poly) and _dist_to_boundary(p, poly) > tol:
                return False
    return True


def _dist_to_boundary(p, poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    d = b - a
    t = np.clip(np.sum((p - a) * d, axis=1) / np.sum(d * d, axis=1), 0, 1)
    proj = a + t[:, None] * d
    return float(np.min(np.linalg.norm(proj - p, axis=1)))


# ---------------------------------------------------------------------------
# shape regularity

@dataclass
class ShapeReport:
    h: float
    min_edge_ratio: float
    star_kernel_ratio: float


def kernel_inradius(poly):
    """Radius of the largest disc inside the kernel of a CCW polygon (an LP)."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    d = b - a
    L = np.linalg.norm(d, axis=1)
    n_in = np.stack([-d[:, 1], d[:, 0]], axis=1) / L[:, None]
    # n_in . (c - a_i) >= r  <=>  -n_in . c + r <= -n_in . a_i
    A = np.hstack([-n_in, np.ones((len(a), 1))])
    rhs = -np.sum(n_in * a, axis=1)
    res = linprog([0, 0, -1], A_ub=A, b_ub=rhs, bounds=[(None, None)] * 2 + [(0, None)],
                  method="highs")
    return float(res.x[2]) if res.status == 0 else 0.0


def shape_regularity(mesh):
    """Mesh size, smallest edge/diameter ratio and kernel-disc/diameter ratio."""
    edge_ratio = np.inf
    star_ratio = np.inf
    for c in range(mesh.n_cells):
        poly = mesh.cell_polygon(c)
        hD = mesh.cell_diameters[c]
        L = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
        edge_ratio = min(edge_ratio, L.min() / hD)
        star_ratio = min(star_ratio, kernel_inradius(poly) / hD)
    return ShapeReport(mesh.h, float(edge_ratio), float(star_ratio))


def locate_points(mesh, points):
    """Index of a cell containing each point, ``-1`` when outside the mesh."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tree = cKDTree(mesh.cell_centroids)
    k = min(12, mesh.n_cells)
    _, cand = tree.query(pts, k=k)
    cand = cand.reshape(len(pts), -1)
    out = -np.ones(len(pts), dtype=np.int64)
    for i, p in enumerate(pts):
        order = list(cand[i]) + [c for c in range(mesh.n_cells) if c not in set(cand[i])]
        for c in order:
            poly = mesh.cell_polygon(c)
            if _point_in_polygon(p, poly) or _dist_to_boundary(p, poly) < 1e-12 * mesh.h:
                out[i] = c
                break
    return out


gen_structured_voronoi = structured_voronoi
gen_random_voronoi = random_voronoi
