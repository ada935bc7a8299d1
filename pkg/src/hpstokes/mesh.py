"""Quadrilateral meshes with isotropic refinement and hanging nodes.

A :class:`Mesh` stores the full refinement forest.  Queries about the active
cells (neighbors, hanging edges, faces) go through a :class:`CellComplex`,
which only needs vertex ids, coordinates and the edge-splitting history, so
the same machinery also serves small local patches that are not part of the
mesh itself.

Local vertex order is counterclockwise, matching the reference square
corners (0,0), (1,0), (1,1), (0,1).  Local edges run in the direction of
increasing reference coordinate:

    edge 0: v0 -> v1 (y=0)     edge 1: v1 -> v2 (x=1)
    edge 2: v3 -> v2 (y=1)     edge 3: v0 -> v3 (x=0)
"""
import copy
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

EDGE_VERTICES = ((0, 1), (1, 2), (3, 2), (0, 3))
# child position (i, j) in units of half the reference square
CHILD_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


def edge_key(a, b):
    return (a, b) if a < b else (b, a)


def edge_reference_points(edge, s):
    """Reference coordinates of parameter values ``s`` along local edge ``edge``."""
    s = np.asarray(s, dtype=float)
    one, zero = np.ones_like(s), np.zeros_like(s)
    return np.column_stack({0: (s, zero), 1: (one, s), 2: (s, one), 3: (zero, s)}[edge])


def edge_local_nodes(p, edge):
    """Indices of the tensor nodes of a degree-p cell on ``edge``, in edge order."""
    n = p + 1
    r = np.arange(n)
    return {0: r, 1: (n - 1) + n * r, 2: n * (n - 1) + r, 3: n * r}[edge]


def bilinear_map(xy, ref):
    """Map reference points ``ref`` (n, 2) through the cell with corners ``xy`` (4, 2)."""
    x, y = ref[:, 0:1], ref[:, 1:2]
    return (
        (1 - x) * (1 - y) * xy[0]
        + x * (1 - y) * xy[1]
        + x * y * xy[2]
        + (1 - x) * y * xy[3]
    )


def jacobians(xy, ref):
    """Jacobian matrices d(physical)/d(reference), shape (n, 2, 2)."""
    x, y = ref[:, 0:1], ref[:, 1:2]
    dx = (1 - y) * (xy[1] - xy[0]) + y * (xy[2] - xy[3])
    dy = (1 - x) * (xy[3] - xy[0]) + x * (xy[2] - xy[1])
    return np.stack([dx, dy], axis=-1)


def diameter(points):
    pts = np.asarray(points)
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


@dataclass
class EdgeSide:
    """How one local edge of a cell sits in the complex.

    ``kind`` is one of ``conforming``, ``coarse`` (the neighbors are two
    finer cells), ``fine`` (this edge is half of a coarser neighbor's edge)
    or ``boundary``.  ``master`` is the key of the full edge that carries the
    trace; ``t0``/``t1`` are the master parameters of this side's start and
    end vertex.  ``neighbors`` lists ``(cell, edge, s0, s1)`` with the own
    parameter range ``[s0, s1]`` covered by that neighbor.
    """

    kind: str
    master: tuple
    t0: float
    t1: float
    neighbors: list = field(default_factory=list)


@dataclass
class MasterEdge:
    key: tuple
    xy: np.ndarray  # (2, 2) coordinates of key[0], key[1]
    owners: list  # cells (local indices) whose trace lives on this edge
    midpoint: int = -1  # hanging vertex id, -1 if none
    on_boundary: bool = False


class CellComplex:
    """Adjacency analysis for a set of quadrilaterals.

    Parameters
    ----------
    vertex_ids : (n, 4) int array
    xy : (n, 4, 2) float array of corner coordinates
    midpoints : mapping from edge key to the vertex id splitting it
    parent_edges : mapping from edge key to the key of the edge it halves
    labels : optional ids to report for cells (defaults to 0..n-1)
    """

    def __init__(self, vertex_ids, xy, midpoints, parent_edges, labels=None):
        self.vertex_ids = np.asarray(vertex_ids, dtype=np.int64).reshape(-1, 4)
        self.xy = np.asarray(xy, dtype=float).reshape(-1, 4, 2)
        self.labels = list(range(len(self.vertex_ids))) if labels is None else list(labels)
        self.n_cells = len(self.vertex_ids)
        self.midpoints = midpoints
        self.parent_edges = parent_edges
        self.coords = {}
        owners = defaultdict(list)
        for c, (vids, pts) in enumerate(zip(self.vertex_ids, self.xy)):
            for v, x in zip(vids, pts):
                self.coords[int(v)] = x
            for e, (i, j) in enumerate(EDGE_VERTICES):
                owners[edge_key(int(vids[i]), int(vids[j]))].append((c, e))
        self.sides = [[None] * 4 for _ in range(self.n_cells)]
        self.masters = {}
        self.hanging = {}

        def tparam(key, v):
            # anything that is not an endpoint is the midpoint
            return 0.0 if v == key[0] else 1.0 if v == key[1] else 0.5

        for c, vids in enumerate(self.vertex_ids):
            for e, (i, j) in enumerate(EDGE_VERTICES):
                a, b = int(vids[i]), int(vids[j])
                key = edge_key(a, b)
                others = [o for o in owners[key] if o[0] != c]
                if others:
                    c2, e2 = others[0]
                    side = EdgeSide("conforming", key, tparam(key, a), tparam(key, b),
                                    [(c2, e2, 0.0, 1.0)])
                    self._master(key, c)
                    self.sides[c][e] = side
                    continue
                m = midpoints.get(key, -1)
                if m >= 0:
                    halves = []
                    for s0, s1, h in ((0.0, 0.5, edge_key(a, m)), (0.5, 1.0, edge_key(m, b))):
                        for c2, e2 in owners.get(h, ()):
                            halves.append((c2, e2, s0, s1))
                    if halves:
                        side = EdgeSide("coarse", key, tparam(key, a), tparam(key, b), halves)
                        me = self._master(key, c)
                        me.midpoint = m
                        me.on_boundary = me.on_boundary or len(halves) < 2
                        self.hanging[m] = key
                        self.sides[c][e] = side
                        continue
                pkey = parent_edges.get(key)
                pown = owners.get(pkey, ()) if pkey is not None else ()
                if pown:
                    c2, e2 = pown[0]
                    self.sides[c][e] = EdgeSide("fine", pkey, tparam(pkey, a), tparam(pkey, b),
                                                [(c2, e2, 0.0, 1.0)])
                    self._master(pkey, c)
                    continue
                self.sides[c][e] = EdgeSide("boundary", key, tparam(key, a), tparam(key, b))
                self._master(key, c).on_boundary = True

    def _master(self, key, c):
        me = self.masters.get(key)
        if me is None:
            xy = np.array([self.coords[key[0]], self.coords[key[1]]])
            me = self.masters[key] = MasterEdge(key, xy, [])
        if c not in me.owners:
            me.owners.append(c)
        return me

    def neighbors(self, c):
        out = []
        for side in self.sides[c]:
            for c2, *_ in side.neighbors:
                if c2 not in out:
                    out.append(c2)
        return out

    def touch_points(self, c):
        pts = set(int(v) for v in self.vertex_ids[c])
        for side in self.sides[c]:
            if side.kind == "coarse":
                pts.add(self.masters[side.master].midpoint)
        return pts

    def cell_diameter(self, c):
        return diameter(self.xy[c])

    def interior_segments(self):
        """Each interior face segment once: ``(c, e, s0, s1, c2, e2)``.

        ``[s0, s1]`` is the parameter range on edge ``e`` of cell ``c``; the
        segment covers the whole of edge ``e2`` of ``c2`` unless both are
        conforming.
        """
        out = []
        for c in range(self.n_cells):
            for e, side in enumerate(self.sides[c]):
                if side.kind == "conforming":
                    c2, e2, _, _ = side.neighbors[0]
                    if c < c2:
                        out.append((c, e, 0.0, 1.0, c2, e2))
                elif side.kind == "coarse":
                    for c2, e2, s0, s1 in side.neighbors:
                        out.append((c, e, s0, s1, c2, e2))
        return out


@dataclass
class Face:
    """An active face segment.

    ``cells`` holds one cell for boundary faces and two otherwise; for a
    sub-face under a hanging vertex the fine cell comes first and ``parent``
    is the key of the coarse edge.
    """

    id: int
    endpoints: np.ndarray
    cells: tuple
    boundary: bool
    parent: tuple = None

    @property
    def length(self):
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))


class Mesh:
    """Refinement forest of quadrilateral cells.

    Cells are never deleted; refining a cell deactivates it and appends its
    four children, so cell ids are stable across refinements.
    """

    def __init__(self, vertices, cells, boundary_tags=None):
        self._coords = [tuple(map(float, v)) for v in vertices]
        self.cell_vertices = [tuple(int(v) for v in c) for c in cells]
        n = len(self.cell_vertices)
        self.level = [0] * n
        self.parent = [-1] * n
        self.offset = [(0, 0)] * n
        self.children = [None] * n
        self.active = [True] * n
        self.midpoints = {}
        self.parent_edges = {}
        self._owners = defaultdict(list)
        for c in range(n):
            self._register(c)
        self._complex = None
        self.boundary_tags = dict(boundary_tags or {})
        for c in range(n):
            for e, (i, j) in enumerate(EDGE_VERTICES):
                key = edge_key(self.cell_vertices[c][i], self.cell_vertices[c][j])
                if len(self._owners[key]) == 1:
                    self.boundary_tags.setdefault(key, 0)
        for c, vids in enumerate(self.cell_vertices):
            if self._jacobian_sign(c) <= 0:
                raise ValueError(f"cell {c} is not counterclockwise or is degenerate")

    def _register(self, c):
        vids = self.cell_vertices[c]
        for i, j in EDGE_VERTICES:
            self._owners[edge_key(vids[i], vids[j])].append(c)

    def _jacobian_sign(self, c):
        xy = self.cell_xy(c)
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return np.linalg.det(jacobians(xy, corners)).min()

    # -- geometry ---------------------------------------------------------
    @property
    def vertices(self):
        return np.array(self._coords)

    @property
    def n_cells(self):
        return len(self.cell_vertices)

    def cell_xy(self, c):
        return np.array([self._coords[v] for v in self.cell_vertices[c]])

    def h(self, c):
        return diameter(self.cell_xy(c))

    def area(self, c):
        xy = self.cell_xy(c)
        x, y = xy[:, 0], xy[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def active_cells(self):
        return [c for c in range(self.n_cells) if self.active[c]]

    def boundary_tag(self, key):
        while key not in self.boundary_tags and key in self.parent_edges:
            key = self.parent_edges[key]
        return self.boundary_tags.get(key)

    # -- topology ---------------------------------------------------------
    def complex(self):
        """Adjacency of the active cells; labels are cell ids."""
        if self._complex is None:
            act = self.active_cells()
            vids = [self.cell_vertices[c] for c in act]
            xy = np.array([self.cell_xy(c) for c in act]).reshape(-1, 4, 2)
            self._complex = CellComplex(vids, xy, self.midpoints, self.parent_edges, act)
            self._index = {c: i for i, c in enumerate(act)}
        return self._complex

    def local_index(self, c):
        self.complex()
        return self._index[c]

    def _split_edge(self, a, b):
        key = edge_key(a, b)
        m = self.midpoints.get(key)
        if m is None:
            m = len(self._coords)
            pa, pb = np.array(self._coords[a]), np.array(self._coords[b])
            self._coords.append(tuple(0.5 * (pa + pb)))
            self.midpoints[key] = m
            self.parent_edges[edge_key(a, m)] = key
            self.parent_edges[edge_key(m, b)] = key
        return m

    def _coarser_neighbors(self, c):
        vids = self.cell_vertices[c]
        out = []
        for i, j in EDGE_VERTICES:
            pkey = self.parent_edges.get(edge_key(vids[i], vids[j]))
            if pkey is None:
                continue
            out.extend(o for o in self._owners[pkey] if self.active[o] and o != c)
        return out

    def _split(self, c):
        v0, v1, v2, v3 = self.cell_vertices[c]
        m01 = self._split_edge(v0, v1)
        m12 = self._split_edge(v1, v2)
        m32 = self._split_edge(v3, v2)
        m03 = self._split_edge(v0, v3)
        center = len(self._coords)
        self._coords.append(tuple(self.cell_xy(c).mean(axis=0)))
        quads = [(v0, m01, center, m03), (m01, v1, m12, center),
                 (center, m12, v2, m32), (m03, center, m32, v3)]
        kids = []
        for q, off in zip(quads, CHILD_OFFSETS):
            k = len(self.cell_vertices)
            self.cell_vertices.append(q)
            self.level.append(self.level[c] + 1)
            self.parent.append(c)
            self.offset.append(off)
            self.children.append(None)
            self.active.append(True)
            self._register(k)
            kids.append(k)
        self.children[c] = tuple(kids)
        self.active[c] = False

    def refine(self, marked):
        """Refine ``marked`` cells isotropically, plus the closure that keeps
        at most one hanging vertex per edge.  Returns the list of cells that
        were actually split, in order.
        """
        stack = sorted({int(c) for c in marked if self.active[int(c)]}, reverse=True)
        split = []
        while stack:
            c = stack[-1]
            if not self.active[c]:
                stack.pop()
                continue
            coarse = [n for n in self._coarser_neighbors(c) if n not in stack]
            if coarse:
                stack.extend(sorted(set(coarse), reverse=True))
                continue
            stack.pop()
            self._split(c)
            split.append(c)
        if split:
            self._complex = None
        return split

    def faces(self):
        cx = self.complex()
        lab = cx.labels
        out = []
        for c in range(cx.n_cells):
            vids = cx.vertex_ids[c]
            for e, side in enumerate(cx.sides[c]):
                i, j = EDGE_VERTICES[e]
                ends = np.array([cx.coords[int(vids[i])], cx.coords[int(vids[j])]])
                if side.kind == "boundary":
                    out.append(Face(len(out), ends, (lab[c],), True))
                elif side.kind == "conforming":
                    c2 = side.neighbors[0][0]
                    if c < c2:
                        out.append(Face(len(out), ends, (lab[c], lab[c2]), False))
                elif side.kind == "fine":
                    c2 = side.neighbors[0][0]
                    out.append(Face(len(out), ends, (lab[c], lab[c2]), False, side.master))
        return out

    def copy(self):
        return copy.deepcopy(self)


def make_l_shape_mesh(n_initial=12):
    """Uniform square mesh of the L-shape (-1,1)^2 minus [0,1]x[-1,0].

    ``n_initial`` must be 3*4^k; all returned cells have level 0.
    """
    k, n = 0, int(n_initial)
    if n < 3 or n != n_initial:
        raise ValueError(f"n_initial must be of the form 3*4^k, got {n_initial}")
    while n > 3 and n % 4 == 0:
        n //= 4
        k += 1
    if n != 3:
        raise ValueError(f"n_initial must be of the form 3*4^k, got {n_initial}")
    m = 2 ** k  # squares per unit length
    h = 1.0 / m
    grid = {}
    verts = []

    def vid(i, j):
        if (i, j) not in grid:
            grid[(i, j)] = len(verts)
            verts.append((-1.0 + i * h, -1.0 + j * h))
        return grid[(i, j)]

    cells = []
    for j in range(2 * m):
        for i in range(2 * m):
            if i >= m and j < m:
                continue
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return Mesh(verts, cells)


def make_rectangle_mesh(x0, x1, y0, y1, nx, ny):
    """Uniform ``nx`` x ``ny`` mesh of an axis-aligned rectangle."""
    xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
    verts = [(x, y) for y in ys for x in xs]
    cells = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            cells.append((a, a + 1, a + nx + 2, a + nx + 1))
    return Mesh(verts, cells)


def refine_cells(mesh, marked):
    """Refine in place (with closure) and return the mesh."""
    mesh.refine(marked)
    return mesh


def cell_patch(mesh, cell):
    """``cell`` together with all active cells sharing a full or partial edge."""
    if not mesh.active[cell]:
        raise ValueError(f"cell {cell} is not active")
    cx = mesh.complex()
    i = mesh.local_index(cell)
    return {cell} | {cx.labels[n] for n in cx.neighbors(i)}


def face_patch(mesh, face):
    if face.boundary:
        raise ValueError(f"face {face.id} lies on the boundary")
    return set(face.cells)


def check_regularity(mesh, degrees, gamma_h, gamma_p):
    """Test (gamma_h, gamma_p)-regularity over all pairs of touching cells.

    Returns ``(ok, violations)`` where each violation is ``(K, K', 'h'|'p')``.
    """
    cx = mesh.complex()
    at_point = defaultdict(list)
    for c in range(cx.n_cells):
        for v in cx.touch_points(c):
            at_point[v].append(c)
    pairs = set()
    for cells in at_point.values():
        for a in cells:
            for b in cells:
                if a < b:
                    pairs.add((a, b))
    hs = [cx.cell_diameter(c) for c in range(cx.n_cells)]
    tol = 1.0 + 1e-12
    bad = []
    for a, b in sorted(pairs):
        ka, kb = cx.labels[a], cx.labels[b]
        if not (hs[b] <= gamma_h * hs[a] * tol and hs[a] <= gamma_h * hs[b] * tol):
            bad.append((ka, kb, "h"))
        pa, pb = degrees[ka], degrees[kb]
        if not (pb <= gamma_p * pa * tol and pa <= gamma_p * pb * tol):
            bad.append((ka, kb, "p"))
    return not bad, bad
