"""Conforming hp Taylor-Hood spaces on one-irregular quadrilateral meshes.

Global degrees of freedom live on "entities": every vertex that is not a
hanging vertex, the interior nodes of every master edge, and the interior
nodes of every cell.  A master edge carries a polynomial of the smallest
degree among the cells touching it (minimum rule).  Each cell reads its
nodal values off the global vector through a small dense extraction matrix,
which is where hanging-node and degree-mismatch continuity are encoded.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import CellComplex, EDGE_VERTICES, bilinear_map, edge_local_nodes, jacobians
from .quadrature import gauss_lobatto_nodes, lagrange_1d, shape_basis, tensor_gauss

_CORNER_NODE = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}


def cell_geometry(xy, nq):
    """Physical quadrature points, JxW and inverse Jacobians for ``nq``^2 Gauss points."""
    rule = tensor_gauss(nq)
    jac = jacobians(xy, rule.points)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("cell has a non-positive Jacobian determinant")
    return bilinear_map(xy, rule.points), det * rule.weights, np.linalg.inv(jac)


class ScalarSpace:
    """Continuous scalar Lagrange space with per-cell degrees on a complex."""

    def __init__(self, cx: CellComplex, degrees):
        self.cx = cx
        self.degrees = [int(p) for p in degrees]
        if any(p < 1 for p in self.degrees):
            raise ValueError("scalar degrees must be >= 1")
        dof_points = []

        def new_dofs(points):
            start = len(dof_points)
            dof_points.extend(points)
            return np.arange(start, len(dof_points))

        self.vertex_dof = {}
        for vids in cx.vertex_ids:
            for v in map(int, vids):
                if v not in cx.hanging and v not in self.vertex_dof:
                    self.vertex_dof[v] = int(new_dofs([cx.coords[v]])[0])
        self.edge_degree = {}
        self.edge_dofs = {}
        for key, me in cx.masters.items():
            pe = min(self.degrees[o] for o in me.owners)
            self.edge_degree[key] = pe
            t = gauss_lobatto_nodes(pe)[1:-1]
            pts = (1 - t)[:, None] * me.xy[0] + t[:, None] * me.xy[1]
            self.edge_dofs[key] = new_dofs(list(pts))
        self.interior_dofs = []
        for c, p in enumerate(self.degrees):
            nodes = shape_basis(p).nodes
            inner = [k for k in range(len(nodes)) if 0 < k % (p + 1) < p and 0 < k // (p + 1) < p]
            self.interior_dofs.append((inner, new_dofs(list(bilinear_map(cx.xy[c], nodes[inner])))))
        self.n_dofs = len(dof_points)
        self.dof_points = np.array(dof_points).reshape(-1, 2)
        self._vexpr = {}
        self.cell_dofs = []
        self.cell_matrix = []
        self.relations = []
        for c in range(cx.n_cells):
            dofs, mat = self._extraction(c)
            self.cell_dofs.append(dofs)
            self.cell_matrix.append(mat)

    # -- expressions of node values in terms of dofs ----------------------
    def _vertex_expr(self, v):
        if v in self.vertex_dof:
            return {self.vertex_dof[v]: 1.0}
        if v not in self._vexpr:
            self._vexpr[v] = self._edge_expr(self.cx.hanging[v], 0.5)
        return self._vexpr[v]

    def _edge_expr(self, key, t):
        pe = self.edge_degree[key]
        coef = lagrange_1d(pe, [t])[0]
        out = {}
        ends = (self._vertex_expr(key[0]), self._vertex_expr(key[1]))
        for w, expr in ((coef[0], ends[0]), (coef[-1], ends[1])):
            for d, x in expr.items():
                out[d] = out.get(d, 0.0) + w * x
        for w, d in zip(coef[1:-1], self.edge_dofs[key]):
            out[int(d)] = out.get(int(d), 0.0) + w
        return {d: x for d, x in out.items() if abs(x) > 1e-14}

    def _extraction(self, c):
        p = self.degrees[c]
        n = p + 1
        cx = self.cx
        rows = [None] * (n * n)
        vids = cx.vertex_ids[c]
        for corner, (i, j) in _CORNER_NODE.items():
            rows[i * p + j * p * n] = self._vertex_expr(int(vids[corner]))
        s = gauss_lobatto_nodes(p)[1:-1]
        for e in range(4):
            side = cx.sides[c][e]
            local = edge_local_nodes(p, e)[1:-1]
            key = side.master
            pe = self.edge_degree[key]
            if side.kind != "fine" and pe == p:
                dofs = self.edge_dofs[key]
                if side.t0 > side.t1:
                    dofs = dofs[::-1]
                for k, d in zip(local, dofs):
                    rows[k] = {int(d): 1.0}
            else:
                t = side.t0 + s * (side.t1 - side.t0)
                for k, tk in zip(local, t):
                    rows[k] = self._edge_expr(key, tk)
                    self.relations.append((c, int(k), rows[k]))
        inner, dofs = self.interior_dofs[c]
        for k, d in zip(inner, dofs):
            rows[k] = {int(d): 1.0}
        cols = sorted({d for r in rows for d in r})
        index = {d: i for i, d in enumerate(cols)}
        mat = np.zeros((n * n, len(cols)))
        for k, r in enumerate(rows):
            for d, x in r.items():
                mat[k, index[d]] = x
        return np.array(cols, dtype=np.int64), mat

    def boundary_dofs(self, keys=None):
        """Dofs on master edges flagged as boundary (restricted to ``keys`` if given)."""
        out = set()
        for key, me in self.cx.masters.items():
            if not me.on_boundary or (keys is not None and key not in keys):
                continue
            out.update(int(d) for d in self.edge_dofs[key])
            for v in key:
                if v in self.vertex_dof:
                    out.add(self.vertex_dof[v])
        return np.array(sorted(out), dtype=np.int64)

    def local_values(self, c, coefficients):
        return self.cell_matrix[c] @ coefficients[self.cell_dofs[c]]


class HpSpace:
    """Taylor-Hood space: velocity degree p_K, pressure degree p_K - 1.

    The global coefficient vector is laid out as ``[u_x, u_y, pressure]``.
    """

    def __init__(self, cx, degrees, boundary_keys=None):
        degrees = [int(p) for p in degrees]
        if any(p < 2 for p in degrees):
            raise ValueError("velocity degrees must be >= 2")
        self.cx = cx
        self.degrees = degrees
        self.velocity = ScalarSpace(cx, degrees)
        self.pressure = ScalarSpace(cx, [p - 1 for p in degrees])
        self.boundary_keys = boundary_keys
        nv, npr = self.velocity.n_dofs, self.pressure.n_dofs
        self.n_velocity = 2 * nv
        self.n_pressure = npr
        self.n_dofs = 2 * nv + npr
        self.offsets = (0, nv, 2 * nv)

    @property
    def n_cells(self):
        return self.cx.n_cells

    def cell_id(self, c):
        return self.cx.labels[c]

    def split(self, x):
        nv = self.velocity.n_dofs
        return x[:nv], x[nv:2 * nv], x[2 * nv:]


def distribute_dofs(mesh, degrees):
    """Build the hp space on the active cells of ``mesh``.

    ``degrees`` maps cell id to velocity degree.
    """
    cx = mesh.complex()
    degs = [degrees[c] for c in cx.labels]
    space = HpSpace(cx, degs)
    space.mesh = mesh
    return space


@dataclass
class ConstraintSet:
    """Affine constraints on the global coefficient vector.

    ``fixed`` maps constrained dofs to prescribed values (Dirichlet data).
    ``mean_dof`` is the pressure dof eliminated by the zero-mean condition
    ``mean_weights @ x[pressure] == 0``.  ``continuity`` lists the cell node
    relations (cell, local node, {dof: coefficient}) that tie non-matching
    edge traces to their master edges; these are built into the space.
    """

    n_dofs: int
    fixed: dict
    mean_dof: int = -1
    mean_weights: np.ndarray = None
    pressure_offset: int = 0
    continuity: list = field(default_factory=list)

    def condensation(self):
        """``T``, ``b`` with every admissible vector written as ``T @ z + b``."""
        n = self.n_dofs
        constrained = np.zeros(n, dtype=bool)
        b = np.zeros(n)
        for d, val in self.fixed.items():
            constrained[d] = True
            b[d] = val
        if self.mean_dof >= 0:
            constrained[self.mean_dof] = True
        free = np.flatnonzero(~constrained)
        col = -np.ones(n, dtype=np.int64)
        col[free] = np.arange(len(free))
        rows, cols, vals = list(free), list(range(len(free))), [1.0] * len(free)
        if self.mean_dof >= 0:
            off = self.pressure_offset
            w = self.mean_weights
            md = self.mean_dof
            scale = w[md - off]
            for i in np.flatnonzero(w):
                d = off + i
                if d == md:
                    continue
                if col[d] >= 0:
                    rows.append(md)
                    cols.append(col[d])
                    vals.append(-w[i] / scale)
                else:
                    b[md] -= w[i] * b[d] / scale
        T = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(free)))
        return T, b, free

    def residual(self, x):
        """Largest violation of the Dirichlet and zero-mean conditions."""
        r = max((abs(x[d] - v) for d, v in self.fixed.items()), default=0.0)
        if self.mean_dof >= 0:
            npr = len(self.mean_weights)
            p = x[self.pressure_offset:self.pressure_offset + npr]
            r = max(r, abs(self.mean_weights @ p))
        return r


def pressure_mean_weights(space, nq=None):
    """Integrals of the global pressure basis functions over the domain."""
    ps = space.pressure
    w = np.zeros(ps.n_dofs)
    for c in range(space.n_cells):
        p = ps.degrees[c]
        n = nq or p + 2
        _, jxw, _ = cell_geometry(space.cx.xy[c], n)
        vals = shape_basis(p).values(tensor_gauss(n).points)
        local = vals.T @ jxw
        np.add.at(w, ps.cell_dofs[c], ps.cell_matrix[c].T @ local)
    return w


def build_constraints(space, dirichlet_tags=None, g=None, zero_mean=True):
    """Dirichlet data on the velocity plus the zero-mean pressure condition.

    ``g`` maps points (n, 2) to velocities (n, 2); ``None`` means homogeneous.
    ``dirichlet_tags`` restricts Dirichlet conditions to boundary edges with
    those tags (all boundary edges when ``None``).
    """
    vs = space.velocity
    keys = None
    mesh = getattr(space, "mesh", None)
    if dirichlet_tags is not None and mesh is not None:
        keys = {k for k, me in space.cx.masters.items()
                if me.on_boundary and mesh.boundary_tag(k) in set(dirichlet_tags)}
    bdofs = vs.boundary_dofs(keys)
    if g is None:
        vals = np.zeros((len(bdofs), 2))
    else:
        vals = np.asarray(g(vs.dof_points[bdofs]), dtype=float).reshape(-1, 2)
    fixed = {}
    nv = vs.n_dofs
    for d, (gx, gy) in zip(bdofs, vals):
        fixed[int(d)] = float(gx)
        fixed[int(d) + nv] = float(gy)
    cs = ConstraintSet(space.n_dofs, fixed, pressure_offset=2 * nv,
                       continuity=vs.relations + space.pressure.relations)
    if zero_mean:
        w = pressure_mean_weights(space)
        cs.mean_weights = w
        cs.mean_dof = 2 * nv + int(np.argmax(np.abs(w)))
    return cs


def interpolate(space, velocity=None, pressure=None):
    """Nodal interpolant; callables take points (n, 2).

    Velocity returns (n, 2) and pressure (n,).  Missing fields are zero.
    """
    x = np.zeros(space.n_dofs)
    nv = space.velocity.n_dofs
    if velocity is not None:
        vals = np.asarray(velocity(space.velocity.dof_points), dtype=float).reshape(-1, 2)
        x[:nv] = vals[:, 0]
        x[nv:2 * nv] = vals[:, 1]
    if pressure is not None:
        x[2 * nv:] = np.asarray(pressure(space.pressure.dof_points), dtype=float).ravel()
    return x


def edge_nodes_xy(cx, c, e, s):
    """Physical points at parameters ``s`` of local edge ``e`` of cell ``c``."""
    i, j = EDGE_VERTICES[e]
    a, b = cx.xy[c][i], cx.xy[c][j]
    s = np.asarray(s)[:, None]
    return (1 - s) * a + s * b
