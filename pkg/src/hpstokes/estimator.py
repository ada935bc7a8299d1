"""Weighted residual error estimator for the hp Taylor-Hood Stokes discretization.

For a cell K with size h_K and degree p_K the local indicator is

    eta_K^2 = r1^2 + r2^2 + b^2

    r1^2 = h_K^2/p_K^2 * || (I f + nu lap u_h - grad p_h) Phi_K^(a/2) ||_K^2
    r2^2 = || div(u_h) Phi_K^(a/2) ||_K^2
    b^2  = sum over interior faces f of K of
           h_f/(2 p_f) * || [nu du_h/dn] Phi_f^(a/2) ||_f^2

where ``I f`` is the local L2 projection of the force onto Q_{p_K},
``Phi_K`` and ``Phi_f`` are distance-to-boundary weights of the cell and of
the two-cell face patch, and ``a`` in [0, 1] selects the family member.
"""
from dataclasses import dataclass

import numpy as np

from .mesh import EDGE_VERTICES, bilinear_map, diameter, edge_reference_points, jacobians
from .quadrature import gauss_legendre, shape_basis, tensor_gauss


def _segment_distance(x, a, b):
    """Distance from points ``x`` (n, 2) to the segment [a, b]."""
    d = b - a
    L2 = float(d @ d)
    t = np.clip(((x - a) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(x))
    return np.linalg.norm(x - (a + t[:, None] * d), axis=1)


def _cell_edges(xy):
    return [(xy[i], xy[j]) for i, j in EDGE_VERTICES]


def weight_cell(xy, x):
    """dist(x, boundary of K) / diam(K) for points ``x`` in the cell with corners ``xy``."""
    x = np.atleast_2d(x)
    xy = np.asarray(xy, dtype=float)
    dist = np.min([_segment_distance(x, a, b) for a, b in _cell_edges(xy)], axis=0)
    return dist / diameter(xy)


def face_patch_boundary(xy1, xy2, p, q, tol=1e-12):
    """Boundary segments of the union of two cells sharing the segment [p, q]."""
    pieces = []
    d = q - p
    for xy in (xy1, xy2):
        for a, b in _cell_edges(np.asarray(xy, dtype=float)):
            e = b - a
            L2 = float(e @ e)
            cross = abs(e[0] * d[1] - e[1] * d[0]) + abs(e[0] * (p - a)[1] - e[1] * (p - a)[0])
            if cross > tol * max(1.0, L2):
                pieces.append((a, b))
                continue
            tp, tq = sorted((float((p - a) @ e) / L2, float((q - a) @ e) / L2))
            if tq <= tol or tp >= 1 - tol:
                pieces.append((a, b))
                continue
            if tp > tol:
                pieces.append((a, a + tp * e))
            if tq < 1 - tol:
                pieces.append((a + tq * e, b))
    return pieces


def _on_edge(xy, p, q, tol=1e-12):
    for a, b in _cell_edges(np.asarray(xy, dtype=float)):
        scale = np.linalg.norm(b - a)
        if max(_segment_distance(np.array([p, q]), a, b)) <= tol * scale:
            return True
    return False


def weight_face_patch(xy1, xy2, p, q, x):
    """dist(x, boundary of the face patch) / diam(face patch) for ``x`` on face [p, q].

    Raises
    ------
    ValueError
        If [p, q] does not lie on an edge of both cells, e.g. a boundary face.
    """
    x = np.atleast_2d(x)
    p, q = np.asarray(p, float), np.asarray(q, float)
    same = np.shape(xy1) == np.shape(xy2) and np.allclose(xy1, xy2)
    if same or not (_on_edge(xy1, p, q) and _on_edge(xy2, p, q)):
        raise ValueError("face is not shared by the two cells")
    segs = face_patch_boundary(xy1, xy2, p, q)
    dist = np.min([_segment_distance(x, a, b) for a, b in segs], axis=0)
    return dist / diameter(np.vstack([xy1, xy2]))


def project_rhs(xy, p, force):
    """Coefficients (nb, 2) of the L2 projection of ``force`` onto Q_p on the cell."""
    nq = p + 3
    rule = tensor_gauss(nq)
    jac = jacobians(xy, rule.points)
    jxw = np.linalg.det(jac) * rule.weights
    V = shape_basis(p).values(rule.points)
    M = V.T @ (V * jxw[:, None])
    f = np.asarray(force(bilinear_map(xy, rule.points))).reshape(-1, 2)
    return np.linalg.solve(M, V.T @ (f * jxw[:, None]))


@dataclass
class EstimatorReport:
    """Per-cell estimator contributions; ``cells`` are labels of the space's complex."""

    cells: list
    r1: np.ndarray
    r2: np.ndarray
    b: np.ndarray
    osc: np.ndarray
    alpha: float

    @property
    def eta_cells(self):
        return np.sqrt(self.r1**2 + self.r2**2 + self.b**2)

    @property
    def eta(self):
        return float(np.sqrt(np.sum(self.r1**2 + self.r2**2 + self.b**2)))

    @property
    def oscillation(self):
        return float(np.linalg.norm(self.osc))


def cell_terms(solution, problem, c, alpha=0.0):
    """``(r1, r2, osc)`` for cell ``c`` (local index of the solution's space)."""
    space = solution.space
    xy = space.cx.xy[c]
    p = space.degrees[c]
    h = diameter(xy)
    rule = tensor_gauss(2 * p + 4)
    f = solution.evaluate(c, rule.points, second=True)
    jxw = np.linalg.det(jacobians(xy, rule.points)) * rule.weights
    weight = weight_cell(xy, f["x"]) ** alpha if alpha else 1.0
    coef = project_rhs(xy, p, problem.force)
    If = shape_basis(p).values(rule.points) @ coef
    force = np.asarray(problem.force(f["x"])).reshape(-1, 2)
    res = If + problem.nu * f["lap_u"] - f["grad_p"]
    div = f["grad_u"][:, 0, 0] + f["grad_u"][:, 1, 1]
    r1 = h / p * np.sqrt(np.sum(jxw * weight * (res**2).sum(axis=1)))
    r2 = np.sqrt(np.sum(jxw * weight * div**2))
    osc = h / p * np.sqrt(np.sum(jxw * ((force - If) ** 2).sum(axis=1)))
    return float(r1), float(r2), float(osc)


def _edge_param(xy, e, pts):
    i, j = EDGE_VERTICES[e]
    a, b = xy[i], xy[j]
    d = b - a
    return ((pts - a) @ d) / (d @ d)


def _outward_normal(xy, e):
    i, j = EDGE_VERTICES[e]
    t = xy[j] - xy[i]
    n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
    if n @ (0.5 * (xy[i] + xy[j]) - xy.mean(axis=0)) < 0:
        n = -n
    return n


def face_jumps(solution, alpha=0.0, nu=1.0):
    """Squared weighted jump contributions ``(c, c2, h_f/p_f * ||jump||^2)`` per interior segment.

    Each value is to be split evenly between the two adjacent cells.
    """
    space = solution.space
    cx = space.cx
    out = []
    for c, e, s0, s1, c2, e2 in cx.interior_segments():
        xy, xy2 = cx.xy[c], cx.xy[c2]
        i, j = EDGE_VERTICES[e]
        pa = (1 - s0) * xy[i] + s0 * xy[j]
        pb = (1 - s1) * xy[i] + s1 * xy[j]
        pf = max(space.degrees[c], space.degrees[c2])
        rule = gauss_legendre(pf + 3)
        pts = (1 - rule.points)[:, None] * pa + rule.points[:, None] * pb
        hf = float(np.linalg.norm(pb - pa))
        g1 = solution.evaluate(c, edge_reference_points(e, _edge_param(xy, e, pts)))["grad_u"]
        g2 = solution.evaluate(c2, edge_reference_points(e2, _edge_param(xy2, e2, pts)))["grad_u"]
        n = _outward_normal(xy, e)
        jump = nu * (g1 - g2) @ n
        w = weight_face_patch(xy, xy2, pa, pb, pts) ** alpha if alpha else 1.0
        norm2 = hf * np.sum(rule.weights * w * (jump**2).sum(axis=1))
        out.append((c, c2, hf / pf * norm2))
    return out


def face_term(solution, c, alpha=0.0, nu=1.0, jumps=None):
    """The face contribution ``b`` of cell ``c``."""
    jumps = face_jumps(solution, alpha, nu) if jumps is None else jumps
    return float(np.sqrt(sum(0.5 * v for a, b, v in jumps if c in (a, b))))


def estimate(solution, problem, alpha=0.0):
    """Evaluate all local indicators and collect them in an :class:`EstimatorReport`."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    space = solution.space
    n = space.n_cells
    r1, r2, osc = np.zeros(n), np.zeros(n), np.zeros(n)
    for c in range(n):
        r1[c], r2[c], osc[c] = cell_terms(solution, problem, c, alpha)
    b2 = np.zeros(n)
    for c, c2, v in face_jumps(solution, alpha, problem.nu):
        b2[c] += 0.5 * v
        b2[c2] += 0.5 * v
    return EstimatorReport(list(space.cx.labels), r1, r2, np.sqrt(b2), osc, alpha)


def effectivity(report, e_u, e_p):
    """Estimator over the combined energy error."""
    err = float(np.hypot(e_u, e_p))
    if err == 0.0:
        raise ZeroDivisionError("effectivity index undefined for zero error")
    eta = report.eta if isinstance(report, EstimatorReport) else float(report)
    return eta / err
