"""h-versus-p decisions and weighted Doerfler marking.

For every cell the residual of the current solution is represented on the
cell patch (the cell plus its edge neighbors) in two enriched local spaces:
the patch split 1->4 at unchanged degrees (pattern 1, h-refinement) and the
patch with all degrees raised by one (pattern 2, p-refinement).  The norm of
that Riesz representative relative to the cell's estimator is the pattern's
convergence indicator, and dividing by the local space dimension gives the
expected error reduction per unit of work.
"""
import logging
import math
import warnings
from collections import ChainMap
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .mesh import CHILD_OFFSETS, CellComplex, check_regularity
from .quadrature import shape_basis, tabulate, tensor_gauss
from .space import HpSpace, cell_geometry, pressure_mean_weights
from .stokes import physical_derivatives

log = logging.getLogger(__name__)

NO_REFINE, H_REFINE, P_REFINE = 0, 1, 2
PATTERNS = (H_REFINE, P_REFINE)


@dataclass
class RitzResult:
    velocity_norm: float  # ||grad w_u|| on the patch
    pressure_norm: float  # ||w_p|| on the patch
    workload: int
    min_eigenvalue: float = math.nan

    @property
    def norm(self):
        return math.hypot(self.velocity_norm, self.pressure_norm)


def _next_vertex_id(cx):
    if not hasattr(cx, "_next_vid"):
        ids = list(cx.coords) + list(cx.midpoints.values())
        cx._next_vid = max(ids) + 1
    return cx._next_vid


def patch_complex(cx, degrees, c, pattern):
    """Local complex on the patch of cell ``c`` refined by ``pattern``.

    Returns ``(complex, degrees, sources)`` where ``sources[i] = (cell, scale,
    offset)`` maps local reference points to the source cell's reference
    coordinates as ``scale * xi + offset``.
    """
    patch = [c] + cx.neighbors(c)
    if pattern in (NO_REFINE, P_REFINE):
        # the unrefined patch space is only used to check Galerkin orthogonality
        local = CellComplex(cx.vertex_ids[patch], cx.xy[patch], cx.midpoints, cx.parent_edges)
        step = 1 if pattern == P_REFINE else 0
        return local, [degrees[k] + step for k in patch], [(k, 1.0, (0.0, 0.0)) for k in patch]
    if pattern != H_REFINE:
        raise ValueError(f"unknown refinement pattern {pattern}")
    mids = ChainMap({}, cx.midpoints)
    parents = ChainMap({}, cx.parent_edges)
    coords = {}
    counter = [_next_vertex_id(cx)]

    def point(v):
        return coords[v] if v in coords else cx.coords[v]

    def split(a, b):
        key = (a, b) if a < b else (b, a)
        m = mids.get(key)
        if m is None:
            m = counter[0]
            counter[0] += 1
            mids[key] = m
            parents[(a, m) if a < m else (m, a)] = key
            parents[(m, b) if m < b else (b, m)] = key
        if m not in coords and m not in cx.coords:
            coords[m] = 0.5 * (point(a) + point(b))
        return m

    vids, xys, degs, sources = [], [], [], []
    for k in patch:
        v0, v1, v2, v3 = (int(v) for v in cx.vertex_ids[k])
        m01, m12, m32, m03 = split(v0, v1), split(v1, v2), split(v3, v2), split(v0, v3)
        ctr = counter[0]
        counter[0] += 1
        coords[ctr] = cx.xy[k].mean(axis=0)
        quads = [(v0, m01, ctr, m03), (m01, v1, m12, ctr), (ctr, m12, v2, m32), (m03, ctr, m32, v3)]
        for q, off in zip(quads, CHILD_OFFSETS):
            vids.append(q)
            xys.append([point(v) for v in q])
            degs.append(degrees[k])
            sources.append((k, 0.5, (0.5 * off[0], 0.5 * off[1])))
    local = CellComplex(vids, np.array(xys), mids, parents)
    return local, degs, sources


def local_ritz(solution, problem, c, pattern, check_spd=False):
    """Riesz representative of the residual on the enriched patch space of cell ``c``.

    Velocity: zero trace on the patch boundary, inner product (grad, grad).
    Pressure: zero mean on the patch, L2 inner product.
    """
    space = solution.space
    cx, degs, sources = patch_complex(space.cx, space.degrees, c, pattern)
    local = HpSpace(cx, degs)
    vs, ps = local.velocity, local.pressure
    nv, npr = vs.n_dofs, ps.n_dofs
    S = np.zeros((nv, nv))
    rv = np.zeros((nv, 2))
    M = np.zeros((npr, npr))
    rq = np.zeros(npr)
    nu = problem.nu
    for i, (src, scale, off) in enumerate(sources):
        p = degs[i]
        nq = p + 2
        x, jxw, jinv = cell_geometry(cx.xy[i], nq)
        V, G, _ = tabulate(p, nq)
        P = tabulate(p - 1, nq)[0]
        g = physical_derivatives(G, jinv)
        ref = scale * tensor_gauss(nq).points + np.asarray(off)
        fe = solution.evaluate(src, ref)
        force = np.asarray(problem.force(x)).reshape(-1, 2)
        Ev, dv = vs.cell_matrix[i], vs.cell_dofs[i]
        Ep, dp = ps.cell_matrix[i], ps.cell_dofs[i]
        A = np.einsum("qbi,qci,q->bc", g, g, jxw)
        S[np.ix_(dv, dv)] += Ev.T @ A @ Ev
        # f.v - nu grad v : grad u_h + div(v) p_h
        loc = V.T @ (force * jxw[:, None])
        loc -= nu * np.einsum("qbj,qkj,q->bk", g, fe["grad_u"], jxw)
        loc += np.einsum("qbk,q->bk", g, fe["p"] * jxw)
        rv[dv] += Ev.T @ loc
        Pw = P * jxw[:, None]
        M[np.ix_(dp, dp)] += Ep.T @ (P.T @ Pw) @ Ep
        div = fe["grad_u"][:, 0, 0] + fe["grad_u"][:, 1, 1]
        rq[dp] += Ep.T @ (P.T @ (div * jxw))
    bnd = vs.boundary_dofs()
    free = np.setdiff1d(np.arange(nv), bnd)
    # zero-mean pressure by eliminating the dof with the largest mean weight
    w = pressure_mean_weights(local)
    md = int(np.argmax(np.abs(w)))
    keep = np.delete(np.arange(npr), md)
    Tp = np.zeros((npr, npr - 1))
    Tp[keep, np.arange(npr - 1)] = 1.0
    Tp[md, :] = -w[keep] / w[md]
    Sf = S[np.ix_(free, free)]
    Mf = Tp.T @ M @ Tp
    vel2 = 0.0
    if len(free):
        fac = sla.cho_factor(Sf)
        wu = sla.cho_solve(fac, rv[free])
        vel2 = float(np.sum(wu * rv[free]))
    pre2 = 0.0
    if npr > 1:
        rp = Tp.T @ rq
        wp = sla.cho_solve(sla.cho_factor(Mf), rp)
        pre2 = float(wp @ rp)
    lam = math.nan
    if check_spd:
        blocks = [np.linalg.eigvalsh(B).min() for B in (Sf, Mf) if B.size]
        lam = float(min(blocks))
    return RitzResult(math.sqrt(max(vel2, 0.0)), math.sqrt(max(pre2, 0.0)),
                      2 * len(free) + npr - 1, lam)


def workload(space, c, pattern):
    """Dimension of the constrained local space that :func:`local_ritz` solves in."""
    cx, degs, _ = patch_complex(space.cx, space.degrees, c, pattern)
    local = HpSpace(cx, degs)
    nfree = local.velocity.n_dofs - len(local.velocity.boundary_dofs())
    return 2 * nfree + local.pressure.n_dofs - 1


def convergence_indicator(ritz, eta_cell):
    """k = ||(w_u, w_p)|| / eta_K, or 0 for an already resolved cell."""
    norm = ritz.norm if isinstance(ritz, RitzResult) else float(ritz)
    return 0.0 if eta_cell == 0.0 else norm / eta_cell


def choose_pattern(k, work):
    """Pattern maximizing k_j / work_j; ties go to p-refinement."""
    ratios = {j: (k[i] / work[i] if work[i] > 0 and np.isfinite(k[i]) else -np.inf)
              for i, j in enumerate(PATTERNS)}
    if all(r == -np.inf for r in ratios.values()):
        raise ValueError("no finite reduction-per-work ratio")
    return H_REFINE if ratios[H_REFINE] > ratios[P_REFINE] else P_REFINE


def doerfler_mark(eta_cells, k, theta):
    """Greedy marking of the fewest cells with sum k^2 eta_K^2 >= theta^2 eta^2.

    Returns ``(marked, fallback)``: indices in the order they were added, and
    whether the whole mesh had to be marked because the inequality cannot be
    met.
    """
    eta_cells = np.asarray(eta_cells, dtype=float)
    k = np.asarray(k, dtype=float)
    if eta_cells.size == 0:
        raise ValueError("cannot mark an empty mesh")
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    target = theta**2 * np.sum(eta_cells**2)
    if target == 0.0:
        return [], False  # exact solution, nothing to refine
    gain = k**2 * eta_cells**2
    # stable sort on the negated gain keeps ties in cell order
    order = np.argsort(-gain, kind="stable")
    acc = np.cumsum(gain[order])
    hit = np.flatnonzero(acc >= target)
    if hit.size == 0:
        warnings.warn(
            f"marking inequality unattainable (captured {acc[-1]:.3e} of required {target:.3e});"
            " marking all cells",
            RuntimeWarning,
            stacklevel=2,
        )
        return [int(i) for i in order], True
    return [int(i) for i in order[: hit[0] + 1]], False


@dataclass
class RefinementPlan:
    """Per-cell indicators and the resulting decisions; arrays follow ``cells``."""

    cells: list
    eta: np.ndarray
    k: np.ndarray  # (n, 2) indicators for patterns 1 and 2 (nan if not computed)
    work: np.ndarray  # (n, 2)
    pattern: np.ndarray  # chosen pattern per cell
    marked: list  # indices into ``cells``, in marking order
    theta: float
    fallback: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def k_chosen(self):
        return self.k[np.arange(len(self.cells)), self.pattern - 1]

    def marked_cells(self, pattern=None):
        return [self.cells[i] for i in self.marked if pattern is None or self.pattern[i] == pattern]

    @property
    def n_h(self):
        return len(self.marked_cells(H_REFINE))

    @property
    def n_p(self):
        return len(self.marked_cells(P_REFINE))

    def marking_sums(self, marked=None):
        marked = self.marked if marked is None else marked
        gain = self.k_chosen**2 * self.eta**2
        return float(np.sum(gain[marked])), float(self.theta**2 * np.sum(self.eta**2))


def build_plan(solution, problem, report, theta, patterns=PATTERNS):
    """Indicators, per-cell pattern choice and marking for one adaptive cycle.

    ``patterns`` restricts the candidates; a single entry forces that pattern.
    """
    space = solution.space
    n = space.n_cells
    eta = report.eta_cells
    k = np.full((n, 2), np.nan)
    work = np.full((n, 2), np.nan)
    chosen = np.zeros(n, dtype=int)
    for c in range(n):
        for j in patterns:
            r = local_ritz(solution, problem, c, j)
            k[c, j - 1] = convergence_indicator(r, eta[c])
            work[c, j - 1] = r.workload
        if len(patterns) == 1:
            chosen[c] = patterns[0]
        else:
            chosen[c] = choose_pattern(k[c], work[c])
    plan = RefinementPlan(list(space.cx.labels), eta, k, work, chosen, [], theta)
    marked, fallback = doerfler_mark(eta, plan.k_chosen, theta)
    plan.marked = marked
    plan.fallback = fallback
    return plan


def smooth_degrees(mesh, degrees, gamma_p=2.0):
    """Raise degrees until neighboring degrees differ by at most a factor gamma_p."""
    degrees = dict(degrees)
    while True:
        ok, bad = check_regularity(mesh, degrees, gamma_h=math.inf, gamma_p=gamma_p)
        if ok:
            return degrees
        for a, b, _ in bad:
            lo, hi = (a, b) if degrees[a] < degrees[b] else (b, a)
            degrees[lo] = max(degrees[lo], math.ceil(degrees[hi] / gamma_p))


def apply_plan(mesh, degrees, plan, gamma_p=2.0):
    """Execute a plan: raise degrees of p-marked cells, split h-marked cells.

    The mesh is refined in place and returned with the new degree map.
    Children inherit their parent's degree.
    """
    degrees = dict(degrees)
    for c in plan.marked_cells(P_REFINE):
        degrees[c] += 1
    before = set(mesh.active_cells())
    mesh.refine(plan.marked_cells(H_REFINE))
    for c in mesh.active_cells():
        if c not in before:
            degrees[c] = degrees[mesh.parent[c]]
    active = set(mesh.active_cells())
    degrees = {c: p for c, p in degrees.items() if c in active}
    return mesh, smooth_degrees(mesh, degrees, gamma_p)
