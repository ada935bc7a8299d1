"""Assembly and direct solution of the discrete Stokes saddle-point problem."""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import bilinear_map, jacobians
from .quadrature import graded_tensor_gauss, shape_basis, tabulate, tensor_gauss
from .space import ConstraintSet, build_constraints, cell_geometry


class SolverError(RuntimeError):
    def __init__(self, message, residual=np.nan):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def physical_derivatives(grads, jinv, hess=None, d2map=None):
    """Push reference derivatives of basis functions to physical ones.

    ``grads`` (nq, nb, 2), ``jinv`` (nq, 2, 2).  With ``hess`` (nq, nb, 2, 2)
    also returns physical second derivatives, including the curvature term of
    bilinear maps via ``d2map`` = d^2 x / d xi d eta (a 2-vector).
    """
    g = np.einsum("qbi,qij->qbj", grads, jinv)
    if hess is None:
        return g
    h = hess
    if d2map is not None and np.any(d2map):
        # only the mixed reference derivative of a bilinear map is nonzero
        corr = np.einsum("qbk,k->qb", g, d2map)
        h = hess.copy()
        h[:, :, 0, 1] -= corr
        h[:, :, 1, 0] -= corr
    H = np.einsum("qia,qbij,qjc->qbac", jinv, h, jinv)
    return g, H


def mixed_map_derivative(xy):
    return xy[0] - xy[1] + xy[2] - xy[3]


class StokesSolution:
    """Discrete velocity/pressure on an :class:`~hpstokes.space.HpSpace`."""

    def __init__(self, space, x, constraints=None):
        self.space = space
        self.x = np.asarray(x, dtype=float)
        self.constraints = constraints
        self._local = {}

    @property
    def velocity(self):
        return self.x[:self.space.n_velocity]

    @property
    def pressure(self):
        return self.x[self.space.n_velocity:]

    def local(self, c):
        """Nodal values (u_x, u_y, p) on cell ``c`` (local index)."""
        if c not in self._local:
            ux, uy, pr = self.space.split(self.x)
            vs, ps = self.space.velocity, self.space.pressure
            self._local[c] = (vs.local_values(c, ux), vs.local_values(c, uy),
                              ps.local_values(c, pr))
        return self._local[c]

    def evaluate(self, c, ref, second=False):
        """Fields on cell ``c`` at reference points ``ref`` (n, 2).

        Returns a dict with ``x``, ``u`` (n, 2), ``grad_u`` (n, 2, 2),
        ``p`` (n,), ``grad_p`` (n, 2) and, if ``second``, ``lap_u`` (n, 2).
        """
        ref = np.atleast_2d(ref)
        space = self.space
        xy = space.cx.xy[c]
        p = space.degrees[c]
        ux, uy, pr = self.local(c)
        vb, pb = shape_basis(p), shape_basis(p - 1)
        jinv = np.linalg.inv(jacobians(xy, ref))
        out = {"x": bilinear_map(xy, ref)}
        U = np.column_stack([ux, uy])
        V = vb.values(ref)
        out["u"] = V @ U
        if second:
            g, H = physical_derivatives(vb.gradients(ref), jinv, vb.hessians(ref),
                                        mixed_map_derivative(xy))
            out["lap_u"] = np.einsum("qbaa,bk->qk", H, U)
        else:
            g = physical_derivatives(vb.gradients(ref), jinv)
        out["grad_u"] = np.einsum("qbj,bi->qij", g, U)
        out["p"] = pb.values(ref) @ pr
        out["grad_p"] = np.einsum("qbj,b->qj", physical_derivatives(pb.gradients(ref), jinv), pr)
        return out


@dataclass
class StokesSystem:
    """Full and condensed linear systems.

    ``matrix``/``rhs`` act on the free dofs ``z`` with ``x = T @ z + b``.
    """

    space: object
    full_matrix: sp.csr_matrix
    full_rhs: np.ndarray
    constraints: ConstraintSet
    T: sp.csr_matrix
    b: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray


def local_stokes_matrices(xy, p, nu, force):
    """Cell matrices: velocity Laplacian ``A``, divergence blocks ``Cx, Cy``
    (entries -(d_j phi_i) psi_k) and load ``F`` of shape (nb, 2)."""
    nq = p + 2
    x, jxw, jinv = cell_geometry(xy, nq)
    V, G, _ = tabulate(p, nq)
    P = tabulate(p - 1, nq)[0]
    g = physical_derivatives(G, jinv)
    A = nu * np.einsum("qbi,qci,q->bc", g, g, jxw)
    Pw = P * jxw[:, None]
    Cx = -g[:, :, 0].T @ Pw
    Cy = -g[:, :, 1].T @ Pw
    F = V.T @ (np.asarray(force(x)).reshape(-1, 2) * jxw[:, None])
    return A, Cx, Cy, F


def assemble(space, problem, constraints=None):
    """Assemble the Stokes system and condense the constraints into it."""
    for c in range(space.n_cells):
        try:
            cell_geometry(space.cx.xy[c], 2)
        except ValueError as err:
            raise ValueError(f"cell {space.cell_id(c)}: {err}") from None
    if constraints is None:
        constraints = build_constraints(space, g=problem.dirichlet)
    vs, ps = space.velocity, space.pressure
    nv = vs.n_dofs
    off_p = 2 * nv
    rows, cols, vals = [], [], []
    rhs = np.zeros(space.n_dofs)
    for c in range(space.n_cells):
        p = space.degrees[c]
        A, Cx, Cy, F = local_stokes_matrices(space.cx.xy[c], p, problem.nu, problem.force)
        Ev, dv = vs.cell_matrix[c], vs.cell_dofs[c]
        Ep, dp = ps.cell_matrix[c], ps.cell_dofs[c]
        Ag = Ev.T @ A @ Ev
        Cxg = Ev.T @ Cx @ Ep
        Cyg = Ev.T @ Cy @ Ep
        Fg = Ev.T @ F
        ii, jj = np.meshgrid(dv, dv, indexing="ij")
        iv, jp = np.meshgrid(dv, dp, indexing="ij")
        for r, cc, blk in (
            (ii, jj, Ag),
            (ii + nv, jj + nv, Ag),
            (iv, jp + off_p, Cxg),
            (iv + nv, jp + off_p, Cyg),
            (jp.T + off_p, iv.T, Cxg.T),
            (jp.T + off_p, iv.T + nv, Cyg.T),
        ):
            rows.append(r.ravel())
            cols.append(cc.ravel())
            vals.append(blk.ravel())
        np.add.at(rhs, dv, Fg[:, 0])
        np.add.at(rhs, dv + nv, Fg[:, 1])
    n = space.n_dofs
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    T, b, _ = constraints.condensation()
    K = (T.T @ M @ T).tocsc()
    r = T.T @ (rhs - M @ b)
    return StokesSystem(space, M, rhs, constraints, T, b, K, r)


def solve(system, tol=1e-10, refinement_steps=2):
    """Direct sparse solve; raises :class:`SolverError` if the residual is too large."""
    K, r = system.matrix, system.rhs
    rnorm = np.linalg.norm(r)
    if rnorm == 0.0:
        z = np.zeros(K.shape[0])
    else:
        try:
            lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as err:
            raise SolverError(f"factorization failed: {err}") from None
        z = lu.solve(r)
        # a few steps of iterative refinement; high degrees lose digits without it
        for _ in range(refinement_steps):
            z += lu.solve(r - K @ z)
        res = np.linalg.norm(K @ z - r) / rnorm
        if not np.isfinite(res) or res > tol:
            raise SolverError("direct solve did not reach the requested accuracy", res)
    x = system.T @ z + system.b
    return StokesSolution(system.space, x, system.constraints)


def solve_problem(space, problem):
    return solve(assemble(space, problem))


class EnergyError(NamedTuple):
    velocity: float
    pressure: float
    cell_velocity: np.ndarray
    cell_pressure: np.ndarray

    @property
    def total(self):
        return float(np.hypot(self.velocity, self.pressure))


def _error_rule(xy, nq, singular_points):
    for k, corner in enumerate(xy):
        for s in singular_points:
            if np.allclose(corner, s, atol=1e-13):
                return graded_tensor_gauss(nq, k)
    return tensor_gauss(nq)


def energy_error(solution, problem):
    """||grad(u - u_FE)|| and ||p - p_FE|| over the domain, with per-cell values.

    Cells touching a declared singular point use a graded composite rule.
    """
    if not problem.has_exact_solution:
        raise ValueError("energy error needs the exact velocity, gradient and pressure")
    space = solution.space
    eu = np.zeros(space.n_cells)
    ep = np.zeros(space.n_cells)
    for c in range(space.n_cells):
        xy = space.cx.xy[c]
        rule = _error_rule(xy, 2 * space.degrees[c] + 4, problem.singular_points)
        f = solution.evaluate(c, rule.points)
        jac = jacobians(xy, rule.points)
        jxw = np.linalg.det(jac) * rule.weights
        du = problem.velocity_gradient(f["x"]) - f["grad_u"]
        dp = problem.pressure(f["x"]) - f["p"]
        eu[c] = np.sqrt(np.dot(jxw, (du**2).sum(axis=(1, 2))))
        ep[c] = np.sqrt(np.dot(jxw, dp**2))
    return EnergyError(float(np.linalg.norm(eu)), float(np.linalg.norm(ep)), eu, ep)
