"""Quadrature rules and tensor-product Lagrange bases on the unit square.

Everything here lives on the reference interval [0, 1] and the reference
square [0, 1]^2.  Lagrange nodes are Gauss-Lobatto points so that the trace
of a basis on an edge only involves the nodes lying on that edge.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights; weights sum to the measure of the reference domain."""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """``n``-point Gauss-Legendre rule on [0, 1], exact up to degree 2n-1."""
    if n < 1:
        raise ValueError(f"need at least one quadrature point, got {n}")
    x, w = npleg.leggauss(n)
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def tensor_gauss(n):
    """Tensor rule with ``n`` points per direction on the unit square.

    Points are ordered with the x index running fastest.
    """
    r = gauss_legendre(n)
    x, y = np.meshgrid(r.points, r.points, indexing="xy")
    pts = np.column_stack([x.ravel(), y.ravel()])
    wts = np.outer(r.weights, r.weights).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def gauss_lobatto_nodes(p):
    """The p+1 Gauss-Lobatto points on [0, 1] (endpoints included)."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    interior = npleg.legroots(npleg.legder([0] * p + [1])) if p > 1 else np.array([])
    x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    nodes = 0.5 * (x + 1.0)
    # symmetrize so that traces read from either side of a face match to rounding
    nodes = 0.5 * (nodes + (1.0 - nodes[::-1]))
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=None)
def _lagrange_coefficients(p, derivative=0):
    # Legendre expansion coefficients of the Lagrange polynomials; column i is l_i
    if derivative:
        coef = npleg.legder(_lagrange_coefficients(p), m=derivative, axis=0) * 2.0**derivative
    else:
        x = 2.0 * gauss_lobatto_nodes(p) - 1.0
        coef = np.linalg.inv(npleg.legvander(x, p))
    coef.setflags(write=False)
    return coef


def lagrange_1d(p, x, derivative=0):
    """Values (or derivatives) of the degree-p Lagrange basis at points ``x``.

    Returns an array of shape (len(x), p+1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coef = _lagrange_coefficients(p, derivative)
    return npleg.legval(2.0 * x - 1.0, coef).T if coef.shape[0] else np.zeros((len(x), p + 1))


def _tensor(a, b):
    # a: (n, p+1) along x, b: (n, p+1) along y -> (n, (p+1)^2), x index fastest
    return (b[:, :, None] * a[:, None, :]).reshape(a.shape[0], -1)


class ShapeBasis:
    """Tensor-product Lagrange basis of degree ``p`` on the reference square.

    Basis function ``i + (p+1)*j`` is the product of the i-th 1D function in
    x and the j-th in y.
    """

    def __init__(self, p):
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        self.degree = p
        self.nodes_1d = gauss_lobatto_nodes(p)
        gx, gy = np.meshgrid(self.nodes_1d, self.nodes_1d, indexing="xy")
        self.nodes = np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def size(self):
        return (self.degree + 1) ** 2

    def values(self, pts):
        pts = np.atleast_2d(pts)
        p = self.degree
        return _tensor(lagrange_1d(p, pts[:, 0]), lagrange_1d(p, pts[:, 1]))

    def gradients(self, pts):
        """Reference gradients, shape (npts, nbasis, 2)."""
        pts = np.atleast_2d(pts)
        p = self.degree
        vx, vy = lagrange_1d(p, pts[:, 0]), lagrange_1d(p, pts[:, 1])
        dx, dy = lagrange_1d(p, pts[:, 0], 1), lagrange_1d(p, pts[:, 1], 1)
        return np.stack([_tensor(dx, vy), _tensor(vx, dy)], axis=-1)

    def hessians(self, pts):
        """Reference second derivatives, shape (npts, nbasis, 2, 2)."""
        pts = np.atleast_2d(pts)
        p = self.degree
        vx, vy = lagrange_1d(p, pts[:, 0]), lagrange_1d(p, pts[:, 1])
        dx, dy = lagrange_1d(p, pts[:, 0], 1), lagrange_1d(p, pts[:, 1], 1)
        ddx, ddy = lagrange_1d(p, pts[:, 0], 2), lagrange_1d(p, pts[:, 1], 2)
        hxx, hxy, hyy = _tensor(ddx, vy), _tensor(dx, dy), _tensor(vx, ddy)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def shape_basis(p):
    return ShapeBasis(p)


def shape_values(p, x):
    """Values and reference gradients of the degree-p basis at a single point."""
    basis = shape_basis(p)
    x = np.asarray(x, dtype=float).reshape(1, 2)
    return basis.values(x)[0], basis.gradients(x)[0]


@lru_cache(maxsize=None)
def tabulate(p, nq):
    """Basis values/gradients/hessians of degree ``p`` at the ``nq``-point tensor rule.

    Cached, read-only.
    """
    rule = tensor_gauss(nq)
    basis = shape_basis(p)
    out = (basis.values(rule.points), basis.gradients(rule.points), basis.hessians(rule.points))
    for a in out:
        a.setflags(write=False)
    return out


_CORNER_XY = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


@lru_cache(maxsize=None)
def graded_tensor_gauss(n, corner, levels=20):
    """Composite tensor rule on the unit square, geometrically graded toward a corner.

    Used for integrands with a point singularity at reference corner
    ``corner`` (0..3, counterclockwise from the origin).  Each level halves
    the square closest to the corner; the innermost square keeps a plain
    ``n``-point rule.
    """
    base = tensor_gauss(n)
    cx, cy = _CORNER_XY[corner]
    pts, wts = [], []
    size = 1.0
    for _ in range(levels):
        half = 0.5 * size
        for i, j in ((1, 0), (1, 1), (0, 1)):
            local = base.points * half + np.array([i * half, j * half])
            pts.append(local)
            wts.append(base.weights * half * half)
        size = half
    pts.append(base.points * size)
    wts.append(base.weights * size * size)
    pts = np.concatenate(pts)
    # points were built toward (0, 0); reflect to the requested corner
    pts[:, 0] = np.abs(cx - pts[:, 0])
    pts[:, 1] = np.abs(cy - pts[:, 1])
    wts = np.concatenate(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)
