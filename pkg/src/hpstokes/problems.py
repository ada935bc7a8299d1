"""Benchmark Stokes problems on the L-shaped domain with known solutions.

All callables take an array of points of shape (n, 2).  Velocity gradients
are returned as (n, 2, 2) arrays with ``grad[:, i, j] = d u_i / d x_j``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .quadrature import gauss_legendre

L_SHAPE_AREA = 3.0


def _zero_force(pts):
    return np.zeros((len(pts), 2))


@dataclass
class StokesProblem:
    """Data of a steady Stokes problem, optionally with its exact solution."""

    nu: float = 1.0
    force: Callable = _zero_force
    dirichlet: Optional[Callable] = None
    velocity: Optional[Callable] = None
    velocity_gradient: Optional[Callable] = None
    pressure: Optional[Callable] = None
    # points where the exact solution is singular; error quadrature is graded there
    singular_points: tuple = ()
    name: str = "custom"

    @property
    def has_exact_solution(self):
        return None not in (self.velocity, self.velocity_gradient, self.pressure)

    def scaled(self, factor):
        """Same problem with force, boundary data and solution multiplied by ``factor``."""

        def sc(fn):
            return None if fn is None else (lambda pts: factor * fn(pts))

        return StokesProblem(
            nu=self.nu,
            force=sc(self.force),
            dirichlet=sc(self.dirichlet),
            velocity=sc(self.velocity),
            velocity_gradient=sc(self.velocity_gradient),
            pressure=sc(self.pressure),
            singular_points=self.singular_points,
            name=self.name,
        )


@dataclass
class Benchmark(StokesProblem):
    n_initial: int = 12
    initial_degree: int = 2
    theta: float = 0.75
    extras: dict = field(default_factory=dict)


def example1():
    """Smooth solution on the L-shape; the forcing vanishes identically."""

    def velocity(pts):
        x, y = pts[:, 0], pts[:, 1]
        ex = np.exp(x)
        return np.column_stack([-ex * (y * np.cos(y) + np.sin(y)), ex * y * np.sin(y)])

    def gradient(pts):
        x, y = pts[:, 0], pts[:, 1]
        ex, c, s = np.exp(x), np.cos(y), np.sin(y)
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = -ex * (y * c + s)
        g[:, 0, 1] = -ex * (2 * c - y * s)
        g[:, 1, 0] = ex * y * s
        g[:, 1, 1] = ex * (s + y * c)
        return g

    shift = 2.0 / 3.0 * (1.0 - np.e) * (np.cos(1.0) - 1.0)

    def pressure(pts):
        return 2.0 * np.exp(pts[:, 0]) * np.sin(pts[:, 1]) - shift

    return Benchmark(
        nu=1.0,
        dirichlet=velocity,
        velocity=velocity,
        velocity_gradient=gradient,
        pressure=pressure,
        name="smooth-l",
        n_initial=12,
        initial_degree=3,
        theta=0.75,
    )


def solve_exponent(omega=1.5 * np.pi, tol=1e-13):
    """Smallest root in (0, 1) of sin(a*omega) + a*sin(omega), by bisection."""

    def fn(a):
        return np.sin(a * omega) + a * np.sin(omega)

    lo, hi = 1e-8, 1.0
    flo, fhi = fn(lo), fn(hi)
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"no sign change of the exponent equation on (0, 1) for omega={omega}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _CornerFunctions:
    """Angular profile psi and its derivatives for the re-entrant corner flow."""

    def __init__(self, alpha, omega):
        self.a = alpha
        self.A = np.cos(alpha * omega)

    def derivatives(self, phi):
        a, A = self.a, self.A
        bp, bm = 1.0 + a, 1.0 - a
        sp, cp = np.sin(bp * phi), np.cos(bp * phi)
        sm, cm = np.sin(bm * phi), np.cos(bm * phi)
        psi = A * sp / bp - cp - A * sm / bm + cm
        d1 = A * cp + bp * sp - A * cm - bm * sm
        d2 = -A * bp * sp + bp**2 * cp + A * bm * sm - bm**2 * cm
        d3 = -A * bp**2 * cp - bp**3 * sp + A * bm**2 * cm + bm**3 * sm
        return psi, d1, d2, d3


def _polar(pts):
    x, y = pts[:, 0], pts[:, 1]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    # angle measured counterclockwise from the edge along the positive x axis,
    # so the domain is 0 <= phi <= 3*pi/2 and the cut runs through the excluded quadrant
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    return r, phi


def example2():
    """Corner singularity at the re-entrant corner of the L-shape.

    The forcing vanishes; the pressure behaves like r^(alpha-1) and is
    shifted by its exact mean over the domain.
    """
    omega = 1.5 * np.pi
    alpha = solve_exponent(omega)
    fns = _CornerFunctions(alpha, omega)

    def profile(phi):
        psi, d1, d2, d3 = fns.derivatives(phi)
        c, s = np.cos(phi), np.sin(phi)
        u1 = c * d1 + (1 + alpha) * s * psi
        u2 = s * d1 - (1 + alpha) * c * psi
        du1 = -s * d1 + c * d2 + (1 + alpha) * (c * psi + s * d1)
        du2 = c * d1 + s * d2 + (1 + alpha) * (s * psi - c * d1)
        prs = -((1 + alpha) ** 2 * d1 + d3) / (1 - alpha)
        return u1, u2, du1, du2, prs

    def velocity(pts):
        r, phi = _polar(pts)
        u1, u2, *_ = profile(phi)
        ra = r**alpha
        return np.column_stack([ra * u1, ra * u2])

    def gradient(pts):
        r, phi = _polar(pts)
        if np.any(r == 0):
            raise ValueError("velocity gradient is singular at the re-entrant corner")
        u1, u2, du1, du2, _ = profile(phi)
        c, s = np.cos(phi), np.sin(phi)
        rr = r ** (alpha - 1)
        g = np.empty((len(pts), 2, 2))
        for i, (U, dU) in enumerate(((u1, du1), (u2, du2))):
            # d/dr = alpha r^(alpha-1) U, (1/r) d/dphi = r^(alpha-1) U'
            g[:, i, 0] = rr * (c * alpha * U - s * dU)
            g[:, i, 1] = rr * (s * alpha * U + c * dU)
        return g

    def raw_pressure(pts):
        r, phi = _polar(pts)
        if np.any(r == 0):
            raise ValueError("pressure is singular at the re-entrant corner")
        return r ** (alpha - 1) * profile(phi)[4]

    # exact mean: the radial integral is closed form, the angular one is smooth
    # between the corners of the square (-1,1)^2
    rule = gauss_legendre(40)
    total = 0.0
    quarter = 0.25 * np.pi
    for k in range(6):
        phi = quarter * (k + rule.points)
        radius = 1.0 / np.maximum(np.abs(np.cos(phi)), np.abs(np.sin(phi)))
        vals = profile(phi)[4] * radius ** (alpha + 1) / (alpha + 1)
        total += quarter * np.dot(rule.weights, vals)
    mean = total / L_SHAPE_AREA

    def pressure(pts):
        return raw_pressure(pts) - mean

    return Benchmark(
        nu=1.0,
        dirichlet=velocity,
        velocity=velocity,
        velocity_gradient=gradient,
        pressure=pressure,
        singular_points=((0.0, 0.0),),
        name="singular-l",
        n_initial=12,
        initial_degree=2,
        theta=0.85,
        extras={"alpha": alpha, "omega": omega, "pressure_mean": mean},
    )


BENCHMARKS = {"smooth-l": example1, "singular-l": example2}
