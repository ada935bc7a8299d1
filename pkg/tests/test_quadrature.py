import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpstokes.quadrature import (
    gauss_legendre,
    gauss_lobatto_nodes,
    graded_tensor_gauss,
    lagrange_1d,
    shape_basis,
    shape_values,
    tensor_gauss,
)


def test_gauss_one_point():
    r = gauss_legendre(1)
    assert r.points == pytest.approx([0.5], abs=1e-15)
    assert r.weights == pytest.approx([1.0], abs=1e-15)


def test_gauss_two_points_closed_form():
    r = gauss_legendre(2)
    d = np.sqrt(3.0) / 6.0
    assert r.points == pytest.approx([0.5 - d, 0.5 + d], abs=1e-15)
    assert r.weights == pytest.approx([0.5, 0.5], abs=1e-15)


def test_gauss_rejects_zero():
    with pytest.raises(ValueError):
        gauss_legendre(0)


@pytest.mark.parametrize("n", range(1, 25))
def test_gauss_moments(n):
    r = gauss_legendre(n)
    assert np.all(r.weights > 0)
    for k in range(2 * n):
        assert abs(np.dot(r.weights, r.points**k) - 1.0 / (k + 1)) < 1e-13


@pytest.mark.parametrize("n", [1, 3, 6])
def test_tensor_rule_monomials(n):
    r = tensor_gauss(n)
    x, y = r.points[:, 0], r.points[:, 1]
    for a in range(2 * n):
        for b in range(2 * n):
            exact = 1.0 / ((a + 1) * (b + 1))
            assert abs(np.dot(r.weights, x**a * y**b) - exact) <= 1e-12 * exact


def test_lobatto_nodes_symmetric_and_sorted():
    for p in range(1, 12):
        x = gauss_lobatto_nodes(p)
        assert x[0] == 0.0 and x[-1] == 1.0
        assert np.all(np.diff(x) > 0)
        assert np.abs(x - (1.0 - x[::-1])).max() < 1e-15


@pytest.mark.parametrize("p", range(1, 9))
def test_kronecker_at_nodes(p):
    basis = shape_basis(p)
    assert np.abs(basis.values(basis.nodes) - np.eye(basis.size)).max() < 1e-12


def test_bilinear_center_values():
    vals, _ = shape_values(1, (0.5, 0.5))
    assert vals == pytest.approx([0.25] * 4, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 10), x=st.floats(0, 1), y=st.floats(0, 1))
def test_partition_of_unity(p, x, y):
    vals, grads = shape_values(p, (x, y))
    assert abs(vals.sum() - 1.0) < 1e-13 * p
    assert np.abs(grads.sum(axis=0)).max() < 1e-10 * p**2


@pytest.mark.parametrize("p", range(1, 7))
def test_gradients_match_finite_differences(p):
    rng = np.random.default_rng(p)
    basis = shape_basis(p)
    pts = rng.uniform(0.05, 0.95, size=(20, 2))
    h = 1e-6
    fd = np.stack([(basis.values(pts + [h, 0]) - basis.values(pts - [h, 0])) / (2 * h),
                   (basis.values(pts + [0, h]) - basis.values(pts - [0, h])) / (2 * h)], axis=-1)
    assert np.abs(basis.gradients(pts) - fd).max() < 1e-6


@pytest.mark.parametrize("p", [2, 4, 6])
def test_hessians_match_finite_differences(p):
    rng = np.random.default_rng(10 + p)
    basis = shape_basis(p)
    pts = rng.uniform(0.05, 0.95, size=(10, 2))
    h = 1e-5
    for i, step in enumerate(([h, 0], [0, h])):
        fd = (basis.gradients(pts + step) - basis.gradients(pts - step)) / (2 * h)
        assert np.abs(basis.hessians(pts)[:, :, :, i] - fd).max() < 1e-4 * p**2


def test_lagrange_derivative_of_linear():
    d = lagrange_1d(1, [0.3], derivative=1)
    assert d[0] == pytest.approx([-1.0, 1.0])


@pytest.mark.parametrize("corner", range(4))
def test_graded_rule_integrates_singular_function(corner):
    rule = graded_tensor_gauss(8, corner)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    c = np.array([(0, 0), (1, 0), (1, 1), (0, 1)][corner], dtype=float)
    r = np.linalg.norm(rule.points - c, axis=1)
    # int over the unit square of r^-1/2 around a corner, by polar integration
    reference = tensor_gauss(40)
    th = 0.25 * np.pi * reference.points[:, 0]
    # split the square along the diagonal: both halves give the same integral
    rmax = 1.0 / np.cos(th)
    exact = 2 * np.dot(reference.weights, 0.25 * np.pi * (rmax**1.5 / 1.5))
    assert np.dot(rule.weights, r**-0.5) == pytest.approx(exact, rel=1e-6)
