import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadcurl.element import (
    DofLayout, LocalElements, compute_pi0, compute_pi1, interpolate, local_load_curl,
    local_load_grad, local_mass_pi0, local_stiffness,
)
from quadcurl.exceptions import ElementError
from quadcurl.quadrature import (
    dim_poly, eval_monomial_gradients, eval_monomials, polygon_centroid, polygon_diameter,
    polygon_quadrature,
)

from conftest import star_polygon
from oracles import eval_plain, projectors

PENTAGON = np.array([[0, 0], [1, 0], [1.3, 0.7], [0.5, 1.2], [-0.2, 0.6]], float)


def values_at(poly, coeff_matrix, pts, k):
    """Values at ``pts`` of the polynomials with scaled coefficients ``(nk, N)``."""
    X = (pts - polygon_centroid(poly)) / polygon_diameter(poly)
    return eval_monomials(X[:, 0], X[:, 1], k) @ coeff_matrix


def random_poly(seed, n):
    rng = np.random.default_rng(seed)
    centre = rng.uniform(-1, 1, 2)
    return star_polygon(rng, n, centre, rng.uniform(0.05, 2.0)), centre


def sample_points(poly, centre, m=12, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, 0.95, (m, 1))
    verts = poly[rng.integers(0, len(poly), m)]
    return centre + t * (verts - centre)


def poly_dofs(loc, func):
    return loc.interpolate(func)[0]


def test_dof_layout():
    assert DofLayout(1, 5).n_dofs == 5 and DofLayout(1, 5).moment_dof is None
    lay = DofLayout(2, 5)
    assert (lay.n_dofs, lay.n_boundary_nodes, lay.moment_dof) == (11, 10, 10)


@pytest.mark.parametrize("k", [1, 2])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 8))
def test_projectors_match_dense_oracle(k, seed, n):
    poly, centre = random_poly(seed, n)
    pi1_ref, pi0_ref = projectors(poly, centre, k)
    pts = sample_points(poly, centre)
    ref1 = np.stack([eval_plain(r, pts, k) for r in pi1_ref], axis=1)
    ref0 = np.stack([eval_plain(r, pts, k) for r in pi0_ref], axis=1)
    np.testing.assert_allclose(values_at(poly, compute_pi1(poly, k), pts, k), ref1, atol=1e-10)
    np.testing.assert_allclose(values_at(poly, compute_pi0(poly, k), pts, k), ref0, atol=1e-10)


@pytest.mark.parametrize("k", [1, 2])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 8))
def test_polynomial_reproduction(k, seed, n):
    poly, _ = random_poly(seed, n)
    loc = LocalElements(poly, k)
    eye = np.eye(dim_poly(k))
    for a in range(dim_poly(k)):
        dofs = loc.polynomial_dofs(eye[a][None])[0]
        np.testing.assert_allclose(loc.Pi1[0] @ dofs, eye[a], atol=1e-10)
        np.testing.assert_allclose(loc.Pi0[0] @ dofs, eye[a], atol=1e-10)


@pytest.mark.parametrize("k", [1, 2])
def test_interpolant_of_polynomial_matches_polynomial_dofs(k):
    loc = LocalElements(PENTAGON, k)
    c, h = loc.centroid[0], loc.diameter[0]
    coeffs = np.arange(1.0, dim_poly(k) + 1)

    def p(x):
        X = (x - c) / h
        return eval_monomials(X[..., 0], X[..., 1], k) @ coeffs

    np.testing.assert_allclose(poly_dofs(loc, p), loc.polynomial_dofs(coeffs[None])[0],
                               atol=1e-12)


def test_k1_pi0_equals_pi1():
    np.testing.assert_array_equal(compute_pi0(PENTAGON, 1), compute_pi1(PENTAGON, 1))


def test_k2_pi0_differs_from_pi1_by_a_constant(rng):
    loc = LocalElements(PENTAGON, 2)
    v = rng.normal(size=loc.layout.n_dofs)
    diff = loc.Pi0[0] @ v - loc.Pi1[0] @ v
    np.testing.assert_allclose(diff[1:], 0.0, atol=1e-14)
    # the constant restores the cell average dof
    mean = loc.H[0, 0] @ (loc.Pi0[0] @ v)
    assert mean == pytest.approx(loc.area[0] * v[-1], rel=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_stiffness_symmetric_psd_with_constant_kernel(k):
    A = local_stiffness(PENTAGON, k)
    np.testing.assert_allclose(A, A.T, atol=1e-13)
    ev = np.linalg.eigvalsh(A)
    assert ev[0] > -1e-12 and ev[1] > 1e-6
    ones = interpolate(PENTAGON, k, lambda x: np.ones(x.shape[:-1]))
    np.testing.assert_allclose(A @ ones, 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_stiffness_consistency(k, rng):
    """``a_D(p, v) = (grad p, grad Pi1 v)`` for polynomial ``p``."""
    loc = LocalElements(PENTAGON, k)
    coeffs = rng.normal(size=dim_poly(k))
    p = loc.polynomial_dofs(coeffs[None])[0]
    v = rng.normal(size=loc.layout.n_dofs)
    rule = polygon_quadrature(PENTAGON, 2 * k)
    X = (rule.points - loc.centroid[0]) / loc.diameter[0]
    g = eval_monomial_gradients(X[:, 0], X[:, 1], k) / loc.diameter[0]
    gp = np.einsum("qad,a->qd", g, coeffs)
    gv = np.einsum("qad,a->qd", g, loc.Pi1[0] @ v)
    ref = np.sum(rule.weights * np.sum(gp * gv, axis=1))
    assert p @ loc.stiffness[0] @ v == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("k", [1, 2])
def test_mass_and_mean_row(k):
    loc = LocalElements(PENTAGON, k)
    M = local_mass_pi0(PENTAGON, k)
    np.testing.assert_allclose(M, M.T, atol=1e-14)
    rule = polygon_quadrature(PENTAGON, 2 * k)

    def f(x):
        return 1 + x[..., 0] + (x[..., 0] ** 2 - x[..., 0] * x[..., 1] if k == 2 else 0)

    dofs = poly_dofs(loc, f)
    assert loc.mean_row[0] @ dofs == pytest.approx(rule.integrate(f), rel=1e-12)
    assert dofs @ M @ dofs == pytest.approx(rule.integrate(lambda x: f(x) ** 2), rel=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_loads_against_quadrature(k):
    """Load vectors equal ``(f, curl Pi1 psi)`` and ``(f, grad Pi1 psi)`` by direct quadrature."""
    loc = LocalElements(PENTAGON, k)
    f = lambda x: np.stack([np.sin(x[..., 0]) + x[..., 1], np.cos(2 * x[..., 1])], axis=-1)
    rule = polygon_quadrature(PENTAGON, 2 * k + 4)
    X = (rule.points - loc.centroid[0]) / loc.diameter[0]
    g = np.einsum("qad,an->qnd", eval_monomial_gradients(X[:, 0], X[:, 1], k),
                  loc.Pi1[0]) / loc.diameter[0]
    fv = f(rule.points)
    grad_ref = np.einsum("q,qd,qnd->n", rule.weights, fv, g)
    curl_ref = np.einsum("q,qd,qnd->n", rule.weights, fv, np.stack([g[..., 1], -g[..., 0]], -1))
    np.testing.assert_allclose(local_load_grad(PENTAGON, k, f), grad_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(local_load_curl(PENTAGON, k, f), curl_ref, rtol=1e-12, atol=1e-14)


def test_scale_invariance_of_stiffness():
    """The stiffness matrix of a scaled cell is unchanged (2D Dirichlet energy)."""
    for k in (1, 2):
        np.testing.assert_allclose(local_stiffness(1e-3 * PENTAGON, k),
                                   local_stiffness(PENTAGON, k), rtol=1e-9, atol=1e-12)


def test_batch_matches_single_cells():
    batch = np.stack([PENTAGON, PENTAGON + [2.0, 0.0], 0.5 * PENTAGON])
    loc = LocalElements(batch, 2)
    for b in range(3):
        np.testing.assert_allclose(loc.stiffness[b], local_stiffness(batch[b], 2), atol=1e-13)


def test_degenerate_cells_raise():
    with pytest.raises(ElementError):
        LocalElements(PENTAGON[::-1], 1)
    flat = np.array([[0, 0], [1, 0], [2, 0]], float)
    with pytest.raises(ElementError):
        LocalElements(flat, 1)
    with pytest.raises(ValueError):
        LocalElements(PENTAGON, 3)
