import numpy as np
import pytest

from quadcurl.assembly import VirtualElementSpace
from quadcurl.exceptions import PipelineError
from quadcurl.hodge import (
    HodgeSolution, gamma_pos_blocks, reconstruct_u, solve, solve_gamma_pos, solve_harmonics,
)
from quadcurl.mesh import nested_family, structured_voronoi
from quadcurl.metrics import l2_error_u
from quadcurl.problems import SmoothSquareSolution, get_rhs, piecewise_rhs, smooth_rhs

from conftest import cached_mesh
from oracles import fem_harmonic_coefficients

# gradient-part coefficients from a P1 finite element model on uniform grids
# (n = 320, 640), extrapolated with the observed ratio of successive differences
FEM_C_ONE_HOLE = np.array([-0.15175])
FEM_C_TWO_HOLES = np.array([-0.09362, -0.13752])
ONE_HOLE = [(0.25, 0.75, 0.25, 0.75)]
TWO_HOLES = [(0.15, 0.45, 0.15, 0.45), (0.55, 0.85, 0.55, 0.85)]


@pytest.mark.parametrize("k", [1, 2])
def test_simply_connected_has_no_harmonics(k):
    sol = solve(structured_voronoi(6), k, SmoothSquareSolution())
    assert sol.harmonics == [] and sol.coeffs.shape == (0,)
    assert isinstance(sol, HodgeSolution) and sol.zeta is None


@pytest.mark.parametrize("domain,m", [("square_hole", 1), ("two_holes", 2)])
def test_harmonic_count_and_boundary_values(domain, m):
    S = VirtualElementSpace(cached_mesh(domain, 40), 2)
    H = solve_harmonics(S)
    assert len(H) == m
    for j, h in enumerate(H, start=1):
        np.testing.assert_allclose(h.dofs[S.boundary_dofs(j)], 1.0)
        np.testing.assert_allclose(h.dofs[S.boundary_dofs(0)], 0.0)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("beta", [0.0, 2.0])
def test_gamma0_invariants(k, beta):
    sol = solve(cached_mesh("gamma", 30), k, piecewise_rhs, beta=beta)
    assert sol.rho.mean() == pytest.approx(0.0, abs=1e-12)
    assert sol.xi.mean() == pytest.approx(0.0, abs=1e-12)
    assert sol.xi1.mean() > 0
    assert sol.phi.mean() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_gamma_positive_invariants(k):
    S = VirtualElementSpace(cached_mesh("square_hole", 36), k)
    sol = solve(S.mesh, k, smooth_rhs, beta=1.0, gamma=1.0, space=S)
    assert sol.zeta.mean() == pytest.approx(0.0, abs=1e-12)
    assert sol.xi.mean() == pytest.approx(0.0, abs=1e-12)
    assert sol.xi1.mean() > 0
    G = sol.coeff_matrix
    np.testing.assert_allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0
    blk = gamma_pos_blocks(S, 1.0, 1.0)
    assert abs(blk["B12"] + blk["B21"].T).max() <= 1e-14 * abs(blk["B12"]).max()
    np.testing.assert_array_equal(sol.xi.dofs[S.boundary_dofs()], 0.0)


def test_gamma_positive_block_equations():
    """The combined pair solves the coupled equations with the mean constraint."""
    S = VirtualElementSpace(cached_mesh("two_holes", 75), 1)
    beta, gamma = 0.5, 2.0
    zeta, xi, xi0, xi1, zeta0, zeta1 = solve_gamma_pos(S, smooth_rhs, beta, gamma)
    blk = gamma_pos_blocks(S, beta, gamma)
    F, m = blk["free"], S.mean
    r1 = blk["B11"] @ zeta0.dofs + blk["B12"] @ xi0.dofs[F] + (m @ zeta0.dofs) * m
    np.testing.assert_allclose(r1, S.load_curl(smooth_rhs) / np.sqrt(gamma), atol=1e-10)
    r2 = blk["B21"] @ zeta1.dofs + blk["B22"] @ xi1.dofs[F]
    np.testing.assert_allclose(r2, m[F], atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_linearity_in_f(gamma):
    mesh = cached_mesh("square_hole" if gamma else "gamma", 30)
    f = smooth_rhs
    a = solve(mesh, 2, f, beta=1.0, gamma=gamma)
    b = solve(mesh, 2, lambda p: 2 * f(p), beta=1.0, gamma=gamma)
    np.testing.assert_allclose(b.phi.dofs, 2 * a.phi.dofs, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(b.coeffs, 2 * a.coeffs, rtol=1e-12)


def test_gamma0_rejected_on_multiply_connected():
    with pytest.raises(PipelineError):
        solve(cached_mesh("square_hole", 36), 1, smooth_rhs)
    with pytest.raises(PipelineError):
        solve(structured_voronoi(4), 1, smooth_rhs, beta=-1.0)


def test_gamma_positive_on_simply_connected():
    sol = solve(structured_voronoi(6), 1, smooth_rhs, beta=1.0, gamma=1.0)
    assert sol.harmonics == [] and np.isfinite(sol.phi.dofs).all()


def test_reconstruction_is_curl_plus_gradients():
    S = VirtualElementSpace(cached_mesh("square_hole", 36), 2)
    sol = solve(S.mesh, 2, smooth_rhs, 1.0, 1.0, space=S)
    curl_only = reconstruct_u(sol.phi)
    cells = np.array([2, 5])
    pts = S.centroid[cells]
    grad = S.eval_poly(sol.harmonics[0].pi1, cells, pts, deriv=True)
    curl = S.eval_poly(sol.phi.pi1, cells, pts, deriv=True) @ np.array([[0, -1], [1, 0]])
    np.testing.assert_allclose(curl_only(cells, pts), curl, atol=1e-13)
    np.testing.assert_allclose(sol.evaluate_u(cells, pts), curl + sol.coeffs[0] * grad,
                               atol=1e-13)


@pytest.mark.parametrize("k,n,frozen", [(1, 10, 0.53322), (2, 20, 0.018366)])
def test_smooth_square_error_regression(k, n, frozen):
    """``||u - u_h||`` on structured meshes against values recorded from this solver."""
    f = SmoothSquareSolution()
    err = l2_error_u(solve(structured_voronoi(n), k, f), f.u)
    assert err == pytest.approx(frozen, rel=2e-3)


def test_fem_oracle_near_frozen_values():
    one = fem_harmonic_coefficients(ONE_HOLE, get_rhs("smooth"), n=160)
    two = fem_harmonic_coefficients(TWO_HOLES, get_rhs("smooth"), n=160)
    np.testing.assert_allclose(one, FEM_C_ONE_HOLE, atol=2e-4)
    np.testing.assert_allclose(two, FEM_C_TWO_HOLES, atol=2e-4)


@pytest.mark.parametrize("domain,ref", [("square_hole", FEM_C_ONE_HOLE),
                                        ("two_holes", FEM_C_TWO_HOLES)])
def test_coefficients_agree_with_fem_oracle(domain, ref):
    fam = nested_family(cached_mesh(domain, 36 if domain == "square_hole" else 75), 3)
    sol = solve(fam[-1], 2, smooth_rhs, 1.0, 1.0)
    np.testing.assert_allclose(sol.coeffs, ref, atol=1.5e-3)
