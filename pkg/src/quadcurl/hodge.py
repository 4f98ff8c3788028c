"""Quad-curl solver through a discrete Hodge decomposition.

The vector unknown is recovered as ``u_h = curl Pi1 phi_h + sum_j c_j grad Pi1 varphi_j``
from a chain of scalar second order problems in the virtual element space.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (
    DirichletSolver, MeanBorderedSolver, ScalarField, SparseSolver, VirtualElementSpace,
)
from .exceptions import PipelineError
from .quadrature import derivative_matrices, dim_poly, eval_monomials


@dataclass
class VectorField:
    """Piecewise polynomial vector field of degree ``k - 1`` in each cell's scaled basis.

    ``coeffs`` has shape ``(n_cells, dim P_{k-1}, 2)``.
    """

    space: VirtualElementSpace
    coeffs: np.ndarray

    def __call__(self, cells, points):
        S = self.space
        cells = np.asarray(cells)
        pts = np.asarray(points, dtype=float)
        X = (pts - S.centroid[cells]) / S.diameter[cells][:, None]
        m = eval_monomials(X[:, 0], X[:, 1], S.k - 1)
        return np.einsum("pa,pad->pd", m, self.coeffs[cells])


def _gradient_coeffs(space, pi1):
    """Coefficients of ``grad p`` (degree ``k - 1``) from those of ``p`` (degree ``k``)."""
    dx, dy = derivative_matrices(space.k)
    n = dim_poly(space.k - 1)
    gx = pi1 @ dx[:n].T / space.diameter[:, None]
    gy = pi1 @ dy[:n].T / space.diameter[:, None]
    return gx, gy


def reconstruct_u(phi, harmonics=(), coeffs=()):
    """``u_h = curl Pi1 phi + sum_j c_j grad Pi1 varphi_j`` as a :class:`VectorField`."""
    S = phi.space
    gx, gy = _gradient_coeffs(S, phi.pi1)
    out = np.stack([gy, -gx], axis=-1)
    for c, h in zip(coeffs, harmonics):
        hx, hy = _gradient_coeffs(S, h.pi1)
        out = out + c * np.stack([hx, hy], axis=-1)
    return VectorField(S, out)


@dataclass
class HodgeSolution:
    """Every intermediate quantity of the pipeline on one mesh."""

    space: VirtualElementSpace
    beta: float
    gamma: float
    phi: ScalarField
    xi: ScalarField
    xi0: ScalarField
    xi1: ScalarField
    rho: ScalarField = None
    zeta: ScalarField = None
    harmonics: list = field(default_factory=list)
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coeff_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    coeff_rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_h: VectorField = None

    def __post_init__(self):
        if self.u_h is None:
            self.u_h = reconstruct_u(self.phi, self.harmonics, self.coeffs)

    @property
    def mesh(self):
        return self.space.mesh

    @property
    def n_dofs(self):
        return self.space.n_dofs

    def evaluate_u(self, cells, points):
        """Values of ``u_h`` at points lying in the given cells, shape ``(P, 2)``."""
        return self.u_h(cells, points)


def _check_params(mesh, beta, gamma):
    if beta < 0 or gamma < 0:
        raise PipelineError("beta and gamma must be nonnegative")
    if gamma == 0 and mesh.betti > 0:
        raise PipelineError("gamma must be positive on a multiply connected domain")


def solve_gamma0(space, f, beta, neumann=None):
    """Return ``(rho, xi, xi0, xi1)`` for ``gamma = 0``."""
    A, M0, m = space.stiffness, space.mass0, space.mean
    neumann = neumann or MeanBorderedSolver(A, m)
    rho = neumann.solve(space.load_curl(f))
    dsolver = DirichletSolver(A + beta * M0 if beta else A, space.boundary_dofs())
    xs = dsolver.solve(np.column_stack([M0 @ rho, m]))
    xi0, xi1 = xs[:, 0], xs[:, 1]
    t1 = m @ xi1
    if t1 <= 0:
        raise PipelineError("(1, xi_1) is not positive")
    xi = xi0 - (m @ xi0) / t1 * xi1
    return tuple(space.field(v) for v in (rho, xi, xi0, xi1))


def gamma_pos_blocks(space, beta, gamma):
    """Blocks of the coupled operator with ``zeta`` unknowns first, free ``xi`` second."""
    A, M0 = space.stiffness, space.mass0
    F = space.interior_dofs
    sg = np.sqrt(gamma)
    B11 = A
    B12 = sg * M0[:, F]
    B21 = -sg * M0[F, :]
    B22 = A[F][:, F] + beta * M0[F][:, F]
    return {"B11": B11, "B12": B12.tocsr(), "B21": B21.tocsr(), "B22": B22.tocsr(), "free": F}


def solve_gamma_pos(space, f, beta, gamma):
    """Return ``(zeta, xi, xi0, xi1, zeta0, zeta1)`` for ``gamma > 0``."""
    if gamma <= 0:
        raise PipelineError("gamma must be positive")
    blk = gamma_pos_blocks(space, beta, gamma)
    F = blk["free"]
    m = space.mean
    n, nf = space.n_dofs, len(F)
    col = sp.csr_matrix(m[:, None])
    K = sp.bmat([[blk["B11"], blk["B12"], col],
                 [blk["B21"], blk["B22"], None],
                 [col.T, None, sp.csr_matrix([[-1.0]])]], format="csc")
    rhs = np.zeros((n + nf + 1, 2))
    rhs[:n, 0] = space.load_curl(f) / np.sqrt(gamma)
    rhs[n:n + nf, 1] = m[F]
    sol = SparseSolver(K).solve(rhs)
    zeta = sol[:n]
    xi = np.zeros((n, 2))
    xi[F] = sol[n:n + nf]
    t1 = m @ xi[:, 1]
    if t1 <= 0:
        raise PipelineError("(1, xi_1) is not positive")
    s = (m @ xi[:, 0]) / t1
    zeta_h = zeta[:, 0] - s * zeta[:, 1]
    xi_h = xi[:, 0] - s * xi[:, 1]
    return tuple(space.field(v) for v in
                 (zeta_h, xi_h, xi[:, 0], xi[:, 1], zeta[:, 0], zeta[:, 1]))


def solve_phi(space, xi, neumann=None):
    neumann = neumann or MeanBorderedSolver(space.stiffness, space.mean)
    return space.field(neumann.solve(space.mass0 @ xi.dofs))


def solve_harmonics(space):
    """Discrete harmonic functions equal to one on a hole boundary and zero elsewhere."""
    mesh = space.mesh
    if mesh.betti == 0:
        return []
    bd = space.boundary_dofs()
    pos = {d: i for i, d in enumerate(bd)}
    vals = np.zeros((len(bd), mesh.betti))
    for j in range(1, mesh.betti + 1):
        vals[[pos[d] for d in space.boundary_dofs(j)], j - 1] = 1.0
    dsolver = DirichletSolver(space.stiffness, bd)
    X = dsolver.solve(np.zeros((space.n_dofs, mesh.betti)), vals)
    return [space.field(X[:, j]) for j in range(mesh.betti)]


def solve_coefficients(space, harmonics, f, gamma):
    """Coefficients of the gradient part; returns ``(c, matrix, rhs)``."""
    if not harmonics:
        return np.zeros(0), np.zeros((0, 0)), np.zeros(0)
    H = np.column_stack([h.dofs for h in harmonics])
    G = H.T @ (space.stiffness @ H)
    G = 0.5 * (G + G.T)
    b = space.load_grad(f) @ H / gamma
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise PipelineError("harmonic Gram matrix is not positive definite") from exc
    c = np.linalg.solve(L.T, np.linalg.solve(L, b))
    return c, G, b


def solve(mesh, k, f, beta=0.0, gamma=0.0, space=None):
    """Run the full pipeline on ``mesh`` and return a :class:`HodgeSolution`."""
    _check_params(mesh, beta, gamma)
    space = space or VirtualElementSpace(mesh, k)
    neumann = MeanBorderedSolver(space.stiffness, space.mean)
    if gamma == 0:
        rho, xi, xi0, xi1 = solve_gamma0(space, f, beta, neumann)
        zeta = None
    else:
        zeta, xi, xi0, xi1, _, _ = solve_gamma_pos(space, f, beta, gamma)
        rho = space.field(np.sqrt(gamma) * zeta.dofs)
    phi = solve_phi(space, xi, neumann)
    harmonics = solve_harmonics(space) if gamma > 0 else []
    c, G, b = solve_coefficients(space, harmonics, f, gamma)
    return HodgeSolution(space=space, beta=beta, gamma=gamma, phi=phi, xi=xi, xi0=xi0,
                         xi1=xi1, rho=rho, zeta=zeta, harmonics=harmonics, coeffs=c,
                         coeff_matrix=G, coeff_rhs=b)
