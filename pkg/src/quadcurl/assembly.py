"""Global scalar virtual element space: dof map, assembly and linear solves."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .element import LocalElements
from .exceptions import SolverError
from .quadrature import dim_poly, eval_monomial_gradients, eval_monomials

SINGULAR_PIVOT_RATIO = 1e-13
RESIDUAL_TOL = 1e-10


@dataclass
class ElementBlock:
    """Cells sharing a vertex count together with their global dof indices."""

    cell_ids: np.ndarray
    dofs: np.ndarray
    local: LocalElements


class VirtualElementSpace:
    """Enhanced scalar virtual element space ``V_h^k`` on a polygonal mesh.

    Global dof order: vertices, then edge midpoints in edge order, then cell
    averages (the last two only for ``k = 2``).
    """

    def __init__(self, mesh, k):
        if k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        self.mesh = mesh
        self.k = k
        nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
        self.n_dofs = nv if k == 1 else nv + ne + nc
        self.nk = dim_poly(k)
        self.blocks = []
        self.centroid = np.zeros((nc, 2))
        self.diameter = np.zeros(nc)
        self.area = np.zeros(nc)
        for n, (ids, vids, eids) in sorted(mesh.groups.items()):
            loc = LocalElements(mesh.vertices[vids], k)
            if k == 1:
                dofs = vids
            else:
                dofs = np.concatenate([vids, nv + eids, (nv + ne + ids)[:, None]], axis=1)
            self.blocks.append(ElementBlock(ids, dofs, loc))
            self.centroid[ids] = loc.centroid
            self.diameter[ids] = loc.diameter
            self.area[ids] = loc.area

    # -- dof geometry -----------------------------------------------------------
    @cached_property
    def node_coords(self):
        """Coordinates of the nodal dofs (vertices, then edge midpoints)."""
        V = self.mesh.vertices
        if self.k == 1:
            return V
        E = self.mesh.edges
        return np.concatenate([V, 0.5 * (V[E[:, 0]] + V[E[:, 1]])])

    @cached_property
    def _loop_dofs(self):
        mesh = self.mesh
        nv = mesh.n_vertices
        out = {}
        if self.k == 2:
            pairs, eids = mesh.oriented_boundary_edges
            lookup = {(int(a), int(b)): int(e) for (a, b), e in zip(pairs, eids)}
        for label, loop in mesh.boundary_loops:
            d = [loop]
            if self.k == 2:
                nxt = np.roll(loop, -1)
                d.append(nv + np.array([lookup[(int(a), int(b))] for a, b in zip(loop, nxt)]))
            out[label] = np.concatenate(d)
        return out

    def boundary_dofs(self, label=None):
        """Dofs on boundary loop ``label``, or on the whole boundary."""
        if label is None:
            return np.unique(np.concatenate(list(self._loop_dofs.values())))
        return self._loop_dofs[label]

    @cached_property
    def interior_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs()] = False
        return np.flatnonzero(mask)

    # -- assembly -----------------------------------------------------------------
    def _scatter_matrix(self, attr):
        rows, cols, vals = [], [], []
        for blk in self.blocks:
            M = getattr(blk.local, attr)
            N = blk.dofs.shape[1]
            rows.append(np.repeat(blk.dofs, N, axis=1).ravel())
            cols.append(np.tile(blk.dofs, (1, N)).ravel())
            vals.append(M.ravel())
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n_dofs, self.n_dofs))
        return A.tocsr()

    def _scatter_vector(self, local_vals):
        out = np.zeros(self.n_dofs)
        for blk, v in zip(self.blocks, local_vals):
            np.add.at(out, blk.dofs.ravel(), v.ravel())
        return out

    @cached_property
    def stiffness(self):
        """Matrix of ``a_h``."""
        return self._scatter_matrix("stiffness")

    @cached_property
    def mass0(self):
        """Matrix of ``(Pi0 w, Pi0 v)``."""
        return self._scatter_matrix("mass0")

    @cached_property
    def mean(self):
        """Vector of ``(v, 1)`` evaluated through ``Pi0``."""
        return self._scatter_vector([b.local.mean_row for b in self.blocks])

    def assemble(self, c_stiff=1.0, c_mass=0.0, c_mean=0.0):
        """``c_stiff a_h + c_mass (Pi0., Pi0.) + c_mean (., 1)(., 1)``.

        The rank-one mean term produces a dense matrix; it is meant for small
        meshes and checks. Solvers use a bordered system instead.
        """
        A = c_stiff * self.stiffness
        if c_mass:
            A = A + c_mass * self.mass0
        if c_mean:
            m = self.mean
            A = A + c_mean * sp.csr_matrix(np.outer(m, m))
        return A.tocsr()

    # -- loads and interpolation -----------------------------------------------
    def load_curl(self, f, degree=None):
        """``(f, curl Pi1 psi_i)`` for a vector field ``f(points) -> (..., 2)``."""
        return self._scatter_vector([b.local.load_curl(f, degree) for b in self.blocks])

    def load_grad(self, f, degree=None):
        return self._scatter_vector([b.local.load_grad(f, degree) for b in self.blocks])

    def load_pi0(self, g, degree=None):
        """``(g, Pi0 psi_i)`` for a scalar function ``g``."""
        return self._scatter_vector([b.local.load_pi0(g, degree) for b in self.blocks])

    def interpolate(self, g):
        out = np.zeros(self.n_dofs)
        for blk in self.blocks:
            out[blk.dofs] = blk.local.interpolate(g)
        return out

    # -- projections -------------------------------------------------------------
    def _project(self, dofs, attr):
        dofs = np.asarray(dofs, dtype=float)
        out = np.zeros((self.mesh.n_cells, self.nk))
        for blk in self.blocks:
            out[blk.cell_ids] = np.einsum("ban,bn->ba", getattr(blk.local, attr), dofs[blk.dofs])
        return out

    def pi1_coeffs(self, dofs):
        """Per-cell coefficients of ``Pi1 v`` in the scaled monomial basis."""
        return self._project(dofs, "Pi1")

    def pi0_coeffs(self, dofs):
        return self._project(dofs, "Pi0")

    def eval_poly(self, coeffs, cells, points, deriv=False):
        """Evaluate per-cell polynomials (or their gradients) at points."""
        pts = np.asarray(points, dtype=float)
        cells = np.asarray(cells)
        h = self.diameter[cells]
        X = (pts - self.centroid[cells]) / h[:, None]
        c = coeffs[cells]
        if not deriv:
            return np.einsum("pa,pa->p", eval_monomials(X[:, 0], X[:, 1], self.k), c)
        g = eval_monomial_gradients(X[:, 0], X[:, 1], self.k)
        return np.einsum("pad,pa->pd", g, c) / h[:, None]

    def field(self, dofs):
        return ScalarField(self, np.asarray(dofs, dtype=float))


@dataclass
class ScalarField:
    """A discrete function in ``V_h^k`` given by its dof vector."""

    space: VirtualElementSpace
    dofs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def pi1(self):
        if "pi1" not in self._cache:
            self._cache["pi1"] = self.space.pi1_coeffs(self.dofs)
        return self._cache["pi1"]

    @property
    def pi0(self):
        if "pi0" not in self._cache:
            self._cache["pi0"] = self.space.pi0_coeffs(self.dofs)
        return self._cache["pi0"]

    def __add__(self, other):
        return ScalarField(self.space, self.dofs + other.dofs)

    def __sub__(self, other):
        return ScalarField(self.space, self.dofs - other.dofs)

    def __mul__(self, s):
        return ScalarField(self.space, s * self.dofs)

    __rmul__ = __mul__

    def mean(self):
        """``(v, 1)`` computed through ``Pi0``."""
        return float(self.space.mean @ self.dofs)


def field_eval(field_, cells, points, projector="pi1", deriv=False):
    """Evaluate ``Pi1 v`` or ``Pi0 v`` (or the gradient) at points in given cells."""
    coeffs = field_.pi1 if projector == "pi1" else field_.pi0
    return field_.space.eval_poly(coeffs, cells, points, deriv)


def global_mean(field_):
    return field_.mean()


# ---------------------------------------------------------------------------
# linear algebra

class SparseSolver:
    """Sparse LU factorization reused across right-hand sides."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        if self.A.shape[0] == 0:
            self.lu = None
            return
        try:
            self.lu = splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"singular system: {exc}") from exc
        d = np.abs(self.lu.U.diagonal())
        if d.min() <= SINGULAR_PIVOT_RATIO * d.max():
            raise SolverError("singular or near-singular system")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.lu is None:
            return np.zeros_like(b)
        x = self.lu.solve(b)
        x = x + self.lu.solve(b - self.A @ x)
        r = self.A @ x - b
        scale = np.linalg.norm(b, axis=0) + np.linalg.norm(self.A @ x, axis=0)
        rel = np.linalg.norm(r, axis=0) / np.where(scale > 0, scale, 1.0)
        if not np.all(np.isfinite(x)) or np.any(rel > RESIDUAL_TOL):
            raise SolverError(f"linear solve residual too large ({np.max(rel):.2e})")
        return x


def solve_sparse(A, b):
    return SparseSolver(A).solve(b)


def apply_dirichlet(A, b, bc_dofs, bc_values):
    """Eliminate prescribed dofs; returns ``(A_ff, b_f, free)``."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[bc_dofs] = False
    free = np.flatnonzero(mask)
    g = np.zeros(n)
    g[bc_dofs] = bc_values
    b = np.asarray(b, dtype=float)
    lift = A[free][:, bc_dofs] @ g[bc_dofs]
    b_f = b[free] - (lift[:, None] if b.ndim == 2 else lift)
    return A[free][:, free], b_f, free


class DirichletSolver:
    """Factorization of ``A`` restricted to the free dofs."""

    def __init__(self, A, bc_dofs):
        self.A = sp.csr_matrix(A)
        self.n = self.A.shape[0]
        self.bc_dofs = np.asarray(bc_dofs, dtype=np.int64)
        mask = np.ones(self.n, dtype=bool)
        mask[self.bc_dofs] = False
        self.free = np.flatnonzero(mask)
        self.A_ff = self.A[self.free][:, self.free]
        self.A_fb = self.A[self.free][:, self.bc_dofs]
        self.solver = SparseSolver(self.A_ff)

    def solve(self, b, bc_values=None):
        b = np.asarray(b, dtype=float)
        x = np.zeros(b.shape)
        rhs = b[self.free]
        if bc_values is not None:
            g = np.asarray(bc_values, dtype=float)
            x[self.bc_dofs] = g
            lift = self.A_fb @ g
            rhs = rhs - (lift if b.ndim == 1 else lift.reshape(len(lift), -1))
        x[self.free] = self.solver.solve(rhs)
        return x


class MeanBorderedSolver:
    """Solver for ``A x + (x, 1) m = b`` through the bordered system.

    The extra unknown is ``lam = m . x`` so that the rows read
    ``[[A, m], [m^T, -1]]``.
    """

    def __init__(self, A, m):
        m = np.asarray(m, dtype=float)
        col = sp.csr_matrix(m[:, None])
        K = sp.bmat([[A, col], [col.T, sp.csr_matrix([[-1.0]])]], format="csc")
        self.n = len(m)
        self.solver = SparseSolver(K)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        pad = np.zeros((1,) + b.shape[1:])
        return self.solver.solve(np.concatenate([b, pad]))[: self.n]


def solve_dirichlet(A, b, bc_dofs, bc_values=None):
    return DirichletSolver(A, bc_dofs).solve(b, bc_values)


def solve_neumann_mean(A, m, b):
    """Solve ``A x + (m . x) m = b``."""
    return MeanBorderedSolver(A, m).solve(b)


def dump_coo(A, path):
    """Write a sparse matrix as ``i j value`` lines (0-based) after a size header."""
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row.tolist(), A.col.tolist(), A.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")
