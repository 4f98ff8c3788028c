"""Estimator-style wrapper around the solver.

``fit`` takes a mesh instead of a data matrix, and ``predict`` evaluates
the discrete field ``u_h`` at arbitrary points of the domain.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .hodge import solve
from .mesh import PolygonMesh, locate_points
from .problems import get_rhs


def check_mesh(mesh):
    if not isinstance(mesh, PolygonMesh):
        raise TypeError(f"expected a PolygonMesh, got {type(mesh).__name__}")
    return mesh


def check_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {np.shape(points)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain NaN or inf")
    return pts


class QuadCurlVEM(BaseEstimator):
    """Quad-curl solve on a polygonal mesh.

    Parameters
    ----------
    k : int
        Polynomial order, 1 or 2.
    beta, gamma : float
        Lower-order coefficients of the operator.
    rhs : str or callable
        Load ``f`` mapping points ``(..., 2)`` to vectors ``(..., 2)``, or the
        name of a built-in right-hand side.
    """

    def __init__(self, k=1, beta=0.0, gamma=0.0, rhs="smooth"):
        self.k = k
        self.beta = beta
        self.gamma = gamma
        self.rhs = rhs

    def fit(self, mesh, y=None):
        mesh = check_mesh(mesh)
        if self.k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        f = get_rhs(self.rhs) if isinstance(self.rhs, str) else self.rhs
        self.solution_ = solve(mesh, self.k, f, self.beta, self.gamma)
        self.mesh_ = mesh
        self.coeffs_ = self.solution_.coeffs
        self.n_dofs_ = self.solution_.n_dofs
        return self

    def predict(self, points):
        """``u_h`` at ``points``; rows outside the mesh are NaN."""
        check_is_fitted(self, "solution_")
        pts = check_points(points)
        cells = locate_points(self.mesh_, pts)
        out = np.full((len(pts), 2), np.nan)
        ok = cells >= 0
        if ok.any():
            out[ok] = self.solution_.evaluate_u(cells[ok], pts[ok])
        return out
