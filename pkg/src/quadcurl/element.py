"""Local enhanced virtual element space of order 1 or 2.

All kernels act on a batch of cells with the same vertex count: vertex
arrays have shape ``(B, n, 2)`` and local matrices ``(B, N, N)``.

Local dof order: vertex values ``0..n-1``; for ``k = 2`` also the edge
midpoint values ``n..2n-1`` (edge ``i`` joins vertex ``i`` to ``i+1``) and
the cell average ``(v, 1)_D / |D|`` as dof ``2n``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ElementError
from .quadrature import (
    dim_poly, eval_monomial_gradients, eval_monomials, gauss_unit,
    monomial_exponents, polygon_area, polygon_centroid, polygon_diameter,
    polygon_rule_batch, scaled_moments,
)

CHUNK_POINTS = 400_000


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_vertices: int

    @property
    def n_dofs(self):
        return self.n_vertices if self.k == 1 else 2 * self.n_vertices + 1

    @property
    def n_boundary_nodes(self):
        return self.k * self.n_vertices

    @property
    def moment_dof(self):
        return 2 * self.n_vertices if self.k == 2 else None


def _edge_shape_functions(k, t):
    """Lagrange basis on an edge at parameters ``t``; columns: start, [mid], end."""
    if k == 1:
        return np.stack([1 - t, t], axis=-1)
    return np.stack([2 * (t - 0.5) * (t - 1), -4 * t * (t - 1), 2 * t * (t - 0.5)], axis=-1)


def _laplacian_scaled(k):
    """Laplacian (in scaled coordinates) of each monomial; constants for k <= 2."""
    out = np.zeros(dim_poly(k))
    for i, (a, b) in enumerate(monomial_exponents(k)):
        if a == 2 and b == 0 or a == 0 and b == 2:
            out[i] = 2.0
    return out


class LocalElements:
    """Projectors and local matrices for a batch of same-shape cells.

    Parameters
    ----------
    verts : array (B, n, 2)
        Counter-clockwise cell vertices.
    k : int
        Order, 1 or 2.
    """

    def __init__(self, verts, k):
        if k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        self.verts = np.asarray(verts, dtype=float)
        if self.verts.ndim == 2:
            self.verts = self.verts[None]
        self.k = k
        B, n, _ = self.verts.shape
        self.layout = DofLayout(k, n)
        self.area = polygon_area(self.verts)
        if np.any(self.area <= 0):
            raise ElementError("cell with non-positive area or clockwise orientation")
        self.centroid = polygon_centroid(self.verts)
        self.diameter = polygon_diameter(self.verts)
        self.nk = dim_poly(k)
        self.moments = scaled_moments(self.verts, self.centroid, self.diameter, 2 * k)
        self._build_projectors()

    # -- geometry helpers ------------------------------------------------------
    def scaled(self, pts):
        """Scaled coordinates of points ``(B, ..., 2)`` in each cell's frame."""
        c = self.centroid.reshape((-1,) + (1,) * (pts.ndim - 2) + (2,))
        h = self.diameter.reshape((-1,) + (1,) * (pts.ndim - 1))
        return (pts - c) / h

    @cached_property
    def midpoints(self):
        return 0.5 * (self.verts + np.roll(self.verts, -1, axis=1))

    @cached_property
    def boundary_nodes(self):
        """Coordinates of the dof nodes on the cell boundary, ``(B, k*n, 2)``."""
        if self.k == 1:
            return self.verts
        return np.concatenate([self.verts, self.midpoints], axis=1)

    # -- projectors ------------------------------------------------------------
    def _build_projectors(self):
        k, nk = self.k, self.nk
        B, n, _ = self.verts.shape
        N = self.layout.n_dofs
        S = self.scaled(self.verts)
        d = np.roll(S, -1, axis=1) - S
        dlen = np.linalg.norm(d, axis=-1)                        # scaled lengths
        normal = np.stack([d[..., 1], -d[..., 0]], axis=-1) / dlen[..., None]
        t, w = gauss_unit(k + 1)
        Xq = S[:, :, None, :] + t[:, None] * d[:, :, None, :]    # (B, n, nq, 2)
        grads = eval_monomial_gradients(Xq[..., 0], Xq[..., 1], k)  # (B,n,nq,nk,2)
        dn = np.einsum("bnqad,bnd->bnqa", grads, normal)
        shp = _edge_shape_functions(k, t)                         # (nq, nloc)
        flux = np.einsum("bn,q,bnqa,ql->bnla", dlen, w, dn, shp)  # (B,n,nloc,nk)

        Bm = np.zeros((B, nk, N))
        Bm[:, :, :n] += np.transpose(flux[:, :, 0, :], (0, 2, 1))
        Bm[:, :, :n] += np.transpose(np.roll(flux[:, :, -1, :], 1, axis=1), (0, 2, 1))
        if k == 2:
            Bm[:, :, n:2 * n] += np.transpose(flux[:, :, 1, :], (0, 2, 1))
            lap = _laplacian_scaled(k)
            Bm[:, :, 2 * n] -= lap[None, :] * (self.area / self.diameter**2)[:, None]

        # boundary-mean term; any positive weight yields the same projector
        perim = dlen.sum(axis=1)
        ew = np.einsum("bn,q,ql->bnl", dlen, w, shp) / perim[:, None, None]
        p0v = np.zeros((B, N))
        p0v[:, :n] += ew[:, :, 0] + np.roll(ew[:, :, -1], 1, axis=1)
        if k == 2:
            p0v[:, n:2 * n] += ew[:, :, 1]
        mq = eval_monomials(Xq[..., 0], Xq[..., 1], k)           # (B,n,nq,nk)
        p0m = np.einsum("bn,q,bnqa->ba", dlen, w, mq) / perim[:, None]
        Bm += p0m[:, :, None] * p0v[:, None, :]

        Dm = np.zeros((B, N, nk))
        Dm[:, :n] = eval_monomials(S[..., 0], S[..., 1], k)
        if k == 2:
            Smid = self.scaled(self.midpoints)
            Dm[:, n:2 * n] = eval_monomials(Smid[..., 0], Smid[..., 1], k)
            Dm[:, 2 * n] = self.moments[:, :nk] / self.area[:, None]

        G = Bm @ Dm
        try:
            Pi1 = np.linalg.solve(G, Bm)
        except np.linalg.LinAlgError as exc:
            raise ElementError("singular projection system (degenerate cell)") from exc
        if not np.all(np.isfinite(Pi1)):
            raise ElementError("singular projection system (degenerate cell)")

        if k == 1:
            Pi0 = Pi1
        else:
            corr = -(self.moments[:, None, :nk] @ Pi1)[:, 0, :] / self.area[:, None]
            corr[:, 2 * n] += 1.0
            Pi0 = Pi1.copy()
            Pi0[:, 0, :] += corr

        self.B, self.D, self.G = Bm, Dm, G
        self.boundary_functional = p0v
        self.Pi1, self.Pi0 = Pi1, Pi0

    # -- local matrices -----------------------------------------------------------
    @cached_property
    def H(self):
        """Mass matrix of the scaled monomials, ``(B, nk, nk)``."""
        idx = {e: i for i, e in enumerate(monomial_exponents(2 * self.k))}
        ex = monomial_exponents(self.k)
        sel = np.array([[idx[(a1 + a2, b1 + b2)] for a2, b2 in ex] for a1, b1 in ex])
        return self.moments[:, sel]

    @cached_property
    def K(self):
        """Gradient Gram matrix ``(grad m_a, grad m_b)_D``."""
        idx = {e: i for i, e in enumerate(monomial_exponents(2 * self.k))}
        ex = monomial_exponents(self.k)
        out = np.zeros((len(self.area), self.nk, self.nk))
        for i, (a1, b1) in enumerate(ex):
            for j, (a2, b2) in enumerate(ex):
                if a1 and a2:
                    out[:, i, j] += a1 * a2 * self.moments[:, idx[(a1 + a2 - 2, b1 + b2)]]
                if b1 and b2:
                    out[:, i, j] += b1 * b2 * self.moments[:, idx[(a1 + a2, b1 + b2 - 2)]]
        return out / self.diameter[:, None, None] ** 2

    @cached_property
    def stabilization(self):
        """``S^D((I - Pi1) v, (I - Pi1) w)`` over the boundary nodes."""
        N = self.layout.n_dofs
        nb = self.layout.n_boundary_nodes
        R = (np.eye(N) - self.D @ self.Pi1)[:, :nb, :]
        return np.transpose(R, (0, 2, 1)) @ R

    @cached_property
    def stiffness(self):
        P = self.Pi1
        return np.transpose(P, (0, 2, 1)) @ self.K @ P + self.stabilization

    @cached_property
    def mass0(self):
        P = self.Pi0
        return np.transpose(P, (0, 2, 1)) @ self.H @ P

    @cached_property
    def mean_row(self):
        """Functional ``v -> (v, 1)_D`` computed through ``Pi0``."""
        return np.einsum("ba,ban->bn", self.H[:, 0, :], self.Pi0)

    # -- quadrature-based kernels ---------------------------------------------
    def quadrature(self, degree, sl=slice(None)):
        return polygon_rule_batch(self.verts[sl], degree, self.centroid[sl])

    def _chunks(self, degree):
        nq = polygon_rule_batch(self.verts[:1], degree)[1].shape[-1]
        step = max(1, CHUNK_POINTS // max(nq, 1))
        for s in range(0, len(self.area), step):
            yield slice(s, s + step)

    def _monomial_moments_against(self, func, degree, mode):
        """``int_D F . D m_a`` for every monomial, with ``mode`` selecting ``D``."""
        out = np.zeros((len(self.area), self.nk))
        for sl in self._chunks(degree):
            pts, wts = self.quadrature(degree, sl)
            X = (pts - self.centroid[sl][:, None, :]) / self.diameter[sl][:, None, None]
            vals = np.asarray(func(pts), dtype=float)
            if mode == "value":
                m = eval_monomials(X[..., 0], X[..., 1], self.k)
                out[sl] = np.einsum("bq,bq,bqa->ba", wts, vals, m)
                continue
            g = eval_monomial_gradients(X[..., 0], X[..., 1], self.k)
            g = g / self.diameter[sl][:, None, None, None]
            if mode == "curl":
                rot = np.stack([g[..., 1], -g[..., 0]], axis=-1)
                out[sl] = np.einsum("bq,bqd,bqad->ba", wts, vals, rot)
            else:
                out[sl] = np.einsum("bq,bqd,bqad->ba", wts, vals, g)
        return out

    def load_curl(self, f, degree=None):
        """``(f, curl Pi1 psi_i)_D`` for every local basis function."""
        degree = 2 * self.k + 4 if degree is None else degree
        w = self._monomial_moments_against(f, degree, "curl")
        return np.einsum("ba,ban->bn", w, self.Pi1)

    def load_grad(self, f, degree=None):
        """``(f, grad Pi1 psi_i)_D`` for every local basis function."""
        degree = 2 * self.k + 4 if degree is None else degree
        w = self._monomial_moments_against(f, degree, "grad")
        return np.einsum("ba,ban->bn", w, self.Pi1)

    def load_pi0(self, g, degree=None):
        """``(g, Pi0 psi_i)_D`` for a scalar function ``g``."""
        degree = 2 * self.k + 4 if degree is None else degree
        w = self._monomial_moments_against(g, degree, "value")
        return np.einsum("ba,ban->bn", w, self.Pi0)

    def cell_averages(self, g, degree=None):
        degree = 2 * self.k + 4 if degree is None else degree
        out = np.zeros(len(self.area))
        for sl in self._chunks(degree):
            pts, wts = self.quadrature(degree, sl)
            out[sl] = np.sum(wts * np.asarray(g(pts), dtype=float), axis=-1)
        return out / self.area

    def interpolate(self, g):
        """Local dofs of the interpolant of a scalar function ``g``."""
        vals = [np.asarray(g(self.verts), dtype=float)]
        if self.k == 2:
            vals.append(np.asarray(g(self.midpoints), dtype=float))
            vals.append(self.cell_averages(g)[:, None])
        return np.concatenate(vals, axis=1)

    def polynomial_dofs(self, coeffs):
        """Local dofs of polynomials given by scaled-basis coefficients ``(B, nk)``."""
        return np.einsum("bna,ba->bn", self.D, coeffs)


# ---------------------------------------------------------------------------
# single-cell entry points

def _single(cell, k):
    return LocalElements(np.asarray(cell, dtype=float)[None], k)


def compute_pi1(cell, k):
    """Coefficients (scaled monomial basis) of ``Pi1`` applied to each local dof."""
    return _single(cell, k).Pi1[0]


def compute_pi0(cell, k):
    return _single(cell, k).Pi0[0]


def local_stiffness(cell, k):
    return _single(cell, k).stiffness[0]


def local_mass_pi0(cell, k):
    return _single(cell, k).mass0[0]


def local_load_curl(cell, k, f):
    return _single(cell, k).load_curl(f)[0]


def local_load_grad(cell, k, f):
    return _single(cell, k).load_grad(f)[0]


def interpolate(cell, k, g):
    return _single(cell, k).interpolate(g)[0]
