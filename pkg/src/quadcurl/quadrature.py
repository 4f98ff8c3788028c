"""Polygon moments, quadrature rules and the scaled monomial basis.

Every element computation works in the scaled frame
``X = (x - centroid) / diameter`` so the local matrices do not degrade
as the cells shrink.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ElementError


def monomial_exponents(degree):
    """Exponents ``(a, b)`` of ``X**a * Y**b`` with ``a + b <= degree``.

    Ordered by total degree, then by decreasing power of ``X``:
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...``.
    """
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def dim_poly(degree):
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def _exponent_index(degree):
    return {e: i for i, e in enumerate(monomial_exponents(degree))}


def eval_monomials(X, Y, degree):
    """Stack ``X**a * Y**b`` along a new trailing axis."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    px = [np.ones_like(X)]
    py = [np.ones_like(Y)]
    for _ in range(degree):
        px.append(px[-1] * X)
        py.append(py[-1] * Y)
    return np.stack([px[a] * py[b] for a, b in monomial_exponents(degree)], axis=-1)


def eval_monomial_gradients(X, Y, degree):
    """Gradients w.r.t. the scaled coordinates; shape ``X.shape + (nmon, 2)``."""
    mons = eval_monomials(X, Y, max(degree - 1, 0))
    idx = _exponent_index(max(degree - 1, 0))
    out = np.zeros(np.shape(X) + (dim_poly(degree), 2))
    for i, (a, b) in enumerate(monomial_exponents(degree)):
        if a > 0:
            out[..., i, 0] = a * mons[..., idx[(a - 1, b)]]
        if b > 0:
            out[..., i, 1] = b * mons[..., idx[(a, b - 1)]]
    return out


def derivative_matrices(degree):
    """Matrices mapping coefficients of ``p`` to those of ``dp/dX`` and ``dp/dY``.

    Both act within the degree-``degree`` basis (the top-degree rows stay 0).
    """
    idx = _exponent_index(degree)
    n = dim_poly(degree)
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for i, (a, b) in enumerate(monomial_exponents(degree)):
        if a > 0:
            dx[idx[(a - 1, b)], i] = a
        if b > 0:
            dy[idx[(a, b - 1)], i] = b
    return dx, dy


@dataclass
class ScaledMonomialBasis:
    """``m_alpha(x) = ((x - centroid) / diameter) ** alpha`` for ``|alpha| <= degree``."""

    centroid: np.ndarray
    diameter: float
    degree: int

    @property
    def dim(self):
        return dim_poly(self.degree)

    def scaled(self, points):
        pts = (np.asarray(points, dtype=float) - self.centroid) / self.diameter
        return pts[..., 0], pts[..., 1]

    def __call__(self, points):
        return eval_monomials(*self.scaled(points), self.degree)

    def gradient(self, points):
        return eval_monomial_gradients(*self.scaled(points), self.degree) / self.diameter


@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, func):
        vals = np.asarray(func(self.points))
        return np.tensordot(self.weights, vals, axes=(0, 0))


# ---------------------------------------------------------------------------
# geometry

def polygon_area(verts):
    """Signed area (positive for counter-clockwise); works on batches ``(..., n, 2)``."""
    v = np.asarray(verts, dtype=float)
    x, y = v[..., 0], v[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


def polygon_centroid(verts):
    v = np.asarray(verts, dtype=float)
    x, y = v[..., 0], v[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross, axis=-1)
    cx = np.sum((x + xn) * cross, axis=-1) / (6.0 * area)
    cy = np.sum((y + yn) * cross, axis=-1) / (6.0 * area)
    return np.stack([cx, cy], axis=-1)


def polygon_diameter(verts):
    v = np.asarray(verts, dtype=float)
    diff = v[..., :, None, :] - v[..., None, :, :]
    return np.sqrt(np.max(np.sum(diff * diff, axis=-1), axis=(-2, -1)))


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple_polygon(verts):
    """True when no two non-adjacent edges cross (O(n^2), meant for single cells)."""
    v = np.asarray(verts, dtype=float)
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


# ---------------------------------------------------------------------------
# moments

_GL4 = np.polynomial.legendre.leggauss(4)
_GL4_T = 0.5 * (_GL4[0] + 1.0)
_GL4_W = 0.5 * _GL4[1]


def scaled_moments(verts, centroid, diameter, max_degree):
    """Moments ``int_D m_alpha dx`` of the scaled monomials, batched.

    Green's theorem turns ``int X^a Y^b dX`` into the edge integrals
    ``int X^(a+1) Y^b / (a+1) dY``; the 4-point Gauss rule on each edge is
    exact up to total degree 6 (``max_degree <= 5``).

    Parameters
    ----------
    verts : array (..., n, 2)
    centroid : array (..., 2)
    diameter : array (...)
    max_degree : int

    Returns
    -------
    array (..., dim_poly(max_degree))
    """
    if max_degree > 5:
        raise ValueError("max_degree must be <= 5")
    v = np.asarray(verts, dtype=float)
    h = np.asarray(diameter, dtype=float)
    S = (v - np.asarray(centroid)[..., None, :]) / h[..., None, None]
    P0 = S
    P1 = np.roll(S, -1, axis=-2)
    d = P1 - P0
    t = _GL4_T
    X = P0[..., 0, None] + d[..., 0, None] * t
    Y = P0[..., 1, None] + d[..., 1, None] * t
    dY = d[..., 1, None] * _GL4_W
    out = []
    for a, b in monomial_exponents(max_degree):
        integrand = X ** (a + 1) * Y**b / (a + 1) * dY
        out.append(np.sum(integrand, axis=(-2, -1)))
    return np.stack(out, axis=-1) * (h**2)[..., None]


def polygon_moments(verts, max_degree, centroid=None, diameter=None, check=True):
    """Exact moments of the scaled monomials over one polygon.

    Returns a dict ``{(a, b): int_D ((x-c)/h)^a ((y-c)/h)^b dx}``.
    """
    v = np.asarray(verts, dtype=float)
    if check and not is_simple_polygon(v):
        raise ElementError("self-intersecting polygon")
    if centroid is None:
        centroid = polygon_centroid(v)
    if diameter is None:
        diameter = polygon_diameter(v)
    vals = scaled_moments(v, np.asarray(centroid, dtype=float), np.float64(diameter), max_degree)
    if polygon_area(v) < 0:
        vals = -vals
    return dict(zip(monomial_exponents(max_degree), vals))


# ---------------------------------------------------------------------------
# quadrature rules

@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed (Duffy) Gauss rule on the unit triangle, exact to ``degree``.

    Returns barycentric-free reference coordinates ``(r, s)`` with
    ``r, s >= 0, r + s <= 1`` and weights summing to 1/2.
    """
    n = max(1, int(np.ceil((degree + 2) / 2)))
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    r = u.ravel()
    s = (v * (1.0 - u)).ravel()
    wt = (wu * wv * (1.0 - u)).ravel()
    return np.stack([r, s], axis=-1), wt


def ear_clip(verts):
    """Ear-clipping triangulation of a simple CCW polygon; returns index triples."""
    v = np.asarray(verts, dtype=float)
    idx = list(range(len(v)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(v) ** 2:
            raise ElementError("ear clipping failed")
        n = len(idx)
        for i in range(n):
            ia, ib, ic = idx[i - 1], idx[i], idx[(i + 1) % n]
            a, b, c = v[ia], v[ib], v[ic]
            if cross(a, b, c) <= 0:
                continue
            inside = False
            for j in idx:
                if j in (ia, ib, ic):
                    continue
                p = v[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((ia, ib, ic))
                idx.pop(i)
                break
        else:
            raise ElementError("ear clipping failed: polygon is not simple")
    tris.append(tuple(idx))
    return tris


def polygon_triangles(verts, centroid=None):
    """Triangles covering a batch of polygons, shape ``(..., n, 3, 2)``.

    A fan from the centroid is used when all fan triangles are positively
    oriented; other cells are ear-clipped and padded with zero-area triangles
    so the batch keeps a uniform shape.
    """
    v = np.asarray(verts, dtype=float)
    if centroid is None:
        centroid = polygon_centroid(v)
    c = np.broadcast_to(np.asarray(centroid)[..., None, :], v.shape)
    tris = np.stack([c, v, np.roll(v, -1, axis=-2)], axis=-2)
    a = tris[..., 1, :] - tris[..., 0, :]
    b = tris[..., 2, :] - tris[..., 0, :]
    ok = np.all(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0] > 0, axis=-1)
    if not np.all(ok):
        tris = tris.copy()
        flat_v = v.reshape(-1, *v.shape[-2:])
        flat_t = tris.reshape(-1, *tris.shape[-3:])
        for i in np.flatnonzero(~np.asarray(ok).ravel()):
            ears = ear_clip(flat_v[i])
            n = flat_v.shape[1]
            new = np.repeat(flat_v[i][:1], 3, axis=0)[None].repeat(n, axis=0)
            for j, tri in enumerate(ears):
                new[j] = flat_v[i][list(tri)]
            flat_t[i] = new
        tris = flat_t.reshape(tris.shape)
    return tris


def polygon_rule_batch(verts, degree, centroid=None):
    """Quadrature points ``(..., nq, 2)`` and weights ``(..., nq)`` on polygon batches."""
    tris = polygon_triangles(verts, centroid)
    ref, w = triangle_rule(degree)
    p0 = tris[..., 0, :]
    e1 = tris[..., 1, :] - p0
    e2 = tris[..., 2, :] - p0
    jac = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    pts = (p0[..., None, :] + ref[:, 0, None] * e1[..., None, :]
           + ref[:, 1, None] * e2[..., None, :])
    wts = jac[..., None] * w
    shape = pts.shape[:-3]
    return pts.reshape(shape + (-1, 2)), wts.reshape(shape + (-1,))


def polygon_quadrature(verts, degree):
    """Quadrature rule on a simple polygon, exact for polynomials of ``degree``."""
    if degree > 10:
        raise ValueError("degree must be <= 10")
    v = np.asarray(verts, dtype=float)
    if polygon_area(v) < 0:
        v = v[::-1]
    pts, wts = polygon_rule_batch(v[None], degree)
    keep = wts[0] != 0.0
    return QuadratureRule(pts[0][keep], wts[0][keep])


@lru_cache(maxsize=None)
def gauss_unit(npts):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_quadrature(p0, p1, degree):
    """Gauss rule on the segment ``[p0, p1]`` with arc-length weights."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = np.hypot(*(p1 - p0))
    if length == 0.0:
        raise ValueError("degenerate edge")
    t, w = gauss_unit(max(1, int(np.ceil((degree + 1) / 2))))
    return QuadratureRule(p0 + t[:, None] * (p1 - p0), w * length)
