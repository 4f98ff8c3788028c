"""Error norms, inter-level relative errors and convergence tables."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_unit


def cell_quadrature(space, degree=None):
    """Yield ``(cell_ids, points, weights)`` with one entry per quadrature point."""
    degree = 2 * space.k + 4 if degree is None else degree
    for blk in space.blocks:
        loc = blk.local
        for sl in loc._chunks(degree):
            pts, wts = loc.quadrature(degree, sl)
            ids = np.repeat(blk.cell_ids[sl], pts.shape[1])
            yield ids, pts.reshape(-1, 2), wts.ravel()


def ancestor_cells(meshes, fine, coarse):
    """Index of the level-``coarse`` cell containing each cell of level ``fine``."""
    idx = np.arange(meshes[fine].n_cells)
    for lev in range(fine, coarse, -1):
        parent = meshes[lev].parent_of_cell
        if parent is None:
            raise ValueError("meshes are not a nested family")
        idx = parent[idx]
    return idx


def _sqrt_sum(v):
    return float(np.sqrt(max(v, 0.0)))


def l2_error_u(sol, u_exact, degree=None):
    """``||u - u_h||`` over the domain."""
    total = 0.0
    for ids, pts, w in cell_quadrature(sol.space, degree):
        d = u_exact(pts) - sol.evaluate_u(ids, pts)
        total += np.sum(w * np.sum(d * d, axis=1))
    return _sqrt_sum(total)


def l2_norm_u(sol, degree=None):
    total = 0.0
    for ids, pts, w in cell_quadrature(sol.space, degree):
        u = sol.evaluate_u(ids, pts)
        total += np.sum(w * np.sum(u * u, axis=1))
    return _sqrt_sum(total)


def h1_broken_error_xi(sol, grad_xi_exact, degree=None):
    """Broken seminorm ``|xi - Pi1 xi_h|_{h,1}``."""
    S = sol.space
    total = 0.0
    for ids, pts, w in cell_quadrature(S, degree):
        d = grad_xi_exact(pts) - S.eval_poly(sol.xi.pi1, ids, pts, deriv=True)
        total += np.sum(w * np.sum(d * d, axis=1))
    return _sqrt_sum(total)


def boundary_tangential_error(sol, degree=None):
    """``(||n x u_h||, max |n x u_h|)`` on the domain boundary.

    Each boundary edge is integrated with Gauss points using the trace of
    ``u_h`` from its only neighbouring cell. The maximum is taken over the
    boundary nodes, evaluated edge by edge so that a corner node is checked
    with both of its normals.
    """
    S = sol.space
    mesh = S.mesh
    degree = 2 * S.k if degree is None else degree
    pairs, eids = mesh.oriented_boundary_edges
    cells = mesh.edge_cells[eids, 0]
    p0 = mesh.vertices[pairs[:, 0]]
    p1 = mesh.vertices[pairs[:, 1]]
    d = p1 - p0
    length = np.linalg.norm(d, axis=1)
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
    t, w = gauss_unit(max(1, int(np.ceil((degree + 1) / 2))))
    pts = (p0[:, None, :] + t[None, :, None] * d[:, None, :]).reshape(-1, 2)
    ids = np.repeat(cells, len(t))
    u = sol.evaluate_u(ids, pts).reshape(len(eids), len(t), 2)
    nxu = normal[:, None, 0] * u[..., 1] - normal[:, None, 1] * u[..., 0]
    err = _sqrt_sum(np.sum(length[:, None] * w[None, :] * nxu**2))
    nodes = [0.0, 1.0] + ([0.5] if S.k == 2 else [])
    npts = (p0[:, None, :] + np.array(nodes)[None, :, None] * d[:, None, :]).reshape(-1, 2)
    un = sol.evaluate_u(np.repeat(cells, len(nodes)), npts).reshape(len(eids), len(nodes), 2)
    nn = normal[:, None, 0] * un[..., 1] - normal[:, None, 1] * un[..., 0]
    return err, float(np.abs(nn).max())


def inter_level_relative_u(coarse, fine, parent, degree=None):
    """``||u^i - u^{i+1}|| / ||u^{i+1}||`` integrated on the fine mesh.

    ``parent`` maps every fine cell to the coarse cell containing it.
    """
    num = den = 0.0
    for ids, pts, w in cell_quadrature(fine.space, degree):
        uf = fine.evaluate_u(ids, pts)
        uc = coarse.evaluate_u(parent[ids], pts)
        num += np.sum(w * np.sum((uc - uf) ** 2, axis=1))
        den += np.sum(w * np.sum(uf * uf, axis=1))
    return _sqrt_sum(num) / _sqrt_sum(den)


def inter_level_relative_xi(coarse, fine, parent, degree=None):
    """Relative broken seminorm of ``Pi1 xi^i - Pi1 xi^{i+1}`` on the fine mesh."""
    num = den = 0.0
    Sc, Sf = coarse.space, fine.space
    for ids, pts, w in cell_quadrature(Sf, degree):
        gf = Sf.eval_poly(fine.xi.pi1, ids, pts, deriv=True)
        gc = Sc.eval_poly(coarse.xi.pi1, parent[ids], pts, deriv=True)
        num += np.sum(w * np.sum((gc - gf) ** 2, axis=1))
        den += np.sum(w * np.sum(gf * gf, axis=1))
    return _sqrt_sum(num) / _sqrt_sum(den)


def coefficient_relative_error(c_coarse, c_fine):
    c_coarse, c_fine = np.asarray(c_coarse), np.asarray(c_fine)
    return np.abs(c_coarse - c_fine) / np.abs(c_fine)


def rates(errors, hs):
    """Observed orders ``log(e_{i-1}/e_i) / log(h_{i-1}/h_i)``; NaN where undefined."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    out = np.full(len(e), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    out[~np.isfinite(out)] = np.nan
    return out


@dataclass
class ConvergenceReport:
    """Per-level table of errors with observed rates.

    ``columns`` maps an error name to a list with one value per level
    (``NaN`` where not available). Rates are added on output.
    """

    k: int
    h: list = field(default_factory=list)
    dofs: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    coeffs: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    title: str = ""

    def add_level(self, h, dofs, coeffs=(), **errors):
        if self.h and not h < self.h[-1]:
            raise ValueError("mesh size must decrease strictly from level to level")
        self.h.append(float(h))
        self.dofs.append(int(dofs))
        self.coeffs.append(np.asarray(coeffs, dtype=float))
        for name in list(self.columns) + [e for e in errors if e not in self.columns]:
            col = self.columns.setdefault(name, [np.nan] * (len(self.h) - 1))
            col.append(float(errors.get(name, np.nan)))

    def set_value(self, name, level, value):
        col = self.columns.setdefault(name, [np.nan] * len(self.h))
        col[level] = float(value)

    def rate(self, name):
        return rates(self.columns[name], self.h)

    @property
    def n_coeffs(self):
        return max((len(c) for c in self.coeffs), default=0)

    def _header(self):
        head = ["level", "h", "dofs"]
        for name in self.columns:
            head += [name, f"rate_{name[2:] if name.startswith('e_') else name}"]
        for j in range(self.n_coeffs):
            head += [f"c{j + 1}", f"rel_c{j + 1}", f"rate_c{j + 1}"]
        return head

    def rows(self):
        out = []
        rate_cols = {name: self.rate(name) for name in self.columns}
        nc = self.n_coeffs
        cmat = np.array([c if len(c) == nc else np.full(nc, np.nan) for c in self.coeffs])
        rel_c = np.full_like(cmat, np.nan)
        if len(cmat) > 1 and nc:
            rel_c[1:] = coefficient_relative_error(cmat[:-1], cmat[1:])
        rate_c = [rates(rel_c[:, j], self.h) for j in range(nc)]
        for i in range(len(self.h)):
            row = [i, self.h[i], self.dofs[i]]
            for name in self.columns:
                row += [self.columns[name][i], rate_cols[name][i]]
            for j in range(nc):
                row += [cmat[i, j], rel_c[i, j], rate_c[j][i]]
            out.append(row)
        return out

    @staticmethod
    def _fmt(v):
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if v is None or not np.isfinite(v):
            return ""
        return f"{v:.4e}"

    def to_csv(self, path=None):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self._header())
        for row in self.rows():
            wr.writerow([self._fmt(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_markdown(self):
        head = self._header()
        lines = []
        if self.title:
            lines += [f"### {self.title}", ""]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for row in self.rows():
            lines.append("| " + " | ".join(self._fmt(v) or "-" for v in row) + " |")
        if self.extras:
            lines.append("")
            lines += [f"- {key}: {val}" for key, val in self.extras.items()]
        return "\n".join(lines) + "\n"
