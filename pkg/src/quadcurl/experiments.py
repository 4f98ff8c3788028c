"""Experiment presets, key-value configuration files and the convergence driver."""

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .assembly import VirtualElementSpace, dump_coo
from .exceptions import ConfigError, PipelineError, QuadCurlError
from .hodge import solve
from .mesh import get_domain, load_mesh, nested_family, random_voronoi, structured_voronoi
from .metrics import (
    ConvergenceReport, boundary_tangential_error, h1_broken_error_xi, inter_level_relative_u,
    inter_level_relative_xi, l2_error_u,
)
from .problems import get_rhs

MESH_KINDS = ("structured", "random", "nested", "file")


@dataclass
class MeshConfig:
    kind: str = "nested"
    levels: int = 4
    seed: int = 0
    n_seeds: int = 25
    n0: int = 5
    lloyd_iters: int = 100
    path: str = None


@dataclass
class ExperimentConfig:
    name: str = "custom"
    k: int = 1
    beta: float = 0.0
    gamma: float = 0.0
    domain: str = "square"
    rhs: str = "smooth"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    expected_rate: float = None
    output: str = None
    markdown: str = None
    dump_matrices: str = None

    def validate(self):
        if self.k not in (1, 2):
            raise ConfigError("k must be 1 or 2")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("beta and gamma must be nonnegative")
        if self.mesh.kind not in MESH_KINDS:
            raise ConfigError(f"mesh.kind must be one of {MESH_KINDS}")
        if self.mesh.levels < 1:
            raise ConfigError("mesh.levels must be positive")
        if self.mesh.kind == "file" and not self.mesh.path:
            raise ConfigError("mesh.kind = file needs mesh.path")
        if self.mesh.kind == "structured" and self.domain != "square":
            raise ConfigError("structured meshes exist only for the unit square")
        try:
            get_rhs(self.rhs)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        if self.mesh.kind != "file":
            try:
                betti = len(get_domain(self.domain).holes)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if betti and self.gamma == 0:
                raise ConfigError("gamma must be positive on a multiply connected domain")
        if self.name in ("exp1", "exp2", "exp3") and self.gamma != 0:
            raise ConfigError(f"{self.name} requires gamma = 0")
        if self.name in ("exp4", "exp5") and self.gamma <= 0:
            raise ConfigError(f"{self.name} requires gamma > 0")
        if self.name == "exp1" and self.rhs != "smooth_square":
            raise ConfigError("exp1 uses the manufactured solution")
        return self


# default level counts keep every run under about 150k dofs
_PRESETS = {
    "exp1": dict(domain="square", rhs="smooth_square", beta=0.0, gamma=0.0,
                 mesh=dict(kind="structured", n0=5), levels={1: 6, 2: 5}),
    "exp2": dict(domain="square", rhs="piecewise", beta=0.0, gamma=0.0,
                 mesh=dict(kind="nested", n_seeds=25), levels={1: 7, 2: 6}),
    "exp3": dict(domain="gamma", rhs="piecewise", beta=0.0, gamma=0.0,
                 mesh=dict(kind="nested", n_seeds=25), levels={1: 7, 2: 6}),
    "exp4": dict(domain="square_hole", rhs="smooth", beta=1.0, gamma=1.0,
                 mesh=dict(kind="nested", n_seeds=36), levels={1: 6, 2: 5}),
    "exp5": dict(domain="two_holes", rhs="smooth", beta=1.0, gamma=1.0,
                 mesh=dict(kind="nested", n_seeds=75), levels={1: 6, 2: 5}),
}


def preset(name, k=1, levels=None, seed=0):
    """Configuration of one of the five benchmark experiments."""
    try:
        p = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
    mesh = MeshConfig(levels=levels or p["levels"][k], seed=seed, **p["mesh"])
    omega = get_domain(p["domain"]).max_interior_angle()
    return ExperimentConfig(name=name, k=k, beta=p["beta"], gamma=p["gamma"],
                            domain=p["domain"], rhs=p["rhs"], mesh=mesh,
                            expected_rate=min(math.pi / omega, k)).validate()


# ---------------------------------------------------------------------------
# configuration files

def _coerce(value, target):
    if target is str and value.lower() in ("none", ""):
        return None
    return target(value)


def parse_config(text):
    """Parse ``key = value`` lines (dotted keys for the mesh section) into a config."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        entries[key] = value

    base = entries.pop("preset", None)
    try:
        k = int(entries.get("k", 1))
    except ValueError:
        raise ConfigError(f"bad value for 'k': {entries['k']!r}") from None
    try:
        cfg = preset(base, k=k) if base else ExperimentConfig()
    except KeyError:
        raise ConfigError(f"preset does not define k = {k}") from None
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    mesh_types = {f.name for f in dataclasses.fields(MeshConfig)}
    hints = {"k": int, "beta": float, "gamma": float, "expected_rate": float}
    mesh_hints = {"levels": int, "seed": int, "n_seeds": int, "n0": int, "lloyd_iters": int}
    for key, value in entries.items():
        try:
            if key.startswith("mesh."):
                sub = key[5:]
                if sub not in mesh_types:
                    raise ConfigError(f"unknown key {key!r}")
                setattr(cfg.mesh, sub, _coerce(value, mesh_hints.get(sub, str)))
            elif key in top and key != "mesh":
                setattr(cfg, key, _coerce(value, hints.get(key, str)))
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    if base and "expected_rate" not in entries:
        omega = get_domain(cfg.domain).max_interior_angle()
        cfg.expected_rate = min(math.pi / omega, cfg.k)
    return cfg.validate()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# driver

def mesh_levels(cfg):
    """Yield the meshes of the configured family, coarse to fine."""
    mc = cfg.mesh
    if mc.kind == "structured":
        for i in range(mc.levels):
            yield structured_voronoi(mc.n0 * 2**i)
    elif mc.kind == "random":
        for i in range(mc.levels):
            yield random_voronoi(cfg.domain, mc.n_seeds * 4**i, seed=mc.seed + i,
                                 lloyd_iters=mc.lloyd_iters)
    else:
        if mc.kind == "file":
            base = load_mesh(mc.path)
        else:
            base = random_voronoi(cfg.domain, mc.n_seeds, seed=mc.seed, lloyd_iters=mc.lloyd_iters)
        yield from nested_family(base, mc.levels)


def run(cfg, progress=None):
    """Solve on every level and return a :class:`ConvergenceReport`.

    Exact errors are reported when the right-hand side carries a
    manufactured solution; otherwise relative differences between
    consecutive nested levels. ``progress`` is an optional callable
    receiving one status string per level.
    """
    cfg.validate()
    f = get_rhs(cfg.rhs)
    exact = hasattr(f, "u")
    if not exact and cfg.mesh.kind not in ("nested", "file"):
        raise ConfigError("relative errors need a nested mesh family")
    report = ConvergenceReport(k=cfg.k, title=f"{cfg.name}, k = {cfg.k}")
    report.extras["domain"] = cfg.domain
    report.extras["beta, gamma"] = f"{cfg.beta:g}, {cfg.gamma:g}"
    report.extras["errors"] = "exact" if exact else "relative between consecutive levels"
    if cfg.expected_rate is not None:
        report.extras["expected rate"] = f"{cfg.expected_rate:.4f}"
    prev = None
    for level, mesh in enumerate(mesh_levels(cfg)):
        try:
            space = VirtualElementSpace(mesh, cfg.k)
            if cfg.dump_matrices:
                dump_coo(space.stiffness, f"{cfg.dump_matrices}_level{level}.coo")
            sol = solve(mesh, cfg.k, f, cfg.beta, cfg.gamma, space=space)
            bdry, _ = boundary_tangential_error(sol)
            if exact:
                errs = dict(e_u=l2_error_u(sol, f.u), e_xi=h1_broken_error_xi(sol, f.grad_xi))
            elif prev is None:
                errs = dict(e_u=np.nan, e_xi=np.nan)
            else:
                parent = mesh.parent_of_cell
                errs = dict(e_u=inter_level_relative_u(prev, sol, parent),
                            e_xi=inter_level_relative_xi(prev, sol, parent))
        except QuadCurlError as exc:
            raise PipelineError(f"level {level}: {exc}") from exc
        report.add_level(mesh.h, sol.n_dofs, coeffs=sol.coeffs, **errs, e_bdry=bdry)
        if progress is not None:
            progress(f"level {level}: h = {mesh.h:.4e}, dofs = {sol.n_dofs}")
        prev = sol
    if cfg.output:
        report.to_csv(cfg.output)
    md = cfg.markdown or (os.path.splitext(cfg.output)[0] + ".md" if cfg.output else None)
    if md:
        with open(md, "w") as fh:
            fh.write(report.to_markdown())
    return report
