"""Command line entry point: ``quadcurl run`` and ``quadcurl mesh``."""

import argparse
import sys

from .exceptions import QuadCurlError
from .experiments import load_config, preset, run
from .mesh import (
    DOMAINS, load_mesh, random_voronoi, refine_quads, refine_to_quads, save_mesh,
    shape_regularity, structured_voronoi,
)


def _cmd_run(args):
    if args.config:
        cfg = load_config(args.config)
        if args.k is not None or args.levels is not None or args.seed is not None:
            raise QuadCurlError("--k, --levels and --seed only apply to --preset")
    else:
        cfg = preset(args.preset, k=args.k or 1, levels=args.levels, seed=args.seed or 0)
    if args.out:
        cfg.output = args.out
    if args.markdown:
        cfg.markdown = args.markdown
    if args.dump_matrices:
        cfg.dump_matrices = args.dump_matrices
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    report = run(cfg, progress=progress)
    if not cfg.output:
        sys.stdout.write(report.to_csv())
    return 0


def _cmd_mesh_gen(args):
    if args.kind == "structured":
        mesh = structured_voronoi(args.n)
    else:
        mesh = random_voronoi(args.domain, args.n, seed=args.seed, lloyd_iters=args.lloyd_iters)
    save_mesh(mesh, args.out)
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, h = {mesh.h:.4e}")
    return 0


def _cmd_mesh_refine(args):
    mesh = load_mesh(args.mesh)
    for _ in range(args.times):
        quads = all(len(c) == 4 for c in mesh.cells)
        mesh = refine_quads(mesh) if quads and not args.split else refine_to_quads(mesh)
        args.split = False
    save_mesh(mesh, args.out)
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, h = {mesh.h:.4e}")
    return 0


def _cmd_mesh_info(args):
    mesh = load_mesh(args.mesh)
    sr = shape_regularity(mesh)
    sizes = sorted({len(c) for c in mesh.cells})
    print(f"vertices        {mesh.n_vertices}")
    print(f"edges           {mesh.n_edges}")
    print(f"cells           {mesh.n_cells}")
    print(f"holes           {mesh.betti}")
    print(f"cell sizes      {sizes[0]}..{sizes[-1]}")
    print(f"h               {sr.h:.4e}")
    print(f"min edge / h_D  {sr.min_edge_ratio:.4f}")
    print(f"kernel / h_D    {sr.star_kernel_ratio:.4f}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="quadcurl",
                                 description="Virtual element quad-curl solver.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a convergence experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="key = value configuration file")
    src.add_argument("--preset", choices=["exp1", "exp2", "exp3", "exp4", "exp5"])
    r.add_argument("--k", type=int, choices=[1, 2])
    r.add_argument("--levels", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="CSV output path (stdout when omitted)")
    r.add_argument("--markdown", help="markdown table path (default: next to the CSV)")
    r.add_argument("--dump-matrices", help="prefix for per-level stiffness matrix dumps")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    m = sub.add_parser("mesh", help="generate, refine or inspect meshes")
    msub = m.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="generate a Voronoi mesh")
    g.add_argument("--kind", choices=["structured", "random"], default="random")
    g.add_argument("--domain", choices=sorted(DOMAINS), default="square")
    g.add_argument("--n", type=int, required=True,
                   help="grid size (structured) or number of seeds (random)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lloyd-iters", type=int, default=100)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_mesh_gen)

    rf = msub.add_parser("refine", help="quadrilateral refinement")
    rf.add_argument("mesh")
    rf.add_argument("--times", type=int, default=1)
    rf.add_argument("--split", action="store_true",
                    help="use the barycentric split even on a quadrilateral mesh")
    rf.add_argument("--out", required=True)
    rf.set_defaults(func=_cmd_mesh_refine)

    i = msub.add_parser("info", help="print mesh statistics")
    i.add_argument("mesh")
    i.set_defaults(func=_cmd_mesh_info)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QuadCurlError, OSError, ValueError) as exc:
        print(f"quadcurl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
