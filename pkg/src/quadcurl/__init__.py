"""Virtual element solver for the planar quad-curl problem via a Hodge decomposition."""

from .assembly import ScalarField, VirtualElementSpace, solve_dirichlet, solve_neumann_mean
from .element import LocalElements, compute_pi0, compute_pi1
from .estimator import QuadCurlVEM
from .exceptions import (
    ConfigError, ElementError, MeshFormatError, MeshGenerationError, PipelineError,
    QuadCurlError, RefinementError, SolverError, TopologyError,
)
from .experiments import ExperimentConfig, MeshConfig, parse_config, preset, run
from .hodge import HodgeSolution, solve
from .mesh import (
    DOMAINS, DomainSpec, PolygonMesh, gen_random_voronoi, gen_structured_voronoi, load_mesh,
    nested_family, random_voronoi, refine_quads, refine_to_quads, save_mesh, structured_voronoi,
)
from .metrics import ConvergenceReport
from .problems import get_rhs

__version__ = "0.1.0"
