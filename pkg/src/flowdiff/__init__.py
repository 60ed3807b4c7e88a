"""flowdiff: l2-norm flow diffusion solver on weighted undirected graphs."""

from .errors import (FeasibilityError, FlowDiffError, GraphParseError,
                     NumericalError, UsageError, VerificationError)
from .graph import (Graph, conductance, emit_edge_list, laplacian_apply,
                    parse_edge_list, potential_flow, residue, sweep_cut)
from .instance import (DiffusionInstance, EnergyReport, compress_instance,
                       make_l2_instance)
from .vwf import Vwf, compress, decompose_bregman, round_pow
from .vwftree import VwfTree
from .eliminate import RecoveryMap, vertex_elimination
from .sparsify import (JTree, RootedForest, canonical_jtree, decompose_tree,
                       find_forest, jtree_sparsify, low_stretch_tree,
                       spectral_sparsify_core)
from .oracle import pencil_bounds, qp_solve_exact, vwf_min_scan
from .solver import Solver, SolverConfig, SolveStats, l2_diffusion, solve_diffusion

__version__ = "0.1.0"

__all__ = [
    "DiffusionInstance", "EnergyReport", "FeasibilityError", "FlowDiffError",
    "Graph", "GraphParseError", "JTree", "NumericalError", "RecoveryMap",
    "RootedForest", "Solver", "SolverConfig", "SolveStats", "UsageError",
    "VerificationError", "Vwf", "VwfTree", "canonical_jtree", "compress",
    "compress_instance", "conductance", "decompose_bregman", "decompose_tree",
    "emit_edge_list", "find_forest", "jtree_sparsify", "l2_diffusion",
    "laplacian_apply", "low_stretch_tree", "make_l2_instance",
    "parse_edge_list", "pencil_bounds", "potential_flow", "qp_solve_exact",
    "residue", "round_pow", "solve_diffusion", "spectral_sparsify_core",
    "sweep_cut", "vertex_elimination", "vwf_min_scan",
]
