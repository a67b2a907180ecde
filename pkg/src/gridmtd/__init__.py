"""Moving-target defense against coordinated cyber-physical attacks on DC grid models."""
from .case_io import GridCase, SimConfig, load_case, load_config, parse_case
from .dispatch import algorithm1_cost, solve_opf, trace_algorithm1
from .estimation import bdd_residual, build_model
from .game import build_game, mixed_ne, pure_ne
from .mtd import DfactsPlan, deploy_dfacts, detection_probability, is_protected, resolve_deployment

__version__ = "0.1.0"
