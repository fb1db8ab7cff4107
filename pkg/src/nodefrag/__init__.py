"""Fragmentation at nodes of Lévy trees: simulation and verification."""
from .exponent import (BranchingMechanism, General, LevyMeasureSpec, Stable, Tilted,
                       TruncatedMechanism, check_admissible, eval_psi, eval_psi_prime,
                       mark_intensity, nu1_constant, pi_star_tail_stable, psi_inverse, tilt,
                       truncate)
from .sampler import RngStream
from .tree import (ConditioningError, Forest, JumpTree, OversizeTreeError,
                   build_conditioned, build_excursion_tree, excursion_path,
                   grow_conditioned_forest, grow_forest)
from .fragmentation import (assign_cut_times, dislocation_timeline, forest_fragments_at,
                            forest_timeline, fragment_forest, fragments_at, prune,
                            tagged_mass_at)
from .dislocation import (node_functional_A, node_functional_A_closed, nu1_functional_stable,
                          sample_mu_discrete, sample_mu_truncated)
from .stats import McEstimate
from .verify import CHECKS, CheckReport, run_checks

__version__ = "0.1.0"
