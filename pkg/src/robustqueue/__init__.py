"""Heavy-traffic scheduling game with adversarial job-size uncertainty:
HJB solver, prelimit queue simulator and limiting diffusion simulator."""

from .reflection import ReflectedPair, SampledPath, lindley_path, lindley_step, skorohod_map
from .uncertainty import (DriftVarPoint, GammaLaw, JobDistribution, TwoPointLaw,
                          UncertaintyClass, class_from_config, convex_hull, decision_regions,
                          dominating_set, extreme_dominating, finite_class, gamma_limit_class,
                          hamiltonian, hausdorff_distance, make_gamma, make_two_point,
                          prelimit_coeffs, sample)
from .hjb import (AnalyticSolution, FeedbackPolicy, HJBConvergenceError, HJBSolution,
                  StructureError, analytic_singleton, extract_policy, solve_hjb,
                  two_mode_threshold)
from .queue_sim import (Feedback, IIDRandom, PathStats, Static, SystemConfig, estimate_cost,
                        feedback_adversary, high_priority_workload, normalize_costs,
                        rsp_gap, run_replications, simulate)
from .mcp_sim import DiffusionSpec, estimate_mcp_value, euler_reflected

__version__ = "0.1.0"
