"""Byzantine-resilient distributed state estimation for LTI systems over directed sensor networks."""

from .adversary import (NO_ATTACK, AttackScript, Constant, Honest, PerRecipient, RandomUniform,
                        ScaledTruth, ScriptedRounds, Silent)
from .errors import (ConfigurationError, DesignPhaseError, ScaleLimitError, ScenarioParseError,
                     SensorFaultError, UnsupportedMatrixError)
from .estimation import NodeEstimator, design_observer_gain, trimmed_mean
from .graph_analysis import (SensorNetwork, check_r_feasible, find_pair_cut, is_f_local, is_f_total,
                             is_r_reachable, is_strongly_r_robust, max_tolerable_f_bound,
                             minimal_critical_sets, percolate)
from .medag import Medag, construct_medag, validate_medag
from .netgen import GenSpec, SourceRule, er_threshold_values, feasibility_monte_carlo, generate, rgg_threshold_values
from .plant import LtiPlant
from .simulator import InitialRange, Scenario, SimulationTrace, run, summarize
from .spectral import SpectralBasis, build_basis

__all__ = [
    "NO_ATTACK", "AttackScript", "Constant", "Honest", "PerRecipient", "RandomUniform", "ScaledTruth",
    "ScriptedRounds", "Silent",
    "ConfigurationError", "DesignPhaseError", "ScaleLimitError", "ScenarioParseError", "SensorFaultError",
    "UnsupportedMatrixError",
    "NodeEstimator", "design_observer_gain", "trimmed_mean",
    "SensorNetwork", "check_r_feasible", "find_pair_cut", "is_f_local", "is_f_total", "is_r_reachable",
    "is_strongly_r_robust", "max_tolerable_f_bound", "minimal_critical_sets", "percolate",
    "Medag", "construct_medag", "validate_medag",
    "GenSpec", "SourceRule", "er_threshold_values", "feasibility_monte_carlo", "generate", "rgg_threshold_values",
    "LtiPlant",
    "InitialRange", "Scenario", "SimulationTrace", "run", "summarize",
    "SpectralBasis", "build_basis",
]
