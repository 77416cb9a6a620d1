"""Verification of convolutional networks by abstraction-refinement.

Public surface: network construction and evaluation, bound propagation with
selectable max relaxations, a complete branch-and-bound verifier, the
abstraction-refinement loop, and versioned file formats.
"""

from .abstraction import (AbstractionState, NoConvolutionalPrefix, abstract,
                          lift_cex, refine, select_abstraction_layer)
from .bounds import (Bounds, RELAXATIONS, build_query_lp, interval_pass,
                     lp_tighten)
from .cegar import (ALL_ABSTRACT, FULL_NETWORK, LP_INFEASIBLE,
                    PARTIAL_REFINEMENT, CegarConfig, RunReport,
                    solve_with_abstraction)
from .lp import LinearExpr, LpOutcome, LpProblem, LpSolverError, solve
from .network import (ConvolutionLayer, InputLayer, Layer, LayerShape,
                      MaxPoolLayer, Network, NetworkStructureError, NeuronId,
                      OutputLayer, ReluLayer, WeightedSumLayer, flatten)
from .policies import POLICIES, TestSet, compute_scores
from .query import (Verdict, VerificationQuery, build_adversarial,
                    check_concrete)
from .verifier import verify

__all__ = [
    "AbstractionState", "NoConvolutionalPrefix", "abstract", "lift_cex",
    "refine", "select_abstraction_layer",
    "Bounds", "RELAXATIONS", "build_query_lp", "interval_pass", "lp_tighten",
    "ALL_ABSTRACT", "FULL_NETWORK", "LP_INFEASIBLE", "PARTIAL_REFINEMENT",
    "CegarConfig", "RunReport", "solve_with_abstraction",
    "LinearExpr", "LpOutcome", "LpProblem", "LpSolverError", "solve",
    "ConvolutionLayer", "InputLayer", "Layer", "LayerShape", "MaxPoolLayer",
    "Network", "NetworkStructureError", "NeuronId", "OutputLayer", "ReluLayer",
    "WeightedSumLayer", "flatten",
    "POLICIES", "TestSet", "compute_scores",
    "Verdict", "VerificationQuery", "build_adversarial", "check_concrete",
    "verify",
]

__version__ = "0.1.0"
