"""Coherence-driven inference: LLM-compiled coherence graphs, max-cut solving, Gibbs weighting."""

from .aggregate import convergence_profile, median_graph, pick_sample_size
from .compiler import build_prompt, compile_graph, parse_rated_edges, rating_to_weight, sample_graphs
from .errors import CDIError
from .gibbs import EnergySpectrum, analyze_spectrum, gibbs_weights, solve_beta, suggest_k
from .graph import CoherenceGraph, Cut, coherence
from .outcomes import OutcomeSpace, mixture, table_from_rejection
from .propositions import Proposition, PropositionFile, load_propositions, parse_propositions
from .solver import ConstraintSet, anneal_max_cut, enumerate_cuts, optimal_cuts

__version__ = "0.1.0"

__all__ = [
    "CDIError",
    "CoherenceGraph",
    "ConstraintSet",
    "Cut",
    "EnergySpectrum",
    "OutcomeSpace",
    "Proposition",
    "PropositionFile",
    "analyze_spectrum",
    "anneal_max_cut",
    "build_prompt",
    "coherence",
    "compile_graph",
    "convergence_profile",
    "enumerate_cuts",
    "gibbs_weights",
    "load_propositions",
    "median_graph",
    "mixture",
    "optimal_cuts",
    "parse_propositions",
    "parse_rated_edges",
    "pick_sample_size",
    "rating_to_weight",
    "sample_graphs",
    "solve_beta",
    "suggest_k",
    "table_from_rejection",
]
