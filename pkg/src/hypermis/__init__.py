"""Maximal independent sets in hypergraphs: randomized, derandomized and sparse variants."""
from .errors import *  # noqa: F401,F403
from .hypergraph import (Hypergraph, residualize, neighborhood, degree, degree_table,
                         envelope, is_v_constrained, finalize_mis, verify_mis, all_mis,
                         greedy_mis, is_independent, f_exponent, g_exponent)

__version__ = "0.1.0"
