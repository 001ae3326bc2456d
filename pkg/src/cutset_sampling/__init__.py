"""Cutset sampling for discrete Bayesian networks.

Exact inference (join tree, cutset conditioning, enumeration), loop- and
w-cutset discovery, iterative belief propagation, Gibbs and cutset samplers,
importance samplers, error metrics and seeded benchmark generators.
"""

__version__ = "0.1.0"

from .exact import cutset_conditioning, evidence_probability, jtc_posteriors
from .graph import find_loop_cutset, find_w_cutset, nested_w_cutsets
from .model import (
    CapExceededError,
    Marginals,
    Network,
    NetworkError,
    ZeroEvidenceError,
    brute_force_posteriors,
    load_evidence,
    load_network,
    make_network,
)
from .propagation import ibp_posteriors
from .sampling import (
    SamplingConfig,
    aisbn_run,
    cutset_gibbs_run,
    gibbs_run,
    likelihood_weighting_run,
)

__all__ = [
    "__version__",
    "CapExceededError",
    "Marginals",
    "Network",
    "NetworkError",
    "SamplingConfig",
    "ZeroEvidenceError",
    "aisbn_run",
    "brute_force_posteriors",
    "cutset_conditioning",
    "cutset_gibbs_run",
    "evidence_probability",
    "find_loop_cutset",
    "find_w_cutset",
    "gibbs_run",
    "ibp_posteriors",
    "jtc_posteriors",
    "likelihood_weighting_run",
    "load_evidence",
    "load_network",
    "make_network",
    "nested_w_cutsets",
]
