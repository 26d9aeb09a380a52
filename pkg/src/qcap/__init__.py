"""Numerical toolkit for classical communication over quantum channels.

Holevo capacities with optimality certificates, code construction and
evaluation, and checks of finite-blocklength converse bounds. Entropic
quantities are in nats.
"""
from .capacity import CapacityResult, SolverConfig, holevo_capacity, lemma2_certificate
from .codes import ClassicalQuantumCode, CodePerformance, evaluate_code, pgm_decoder, random_codebook
from .converse import (
    BoundReport,
    SemigroupMap,
    lemma5_check,
    proof_chain_verify,
    second_order_converse_check,
    theorem1_check,
)
from .entropy import holevo_quantity, measured_renyi_divergence, petz_renyi_divergence, relative_entropy
from .errors import QcapError
from .states import Ensemble, Povm, QuantumChannel, depolarizing, identity_channel

__version__ = "0.1.0"
