"""Looped fixed-precision networks, RM-4 programs and complexity bounds between them."""

__version__ = "0.1.0"

from .precision import DYADIC, INT8, TERNARY, PrecisionSpec, parse_spec
from .netvm import HardAttention, Network, PerPositionBias, TiedAffine, nonzero_count, run, validate
from .codec import decode, encode, k_upper_via_codec, prune
from .machine import assemble, interpret, load_program, search_k_upper, kt_upper
from .compiler import CapacityConfig, compile_program
from .witness import Permutation, build_perm_network, perm_string, tightness_report
from .complexity import ArchBounds, mdl_penalty, n_upper, prior_estimate, sandwich_verify

__all__ = [
    "DYADIC", "INT8", "TERNARY", "PrecisionSpec", "parse_spec",
    "HardAttention", "Network", "PerPositionBias", "TiedAffine", "nonzero_count", "run", "validate",
    "decode", "encode", "k_upper_via_codec", "prune",
    "assemble", "interpret", "load_program", "search_k_upper", "kt_upper",
    "CapacityConfig", "compile_program",
    "Permutation", "build_perm_network", "perm_string", "tightness_report",
    "ArchBounds", "mdl_penalty", "n_upper", "prior_estimate", "sandwich_verify",
]
