"""Joint baseband/EM precoding codebooks and localization bounds for
electromagnetically reconfigurable antenna arrays.

Submodules:
    scene                  geometry, channel, array response, signal synthesis
    shod                   spherical-harmonic basis and sphere quadrature
    patterns               finite-state radiation-pattern libraries
    response_fim           joint responses, Fisher information, error bounds
    codebook_synthesis     closed-form codebooks for the synthesis model
    codebook_finite_state  BCD state selection and admissible codebooks
    power_alloc            robust minimax power allocation
    localization           two-stage maximum-likelihood position estimation
    harness                CSV experiment runner
    cli                    command-line entry point
"""

from . import (
    codebook_finite_state,
    codebook_synthesis,
    harness,
    localization,
    patterns,
    power_alloc,
    response_fim,
    scene,
    shod,
)

__all__ = [
    "codebook_finite_state",
    "codebook_synthesis",
    "harness",
    "localization",
    "patterns",
    "power_alloc",
    "response_fim",
    "scene",
    "shod",
]

__version__ = "0.1.0"
