"""Semidefinite program assembly, solving and export."""

from .affine import Affine, AffinePoly1, AffinePoly2, as_affine, stack
from .backends import BACKENDS
from .problem import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ConicData,
    SdpProblem,
    SdpSolution,
    Variable,
    extract,
    solve,
    verify,
)
from .sdpa import read_sdpa, write_sdpa

__all__ = [
    "Affine",
    "AffinePoly1",
    "AffinePoly2",
    "as_affine",
    "stack",
    "BACKENDS",
    "ConicData",
    "SdpProblem",
    "SdpSolution",
    "Variable",
    "extract",
    "solve",
    "verify",
    "read_sdpa",
    "write_sdpa",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]
