"""Reference plant: six states, two delayed channels, one input, ``r = 1.6``.

``published_gains`` is a controller for this plant reported to 3 decimals,
with ``K2`` given as a quartic in ``s``.
"""

from __future__ import annotations

import numpy as np

from .ddesim import PlantModel
from .polyalg import Interval, PolyMat1
from .synthesis import ControllerGains, SynthesisProblem

__all__ = ["reference_problem", "reference_plant", "published_gains", "REFERENCE_DELAY"]

REFERENCE_DELAY = 1.6

_A = np.array(
    [
        [0.0, 0.5, 0.0, 0.0, 0.0, 0.0],
        [-0.5, -0.5, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.1, 1.0, 0.0, 0.0],
        [0.0, 0.0, -2.0, 0.2, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, -2.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, -0.9],
    ]
)
_B = np.zeros((6, 2))
_B[0, 0] = 0.5
_B[5, 1] = 1.0
_F = np.array([[1.0], [0.0], [0.0], [0.0], [0.0], [1.0]])
_C = np.array([[-0.2, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]])
_D = np.zeros((2, 2))

_K0 = np.array([[-1.874, 2.232, -0.830, 3.099, 0.030, -1.033]])
_K1 = np.array([[-0.239, -0.343]])
# rows: coefficients of s^0..s^4 for the two delayed channels
_K2 = np.array(
    [
        [-0.246, 0.221, 0.122, -0.012, -0.032],
        [0.238, -0.398, 0.007, 0.037, 0.010],
    ]
)


def reference_problem(degree: int = 2, **options) -> SynthesisProblem:
    return SynthesisProblem(A=_A, B=_B, C=_C, D=_D, F=_F, r=REFERENCE_DELAY, degree=degree, **options)


def reference_plant() -> PlantModel:
    return PlantModel(_A, _B, _C, _D, REFERENCE_DELAY, F=_F)


def published_gains() -> ControllerGains:
    coeffs = _K2.T[:, None, :]  # (5, 1, 2)
    K2 = PolyMat1(coeffs, Interval(REFERENCE_DELAY))
    return ControllerGains.from_polynomial(_K0, _K1, K2)
