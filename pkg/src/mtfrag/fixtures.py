"""Named models with closed-form answers, shared by tests and the CLI."""

import numpy as np

from .fragmentation import DislocationMeasure, MassPartition
from .map_model import MapParams, SubordinatorParams

SWAP = np.array([[-1.0, 1.0], [1.0, -1.0]])


def drift_pair():
    """Two types swapping at rate 1 with drifts 1 and 2; ``Phi(1) = [[2, -1], [-1, 3]]``."""
    return MapParams(SWAP, [SubordinatorParams(drift=1.0), SubordinatorParams(drift=2.0)])


def killed_pair():
    """:func:`drift_pair` with unit killing in both types; ``F(1) = (5/11, 4/11)``."""
    return MapParams(
        SWAP,
        [SubordinatorParams(kill=1.0, drift=1.0), SubordinatorParams(kill=1.0, drift=2.0)],
    )


def unit_drift_killed():
    """``xi_t = t`` killed at rate 1, so ``I`` is uniform on ``(0, 1)``."""
    return MapParams(np.zeros((1, 1)), [SubordinatorParams(kill=1.0, drift=1.0)])


def pure_killing():
    """Zero position killed at rate 1, so ``I`` is ``Exp(1)``."""
    return MapParams(np.zeros((1, 1)), [SubordinatorParams(kill=1.0)], allow_degenerate=True)


def unit_drift():
    """``xi_t = t`` forever, so ``I = 1``."""
    return MapParams(np.zeros((1, 1)), [SubordinatorParams(drift=1.0)])


def _single(*parts, weight=1.0):
    return [(weight, MassPartition(tuple(parts)))]


def binary():
    """One type splitting into two halves at rate 1 (``p* = 1``)."""
    return DislocationMeasure((_single((0.5, 0), (0.5, 0)),))


def golden():
    """One type splitting into ``1/2`` and ``1/4`` (``2**-p* = (sqrt 5 - 1)/2``)."""
    return DislocationMeasure((_single((0.5, 0), (0.25, 0)),))


def cyclic_halves():
    """Type 0 splits into two halves of type 1 and vice versa."""
    return DislocationMeasure((_single((0.5, 1), (0.5, 1)), _single((0.5, 0), (0.5, 0))))


def cyclic_thirds():
    """Type 0 gives two halves of type 1; type 1 gives two thirds of type 0 (``p* = 2 ln 2 / ln 6``)."""
    return DislocationMeasure((_single((0.5, 1), (0.5, 1)), _single((1 / 3, 0), (1 / 3, 0))))


def balanced_pair(q=0.8):
    """Two types whose atoms each satisfy ``sum s**q = 1``, so ``p* = q``."""
    a = 2.0 ** (-1.0 / q)
    b = 3.0 ** (-1.0 / q)
    return DislocationMeasure((
        _single((a, 0), (a, 1)),
        _single((b, 0), (b, 1), (b, 1)),
    ))


def dusty():
    """One type: total dust at rate 1, or parts ``0.4, 0.3, 0.2`` at rate 2."""
    return DislocationMeasure(([(1.0, MassPartition(())), (2.0, MassPartition(((0.4, 0), (0.3, 0), (0.2, 0))))],))


def eroding():
    """Pure erosion at rate 1 with no dislocations: ``Phi_tag(p) = p + 1``."""
    return DislocationMeasure(((),), erosion=[1.0])


MAPS = {
    "drift-pair": drift_pair,
    "killed-pair": killed_pair,
    "unit-drift-killed": unit_drift_killed,
    "pure-killing": pure_killing,
    "unit-drift": unit_drift,
}

FRAGMENTATIONS = {
    "binary": binary,
    "golden": golden,
    "cyclic-halves": cyclic_halves,
    "cyclic-thirds": cyclic_thirds,
    "balanced-pair": balanced_pair,
    "dusty": dusty,
}
