"""Registry of the example control systems.

Conventions (they vary across the literature):

* ``heisenberg`` uses the symmetric frame ``d1 - x2/2 d3``, ``d2 + x1/2 d3``,
  so that ``[f1, f2] = d3``.
* ``martinet`` uses ``d2 + x1^2/2 d3``, so that ``[f1, [f1, f2]] = d3``.
* ``acs3`` is the pair ``d1``, ``(1 - x1) d2 + x1^2 d3`` whose minimum time
  function can fail to be locally Lipschitz.
"""
from __future__ import annotations

import difflib
from fractions import Fraction

from .fields import ControlSystem, PolyVectorField

F = Fraction


def _euclidean2() -> ControlSystem:
    return ControlSystem(
        (PolyVectorField.coordinate(2, 0), PolyVectorField.coordinate(2, 1)), name="euclidean2")


def _grushin() -> ControlSystem:
    f1 = PolyVectorField.from_terms(2, [[(1, (0, 0))], []], name="f1")
    f2 = PolyVectorField.from_terms(2, [[], [(1, (1, 0))]], name="f2")
    return ControlSystem((f1, f2), name="grushin")


def _heisenberg() -> ControlSystem:
    f1 = PolyVectorField.from_terms(3, [[(1, (0, 0, 0))], [], [(F(-1, 2), (0, 1, 0))]])
    f2 = PolyVectorField.from_terms(3, [[], [(1, (0, 0, 0))], [(F(1, 2), (1, 0, 0))]])
    return ControlSystem((f1, f2), name="heisenberg")


def _martinet() -> ControlSystem:
    f1 = PolyVectorField.coordinate(3, 0)
    f2 = PolyVectorField.from_terms(3, [[], [(1, (0, 0, 0))], [(F(1, 2), (2, 0, 0))]])
    return ControlSystem((f1, f2), name="martinet")


def _acs3() -> ControlSystem:
    f1 = PolyVectorField.coordinate(3, 0)
    f2 = PolyVectorField.from_terms(
        3, [[], [(1, (0, 0, 0)), (-1, (1, 0, 0))], [(1, (2, 0, 0))]])
    return ControlSystem((f1, f2), name="acs3")


REGISTRY = {
    "euclidean2": _euclidean2,
    "grushin": _grushin,
    "heisenberg": _heisenberg,
    "martinet": _martinet,
    "acs3": _acs3,
}


class UnknownSystemError(KeyError):
    def __str__(self):
        return self.args[0]


def registry_lookup(name: str) -> ControlSystem:
    try:
        return REGISTRY[name]()
    except KeyError:
        close = difflib.get_close_matches(name, REGISTRY, n=3)
        hint = f" (did you mean {', '.join(close)}?)" if close else ""
        raise UnknownSystemError(
            f"unknown system {name!r}{hint}; available: {', '.join(sorted(REGISTRY))}"
        ) from None
