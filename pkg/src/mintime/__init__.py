"""Minimum time functions of driftless control systems.

Eikonal solvers, characteristic-set geometry, abnormal and normal extremals,
and regularity diagnostics for value functions of ``y' = sum_i u_i f_i(y)``.
"""
from __future__ import annotations

from .fields import ControlSystem, PolyVectorField, hormander_rank, lie_bracket
from .grid import TargetSet, UniformGrid, ValueField
from .systems import REGISTRY, registry_lookup

__version__ = "0.1.0"

__all__ = ["ControlSystem", "PolyVectorField", "REGISTRY", "TargetSet", "UniformGrid",
           "ValueField", "hormander_rank", "lie_bracket", "registry_lookup", "__version__"]
