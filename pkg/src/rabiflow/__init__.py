"""Interpolated Rabinowitz action functionals on discretized loop spaces of
products of symplectic planes."""
from .kernels import BACKEND
from .geometry import Coupling, Factor, ProductSystem
from .loopspace import FlowState, Loop, TorusShift
from .functionals import action, gradient, grad_norm
from .critical import CriticalOrbit, realize_loop, refine_full, solve_reduced

__all__ = [
    "BACKEND",
    "Coupling",
    "CriticalOrbit",
    "Factor",
    "FlowState",
    "Loop",
    "ProductSystem",
    "TorusShift",
    "action",
    "grad_norm",
    "gradient",
    "realize_loop",
    "refine_full",
    "solve_reduced",
]
__version__ = "0.1.0"
