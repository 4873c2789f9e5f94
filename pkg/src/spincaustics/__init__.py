"""Semiclassical phase-space analysis of spin-coupled quantum systems.

Exact and complex-trajectory coherent-state kernels for a two-state
linear curve-crossing model and the spin-kicked rotor, with caustic
detection, Stokes-line geometry and branch filtering.
"""

from .twolevel import (
    SpinState, UP, DOWN, HeavyParams, KickParams, Window,
    su2_exp, influence_heavy, influence_kick,
    eff_action_heavy, eff_potential_kick, find_z_zeros,
)
from .boundary import (
    CoherentLabel, ComplexPoint, KlauderVars, SaddleBranch,
    initial_point, solve_boundary, tangent_map_check, coherent_overlap,
)

__all__ = [
    "SpinState", "UP", "DOWN", "HeavyParams", "KickParams", "Window",
    "su2_exp", "influence_heavy", "influence_kick",
    "eff_action_heavy", "eff_potential_kick", "find_z_zeros",
    "CoherentLabel", "ComplexPoint", "KlauderVars", "SaddleBranch",
    "initial_point", "solve_boundary", "tangent_map_check", "coherent_overlap",
]
