"""Engine-wide configuration.

The underlying theory asserts existence of constants without giving
values; every such constant is a knob here with a default, and every
construction that depends on one is post-verified rather than trusted.
Budgets convert pathological blowup into clean errors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .exactq import Q, Rat


@dataclass(frozen=True)
class EngineConfig:
    # Polyhedra: Fourier-Motzkin row cap and the row count that triggers
    # the internal all-M redundancy prune during elimination.
    fm_row_cap: int = 20000
    fm_prune_trigger: int = 40

    # Jets: label_depth enumerates all subsets of M; refuse beyond this.
    label_depth_dim_cap: int = 12

    # Lifted problems: refuse jet spaces with dimension beyond this.
    lift_dim_cap: int = 15

    # Dyadic subdivision floor: sidelength 2**min_dyadic_level.
    min_dyadic_level: int = -40

    # Constructions emit certificates at C_B' = cb_prime_factor * C_B.
    # When post-verification fails there, the factor is doubled up to
    # cb_escalation_steps times before giving up.
    cb_prime_factor: int = 64
    cb_escalation_steps: int = 6

    # Transport's distance budget: |x0 - y0| <= eps0 * delta.
    eps0: Rat = Q(1, 64)

    # Relabeling: strict shrink is promised when the scaled derivative
    # matrix has an entry above this threshold.
    relabel_threshold: Rat = Q(2) ** 10
    # Accuracy parameter fed to the rescaling search inside relabel.
    relabel_accuracy: Rat = Q(1, 64)

    # Rescaling grid: lambda components are 2**(-e_i) with the exponent
    # vector enumerated by total sum e_1+...+e_n <= rescale_grid_depth.
    rescale_grid_depth: int = 48

    # Experimental recursive solver defaults.
    recursive_eps: Rat = Q(1, 1024)
    recursive_A: Rat = Q(1024)
    recursion_node_budget: int = 256

    # Certified bisection stops at this relative interval width.
    bisect_rel_width: Rat = Q(1, 2**40)

    # Geometry: dilation factors and the small-cube threshold for the
    # empty-cube local interpolant rule.
    dilate_num: int = 65
    dilate_den: int = 64
    outer_factor: int = 5
    type3_threshold: Rat = Q(1, 1024)

    # Partition of unity: transition band width as a fraction of the
    # cube sidelength (must fit inside the dilation margin 1/128).
    pou_transition: Rat = Q(1, 128)

    # Subset-enumeration budget for gamma_fp and the finiteness
    # functional (number of subsets actually enumerated).
    subset_budget: int = 20000

    @property
    def dilate(self) -> Rat:
        return Q(self.dilate_num, self.dilate_den)

    def updated(self, **changes: Any) -> "EngineConfig":
        return replace(self, **changes)


DEFAULT_CONFIG = EngineConfig()
