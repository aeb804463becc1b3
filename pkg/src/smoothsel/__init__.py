"""Exact-arithmetic engine for constrained smooth interpolation.

Subpackages follow the pipeline: jets (exact Taylor data and index
orders), polyhedra (rational LP and projection with a symbolic scale),
shapefields (refinements and the constructive basis lemmas), finiteness
(Whitney seminorms and subset functionals), selection (dyadic
decomposition, partition of unity, gluing, end-to-end solvers), and cli
(document formats and commands).
"""

from .config import DEFAULT_CONFIG, EngineConfig
from .exactq import Q, Rat, qstr, parse_q

__all__ = ["DEFAULT_CONFIG", "EngineConfig", "Q", "Rat", "qstr", "parse_q"]

__version__ = "0.1.0"
