"""Simulation and analysis toolkit for a four-state contact process
with sterile-release slowdowns: exact event-driven simulation, the
marked-Poisson schedule construction with path-reachability cross
checks, increasing couplings, Monte Carlo phase-diagram estimation,
mean-field equilibria, and quenched-environment survival bounds."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    BoxGeometry,
    Configuration,
    compare_configs,
    compare_states,
    neighbor_counts,
    wild_set,
)
from .params import Params  # noqa: F401
