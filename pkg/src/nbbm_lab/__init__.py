"""N-BBM workbench: particle simulation, barrier envelopes and free-boundary numerics."""
from __future__ import annotations

from .density import DensityGrid, cut, cut_point, heat_grow, make_density, tail
from .barriers_macro import squeeze, squeeze_level
from .bbm_sim import nbbm, simulate_forest
from .barriers_micro import coupled_triple
from .fbp import traveling_wave
from .harness import ExperimentConfig, run_experiment

__all__ = [
    "DensityGrid", "cut", "cut_point", "heat_grow", "make_density", "tail",
    "squeeze", "squeeze_level", "nbbm", "simulate_forest", "coupled_triple",
    "traveling_wave", "ExperimentConfig", "run_experiment",
]
__version__ = "0.1.0"
