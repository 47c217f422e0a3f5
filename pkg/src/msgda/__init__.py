"""Stochastic GDA/OGDA and their multistage variants for strongly-convex-strongly-concave
minimax problems, with verification utilities."""

__version__ = "0.1.0"

from .core import JointPoint, RegularityConstants, SaddleProblem, phi, squared_distance
from .errors import (
    CapabilityError,
    CertificationError,
    ConfigError,
    DivergenceError,
    InputError,
    MinimaxError,
    UnsafeStepsizeError,
)
from .oracle import NoiseModel, NoisyOracle
from .problems import GeneralQuadraticSaddle, ScalarBilinearQuadratic, random_quadratic, solve_saddle
from .schedules import StageSchedule, locate, mgda_schedule, mogda_schedule, preset_n1, truncate_to_budget
from .solvers import GdaState, OgdaState, Trace, gda_step, ogda_step, run_multistage, run_stage

__all__ = [
    "CapabilityError",
    "CertificationError",
    "ConfigError",
    "DivergenceError",
    "GdaState",
    "GeneralQuadraticSaddle",
    "InputError",
    "JointPoint",
    "MinimaxError",
    "NoiseModel",
    "NoisyOracle",
    "OgdaState",
    "RegularityConstants",
    "SaddleProblem",
    "ScalarBilinearQuadratic",
    "StageSchedule",
    "Trace",
    "UnsafeStepsizeError",
    "gda_step",
    "locate",
    "mgda_schedule",
    "mogda_schedule",
    "ogda_step",
    "phi",
    "preset_n1",
    "random_quadratic",
    "run_multistage",
    "run_stage",
    "solve_saddle",
    "squared_distance",
    "truncate_to_budget",
]
