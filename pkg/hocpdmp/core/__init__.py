"""
hocpdmp Core Module - models, flows, simulation, skeletons and density tools
"""

from .models import (
    EmpiricalMeasure,
    IntegratorConfig,
    JumpSchedule,
    ModelSpec,
    NonInteractingSpec,
    PathRecord,
    ProductDensity,
    RateFunction,
    SimulationConfig,
)
from .model import build_neuron_model, build_non_interacting_model, load_model, neuron_params
from .runner import ExperimentRunner, RunConfig

__all__ = [
    "EmpiricalMeasure",
    "IntegratorConfig",
    "JumpSchedule",
    "ModelSpec",
    "NonInteractingSpec",
    "PathRecord",
    "ProductDensity",
    "RateFunction",
    "SimulationConfig",
    "build_neuron_model",
    "build_non_interacting_model",
    "load_model",
    "neuron_params",
    "ExperimentRunner",
    "RunConfig",
]
