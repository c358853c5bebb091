"""Tendon-sheath hysteresis identification and SSTL-based feedforward compensation."""

from .control import CompensatorConfig, controller_step, run_closed_loop
from .errors import ConfigError, DegenerateDataError, IdentificationError, SSTLError, TrainingDivergence
from .ident import IdentSpec, identify_params, segment_loop
from .plant import HysteresisParams, Phase, PlantGeometry, run_plant, simulate_trace, sstl_twin

__version__ = "0.1.0"

__all__ = [
    "CompensatorConfig",
    "ConfigError",
    "DegenerateDataError",
    "HysteresisParams",
    "IdentSpec",
    "IdentificationError",
    "Phase",
    "PlantGeometry",
    "SSTLError",
    "TrainingDivergence",
    "controller_step",
    "identify_params",
    "run_closed_loop",
    "run_plant",
    "segment_loop",
    "simulate_trace",
    "sstl_twin",
]
