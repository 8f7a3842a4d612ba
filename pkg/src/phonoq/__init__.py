"""Pulse-level simulation and analysis for a transmon processor storing its
qubits in long-lived mechanical modes: gate synthesis, circuit compilation,
open-system dynamics, tomography, benchmarking, and period-finding analysis.
"""

from .device import DeviceParams, ModeSpec, default_device
from .dynamics import ScheduleEngine, SimOptions
from .gates import CPhiParams, solve_cphi
from .linalg import DensityMatrix, OperatorMatrix, SpaceLayout, SuperOperator

__all__ = [
    "DeviceParams",
    "ModeSpec",
    "default_device",
    "ScheduleEngine",
    "SimOptions",
    "CPhiParams",
    "solve_cphi",
    "DensityMatrix",
    "OperatorMatrix",
    "SpaceLayout",
    "SuperOperator",
]

__version__ = "0.1.0"
