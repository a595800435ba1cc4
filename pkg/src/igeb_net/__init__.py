"""Simulation and Lyapunov certification for networks of intrinsic
geometrically exact beams (IGEB) with boundary velocity feedback."""

__version__ = "0.1.0"

from .beam import BeamParams, ParamField, RotationField
from .certify import Certificate, build_weight, check_certificate, lyapunov_value
from .diagonal import build_diagonalization, build_nodal_coupling, transparent_gain
from .errors import IgebError, ParseError, ValidationError
from .network import InitialDatum, NetworkScenario, NetworkTopology, NodeCondition, check_compatibility
from .scenario import load_scenario, scenario_hash, serialize
from .simulate import NetworkSolver, SimConfig, fit_decay_rate, simulate

__all__ = [
    "BeamParams", "ParamField", "RotationField",
    "Certificate", "build_weight", "check_certificate", "lyapunov_value",
    "build_diagonalization", "build_nodal_coupling", "transparent_gain",
    "IgebError", "ParseError", "ValidationError",
    "InitialDatum", "NetworkScenario", "NetworkTopology", "NodeCondition", "check_compatibility",
    "load_scenario", "scenario_hash", "serialize",
    "NetworkSolver", "SimConfig", "fit_decay_rate", "simulate",
]
