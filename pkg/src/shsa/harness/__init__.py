"""Highway sensor-field simulation: bus, faults, tracker and the self-healing loop."""

from .bus import BusMessage, TopicBus
from .events import EventLog, parse_log
from .faults import FaultInjector, inject_fault
from .loop import Action, ShsaNode, TickState, VehicleView, shsa_control_loop
from .scenario import (
    FaultInjection,
    FogSpec,
    RadarSpec,
    Scenario,
    ShsaParams,
    VehicleSpec,
    parse_scenario_file,
    serialize_scenario,
    validate_scenario,
)
from .simulation import Metrics, SimulationResult, compute_metrics, replay_log, run_scenario
from .tracker import (
    TrackState,
    TrackStatus,
    adapt_measurement_covariance,
    associate_measurements,
    kf_step,
)

__all__ = [
    "BusMessage",
    "TopicBus",
    "EventLog",
    "parse_log",
    "FaultInjector",
    "inject_fault",
    "Action",
    "ShsaNode",
    "TickState",
    "VehicleView",
    "shsa_control_loop",
    "FaultInjection",
    "FogSpec",
    "RadarSpec",
    "Scenario",
    "ShsaParams",
    "VehicleSpec",
    "parse_scenario_file",
    "serialize_scenario",
    "validate_scenario",
    "Metrics",
    "SimulationResult",
    "compute_metrics",
    "replay_log",
    "run_scenario",
    "TrackState",
    "TrackStatus",
    "adapt_measurement_covariance",
    "associate_measurements",
    "kf_step",
]
