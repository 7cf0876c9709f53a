"""Discrete-event simulator of multi-hop UAV networks under routing attacks.

The package models an airborne ad-hoc network (UAVs plus ground stations),
on-demand route discovery, four malicious node behaviors (wormhole tunneling,
black-hole route forgery, probabilistic gray-hole dropping, fake-information
dissemination) and an immune-inspired defense that vets candidate routes with
hello probing, reverse packet-count audits, signal-strength anomaly filtering
and negative-selection detectors before committing traffic to them.
"""

__version__ = "0.1.0"

from .netmodel import Box, Role, Topology, UavNode, neighbors, ppp_deploy, rx_signal_strength
from .simcore import Event, RngRegistry, Scheduler, SchedulingError
from .scenario import ConfigError, ScenarioConfig, load_scenario, preset

__all__ = [
    "Box",
    "ConfigError",
    "Event",
    "Role",
    "RngRegistry",
    "ScenarioConfig",
    "Scheduler",
    "SchedulingError",
    "Topology",
    "UavNode",
    "load_scenario",
    "neighbors",
    "ppp_deploy",
    "preset",
    "rx_signal_strength",
]
