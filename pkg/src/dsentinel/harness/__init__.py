"""Deterministic mock cloud: scripted DNS zones, virtual hosts and a release/takeover timeline."""

from .scenario import Event, Scenario, Vhost, bundled_scenarios, load_scenario, parse_scenario
from .server import HarnessHandle, HarnessNetwork, serve
from .world import World

__all__ = [
    "Event", "HarnessHandle", "HarnessNetwork", "Scenario", "Vhost", "World",
    "bundled_scenarios", "load_scenario", "parse_scenario", "serve",
]
