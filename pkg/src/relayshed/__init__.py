"""Worst-case relay attack interdiction toolkit.

Computes the network-flow lower bound (NFLB) for the worst-case relay
attack problem on transmission grids, builds the competing single-level
reformulations, and ships the supporting theory checks (injection shift
factor flows, uncongested-network sufficiency bounds, total-unimodularity
audits) as executable code.
"""

from relayshed.netmodel import (
    Budget,
    Bus,
    Generator,
    Line,
    Network,
    Relay,
    RelayMap,
    aggregate_generators,
    budget_from_percentage,
    generate_relay_map,
    parse_matpower,
    total_demand,
)

__all__ = [
    "Budget",
    "Bus",
    "Generator",
    "Line",
    "Network",
    "Relay",
    "RelayMap",
    "aggregate_generators",
    "budget_from_percentage",
    "generate_relay_map",
    "parse_matpower",
    "total_demand",
]

__version__ = "0.1.0"
