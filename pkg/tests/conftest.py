"""Shared fixtures: bundled scenarios and a small hand-built network."""

import pytest

import ndrsim
from ndrsim.network import (ControlScope, DemandSpec, DetectorConfig, Link,
                            Phase, Scenario, SignalPlan, TrafficNetwork)
from ndrsim.scenario import load_scenario


@pytest.fixture(scope="session")
def corridor():
    return load_scenario(ndrsim.bundled_scenario("corridor2"))


@pytest.fixture(scope="session")
def corridor_congested():
    return load_scenario(ndrsim.bundled_scenario("corridor2_congested"))


@pytest.fixture(scope="session")
def corridor_alt():
    return load_scenario(ndrsim.bundled_scenario("corridor2_alt"))


def make_cross_scenario(main_rate=300.0, side_rate=120.0, cycle=60.0,
                        lost=10.0, main_green=25.0, offset=0.0,
                        fleet=None, signalized=True, detector_pos=100.0):
    """One junction J with a main (W->E) and a side (N->S) approach."""
    links = {
        "WI": Link("WI", "W", "J", 200.0, 10.0),
        "EO": Link("EO", "J", "E", 200.0, 10.0),
        "NI": Link("NI", "N", "J", 150.0, 10.0),
        "SO": Link("SO", "J", "S", 150.0, 10.0),
    }
    plans = {}
    if signalized:
        side_green = cycle - lost - main_green
        plans["J"] = SignalPlan(
            junction_id="J", cycle_time=cycle, lost_time=lost, offset=offset,
            phases=(
                Phase("P1", frozenset({("WI", "EO")}), 5.0,
                      cycle - lost - 5.0, main_green),
                Phase("P2", frozenset({("NI", "SO")}), 5.0,
                      cycle - lost - 5.0, side_green),
            ))
    net = TrafficNetwork(
        links=links, signal_plans=plans,
        detectors=(DetectorConfig("D1", "WI", detector_pos, 120.0),),
        zones={"ZW": "W", "ZE": "E", "ZN": "N", "ZS": "S"})
    demand = DemandSpec(
        od_matrix={("ZW", "ZE"): ((0.0, 1500.0, main_rate),),
                   ("ZN", "ZS"): ((0.0, 1500.0, side_rate),)},
        fleet_mix=fleet or {"car": 1.0})
    scope = ControlScope(controlled_junctions=("J",) if signalized else ())
    return Scenario(network=net, demand=demand, scope=scope)


@pytest.fixture
def cross():
    return make_cross_scenario()
