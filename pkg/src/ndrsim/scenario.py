"""Scenario file loading and saving.

A scenario is a single hand-editable text file with a version header and
whitespace-separated sections:

    # ndrsim-scenario v1
    [links]      id from to length_m speed_mps lanes gradient
    [junctions]  id cycle_s lost_s offset_s
    [phases]     junction phase g_min g_max default in>out[,in>out...]
    [detectors]  id link position_m period_s
    [zones]      zone node
    [demand]     origin dest start_s end_s rate_vph
    [fleet]      class share
    [factors]    class key=value ...
    [control]    junction            (optional; defaults to all junctions)
    [scale]      factor              (optional; defaults to 1.0)

Lines starting with '#' and blank lines are ignored. Zones attach to
boundary nodes; intra-zonal demand is rejected.
"""

from __future__ import annotations

import os

from .network import (ControlScope, DemandSpec, DetectorConfig, Link, Phase,
                      Scenario, ScenarioError, SignalPlan, TrafficNetwork,
                      validate_network)

HEADER = "# ndrsim-scenario v1"
_SECTIONS = ("links", "junctions", "phases", "detectors", "zones",
             "demand", "fleet", "factors", "control", "scale")


def _fail(path, lineno, msg):
    raise ScenarioError(f"{path}:{lineno}: {msg}")


def _num(tok, path, lineno, what):
    try:
        return float(tok)
    except ValueError:
        _fail(path, lineno, f"{what}: expected a number, got {tok!r}")


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; any diagnostic aborts the load."""
    if not os.path.exists(path):
        raise ScenarioError(f"scenario file not found: {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip().startswith(HEADER):
        raise ScenarioError(f"{path}:1: missing header {HEADER!r}")

    rows = {s: [] for s in _SECTIONS}
    section = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in _SECTIONS:
                _fail(path, lineno, f"unknown section [{section}]")
            continue
        if section is None:
            _fail(path, lineno, "content before first section")
        rows[section].append((lineno, line.split()))

    links = {}
    for lineno, tok in rows["links"]:
        if len(tok) != 7:
            _fail(path, lineno, "links: need 'id from to length speed lanes gradient'")
        if tok[0] in links:
            _fail(path, lineno, f"duplicate link {tok[0]}")
        links[tok[0]] = Link(
            id=tok[0], from_node=tok[1], to_node=tok[2],
            length=_num(tok[3], path, lineno, "length"),
            free_flow_speed=_num(tok[4], path, lineno, "speed"),
            lane_count=int(_num(tok[5], path, lineno, "lanes")),
            gradient=_num(tok[6], path, lineno, "gradient"))

    junction_rows = {}
    for lineno, tok in rows["junctions"]:
        if len(tok) != 4:
            _fail(path, lineno, "junctions: need 'id cycle lost offset'")
        if tok[0] in junction_rows:
            _fail(path, lineno, f"duplicate junction {tok[0]}")
        junction_rows[tok[0]] = (
            _num(tok[1], path, lineno, "cycle"),
            _num(tok[2], path, lineno, "lost"),
            _num(tok[3], path, lineno, "offset"))

    phase_rows = {j: [] for j in junction_rows}
    for lineno, tok in rows["phases"]:
        if len(tok) != 6:
            _fail(path, lineno,
                  "phases: need 'junction phase g_min g_max default movements'")
        jid = tok[0]
        if jid not in junction_rows:
            _fail(path, lineno, f"phase references unknown junction {jid}")
        movements = []
        for mv in tok[5].split(","):
            if ">" not in mv:
                _fail(path, lineno, f"movement {mv!r}: expected 'in>out'")
            a, b = mv.split(">", 1)
            movements.append((a, b))
        phase_rows[jid].append(Phase(
            id=tok[1], movements=frozenset(movements),
            g_min=_num(tok[2], path, lineno, "g_min"),
            g_max=_num(tok[3], path, lineno, "g_max"),
            default_green=_num(tok[4], path, lineno, "default")))

    signal_plans = {}
    for jid, (cycle, lost, offset) in junction_rows.items():
        if not phase_rows[jid]:
            raise ScenarioError(f"{path}: junction {jid} has no phases")
        signal_plans[jid] = SignalPlan(
            junction_id=jid, cycle_time=cycle, lost_time=lost,
            phases=tuple(phase_rows[jid]), offset=offset)

    detectors = []
    for lineno, tok in rows["detectors"]:
        if len(tok) != 4:
            _fail(path, lineno, "detectors: need 'id link position period'")
        detectors.append(DetectorConfig(
            detector_id=tok[0], link_id=tok[1],
            position=_num(tok[2], path, lineno, "position"),
            aggregation_period=_num(tok[3], path, lineno, "period")))

    zones = {}
    for lineno, tok in rows["zones"]:
        if len(tok) != 2:
            _fail(path, lineno, "zones: need 'zone node'")
        zones[tok[0]] = tok[1]

    od = {}
    for lineno, tok in rows["demand"]:
        if len(tok) != 5:
            _fail(path, lineno, "demand: need 'origin dest start end rate'")
        key = (tok[0], tok[1])
        od.setdefault(key, []).append((
            _num(tok[2], path, lineno, "start"),
            _num(tok[3], path, lineno, "end"),
            _num(tok[4], path, lineno, "rate")))
    od = {k: tuple(v) for k, v in od.items()}

    fleet = {}
    for lineno, tok in rows["fleet"]:
        if len(tok) != 2:
            _fail(path, lineno, "fleet: need 'class share'")
        fleet[tok[0]] = _num(tok[1], path, lineno, "share")
    if not fleet:
        fleet = {"car": 1.0}

    scale = 1.0
    for lineno, tok in rows["scale"]:
        scale = _num(tok[0], path, lineno, "scale factor")

    factors = {}
    for lineno, tok in rows["factors"]:
        if len(tok) < 2:
            _fail(path, lineno, "factors: need 'class key=value ...'")
        entry = factors.setdefault(tok[0], {})
        for kv in tok[1:]:
            if "=" not in kv:
                _fail(path, lineno, f"factors: expected key=value, got {kv!r}")
            k, v = kv.split("=", 1)
            entry[k] = _num(v, path, lineno, f"factor {k}")

    net = TrafficNetwork(links=links, signal_plans=signal_plans,
                         detectors=tuple(detectors), zones=zones)
    demand = DemandSpec(od_matrix=od, fleet_mix=fleet, scale_factor=scale)

    if rows["control"]:
        controlled = tuple(tok[0] for _, tok in rows["control"])
    else:
        controlled = tuple(signal_plans)
    scope = ControlScope(controlled_junctions=controlled)

    diags = validate_network(net, demand, scope)
    if diags:
        raise ScenarioError(
            f"{path}: invalid scenario:\n  " + "\n  ".join(diags))
    return Scenario(network=net, demand=demand, scope=scope,
                    emission_factors=factors)


def save_scenario(scenario: Scenario, path) -> None:
    """Write a scenario back out in the same format load_scenario reads."""
    net = scenario.network
    out = [HEADER, "", "[links]"]
    for ln in net.links.values():
        out.append(f"{ln.id} {ln.from_node} {ln.to_node} {ln.length:g} "
                   f"{ln.free_flow_speed:g} {ln.lane_count} {ln.gradient:g}")
    out += ["", "[junctions]"]
    for plan in net.signal_plans.values():
        out.append(f"{plan.junction_id} {plan.cycle_time:g} "
                   f"{plan.lost_time:g} {plan.offset:g}")
    out += ["", "[phases]"]
    for plan in net.signal_plans.values():
        for ph in plan.phases:
            mv = ",".join(f"{a}>{b}" for a, b in sorted(ph.movements))
            out.append(f"{plan.junction_id} {ph.id} {ph.g_min:g} {ph.g_max:g} "
                       f"{ph.default_green:g} {mv}")
    out += ["", "[detectors]"]
    for det in net.detectors:
        out.append(f"{det.detector_id} {det.link_id} {det.position:g} "
                   f"{det.aggregation_period:g}")
    out += ["", "[zones]"]
    for zid, node in net.zones.items():
        out.append(f"{zid} {node}")
    out += ["", "[demand]"]
    for (o, d), slices in scenario.demand.od_matrix.items():
        for (t0, t1, rate) in slices:
            out.append(f"{o} {d} {t0:g} {t1:g} {rate:g}")
    out += ["", "[fleet]"]
    for cls, share in scenario.demand.fleet_mix.items():
        out.append(f"{cls} {share:g}")
    if scenario.emission_factors:
        out += ["", "[factors]"]
        for cls, entry in scenario.emission_factors.items():
            kv = " ".join(f"{k}={v:g}" for k, v in entry.items())
            out.append(f"{cls} {kv}")
    out += ["", "[control]"]
    for jid in scenario.scope.controlled_junctions:
        out.append(jid)
    out += ["", "[scale]", f"{scenario.demand.scale_factor:g}", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(out))
