"""Static road network model: links, signal plans, detectors, demand and zones.

Everything here is immutable after loading and shared read-only by the
simulator, the controller and the reporting code.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

GRADIENT_LIMIT = 0.2


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or violates an invariant."""


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length: float            # m
    free_flow_speed: float   # m/s
    lane_count: int = 1
    gradient: float = 0.0    # rise/run

    @property
    def free_flow_time(self) -> float:
        return self.length / self.free_flow_speed


@dataclass(frozen=True)
class Phase:
    id: str
    movements: frozenset  # of (in_link_id, out_link_id)
    g_min: float
    g_max: float
    default_green: float


@dataclass(frozen=True)
class SignalPlan:
    junction_id: str
    cycle_time: float
    lost_time: float
    phases: tuple
    offset: float = 0.0

    @property
    def budget(self) -> float:
        """Green time available to vehicle phases in one cycle."""
        return self.cycle_time - self.lost_time

    @property
    def default_greens(self) -> tuple:
        return tuple(p.default_green for p in self.phases)


@dataclass(frozen=True)
class DetectorConfig:
    detector_id: str
    link_id: str
    position: float           # m from link start
    aggregation_period: float  # s


@dataclass(frozen=True)
class DemandSpec:
    # (origin_zone, dest_zone) -> tuple of (start_s, end_s, rate_vph)
    od_matrix: dict
    fleet_mix: dict           # vehicle class -> share
    scale_factor: float = 1.0

    def scaled(self, factor: float) -> "DemandSpec":
        return replace(self, scale_factor=self.scale_factor * factor)


@dataclass(frozen=True)
class ControlScope:
    controlled_junctions: tuple

    def controls(self, junction_id: str) -> bool:
        return junction_id in self.controlled_junctions


@dataclass(frozen=True)
class TrafficNetwork:
    links: dict               # id -> Link
    signal_plans: dict        # junction id -> SignalPlan
    detectors: tuple          # DetectorConfig, scenario order
    zones: dict               # zone id -> node id

    @property
    def nodes(self) -> set:
        out = set()
        for ln in self.links.values():
            out.add(ln.from_node)
            out.add(ln.to_node)
        return out

    def links_from(self, node: str) -> list:
        return [ln for ln in self.links.values() if ln.from_node == node]

    def incoming_links(self, junction_id: str) -> list:
        return [ln for ln in self.links.values() if ln.to_node == junction_id]


@dataclass(frozen=True)
class Scenario:
    network: TrafficNetwork
    demand: DemandSpec
    scope: ControlScope
    emission_factors: dict = field(default_factory=dict)  # class -> {name: value}


def shortest_path(net: TrafficNetwork, origin: str, dest: str):
    """Route with minimum free-flow time, as a list of link ids (or None)."""
    if origin == dest:
        return None
    best = {origin: 0.0}
    back = {}
    heap = [(0.0, origin)]
    while heap:
        cost, node = heapq.heappop(heap)
        if node == dest:
            break
        if cost > best.get(node, float("inf")):
            continue
        for ln in sorted(net.links_from(node), key=lambda l: l.id):
            c = cost + ln.free_flow_time
            if c < best.get(ln.to_node, float("inf")):
                best[ln.to_node] = c
                back[ln.to_node] = ln
                heapq.heappush(heap, (c, ln.to_node))
    if dest not in back:
        return None
    route = []
    node = dest
    while node != origin:
        ln = back[node]
        route.append(ln.id)
        node = ln.from_node
    route.reverse()
    return route


def validate_network(net: TrafficNetwork, demand: DemandSpec = None,
                     scope: ControlScope = None) -> list:
    """Collect diagnostics; an empty list means the model is consistent."""
    diags = []
    for ln in net.links.values():
        if ln.length <= 0:
            diags.append(f"link {ln.id}: length must be > 0")
        if ln.free_flow_speed <= 0:
            diags.append(f"link {ln.id}: free-flow speed must be > 0")
        if ln.lane_count < 1:
            diags.append(f"link {ln.id}: lane count must be >= 1")
        if abs(ln.gradient) >= GRADIENT_LIMIT:
            diags.append(f"link {ln.id}: |gradient| must be < {GRADIENT_LIMIT}")

    for plan in net.signal_plans.values():
        jid = plan.junction_id
        if plan.cycle_time <= plan.lost_time:
            diags.append(f"junction {jid}: cycle time must exceed lost time")
        lo = hi = dflt = 0.0
        for ph in plan.phases:
            if not 0 < ph.g_min <= ph.g_max:
                diags.append(
                    f"junction {jid} phase {ph.id}: need 0 < g_min <= g_max")
            lo += ph.g_min
            hi += ph.g_max
            dflt += ph.default_green
            for mv in ph.movements:
                in_id, out_id = mv
                if in_id not in net.links:
                    diags.append(
                        f"junction {jid} phase {ph.id}: unknown in-link {in_id}")
                elif net.links[in_id].to_node != jid:
                    diags.append(
                        f"junction {jid} phase {ph.id}: link {in_id} does not enter it")
                if out_id not in net.links:
                    diags.append(
                        f"junction {jid} phase {ph.id}: unknown out-link {out_id}")
                elif net.links[out_id].from_node != jid:
                    diags.append(
                        f"junction {jid} phase {ph.id}: link {out_id} does not leave it")
        budget = plan.budget
        if abs(dflt - budget) > 1e-6:
            diags.append(
                f"junction {jid}: default greens sum to {dflt:g}, "
                f"budget is {budget:g}")
        if not lo <= budget + 1e-9:
            diags.append(f"junction {jid}: sum of g_min exceeds the green budget")
        if not budget <= hi + 1e-9:
            diags.append(f"junction {jid}: sum of g_max is below the green budget")

    for det in net.detectors:
        if det.link_id not in net.links:
            diags.append(f"detector {det.detector_id}: unknown link {det.link_id}")
        elif not 0 <= det.position <= net.links[det.link_id].length:
            diags.append(f"detector {det.detector_id}: position off the link")
        if det.aggregation_period <= 0:
            diags.append(
                f"detector {det.detector_id}: aggregation period must be > 0")

    for zid, node in net.zones.items():
        if node not in net.nodes:
            diags.append(f"zone {zid}: unknown node {node}")

    if demand is not None:
        if demand.scale_factor <= 0:
            diags.append("demand: scale factor must be > 0")
        share_sum = sum(demand.fleet_mix.values())
        if abs(share_sum - 1.0) > 1e-9:
            diags.append(f"demand: fleet shares sum to {share_sum!r}, not 1")
        for (o, d), slices in demand.od_matrix.items():
            if o not in net.zones:
                diags.append(f"demand {o}->{d}: unknown origin zone {o}")
                continue
            if d not in net.zones:
                diags.append(f"demand {o}->{d}: unknown destination zone {d}")
                continue
            if o == d:
                diags.append(f"demand {o}->{d}: intra-zonal demand is not allowed")
                continue
            for (t0, t1, rate) in slices:
                if rate < 0:
                    diags.append(f"demand {o}->{d}: negative rate")
                if t1 <= t0:
                    diags.append(f"demand {o}->{d}: empty time slice [{t0}, {t1})")
            if shortest_path(net, net.zones[o], net.zones[d]) is None:
                diags.append(f"demand {o}->{d}: unreachable OD pair")

    if scope is not None:
        for jid in scope.controlled_junctions:
            if jid not in net.signal_plans:
                diags.append(f"control scope: unknown junction {jid}")

    return diags
