"""Discrete-time microscopic traffic simulator.

Car following uses the Intelligent Driver Model with per-class parameters;
signals gate movements at link ends, vehicles keep lane order (FIFO), and
all randomness (departure times, class draws) comes from generators derived
from the run seed, so a run is a pure function of (scenario, control, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import Scenario, shortest_path

STOPPED_SPEED = 0.5   # m/s, queue membership threshold
MIN_GAP = 0.1         # m, numerical floor for IDM gaps


class InfeasibleControlError(ValueError):
    """Controller returned green times outside the feasible timing set."""


class GridlockWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VehicleClassSpec:
    length: float        # m
    a_max: float         # m/s^2
    b_comf: float        # m/s^2
    jam_gap: float       # m, standstill net gap
    headway: float       # s
    speed_factor: float  # desired speed as share of link free-flow speed


CLASS_SPECS = {
    "car": VehicleClassSpec(length=4.5, a_max=2.0, b_comf=2.5,
                            jam_gap=2.5, headway=1.2, speed_factor=1.0),
    "bus": VehicleClassSpec(length=12.0, a_max=1.2, b_comf=2.0,
                            jam_gap=3.0, headway=1.5, speed_factor=0.9),
    "lgv": VehicleClassSpec(length=6.0, a_max=1.8, b_comf=2.3,
                            jam_gap=2.7, headway=1.3, speed_factor=1.0),
    "hgv": VehicleClassSpec(length=14.0, a_max=1.0, b_comf=1.8,
                            jam_gap=3.5, headway=1.6, speed_factor=0.85),
}


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.5
    horizon: float = 1800.0
    control_period: float = 600.0
    accel_limit: float = 5.0
    gridlock_span: float = 300.0
    record_trajectories: bool = False


@dataclass(frozen=True)
class SimClock:
    step: int
    dt: float
    horizon: float

    @property
    def t(self) -> float:
        return self.step * self.dt


def decision_epoch_hook(clock: SimClock, period: float = 600.0) -> bool:
    """True exactly at positive multiples of the control period."""
    t = clock.t
    if t <= 0:
        return False
    k = t / period
    return abs(k - round(k)) * period < 1e-9


@dataclass(frozen=True)
class TripRecord:
    vehicle_id: int
    vehicle_class: str
    depart_s: float
    arrive_s: float  # None while unfinished
    free_flow_s: float
    route_length_m: float


class DetectorLog:
    """Per-detector flow counts, one bucket per aggregation period."""

    def __init__(self, detectors, horizon):
        self.detectors = detectors
        self.counts = [
            [0] * (int(math.ceil(horizon / d.aggregation_period)) + 1)
            for d in detectors]

    def record(self, det_index, t):
        period = self.detectors[det_index].aggregation_period
        p = int(t // period)
        if p < len(self.counts[det_index]):
            self.counts[det_index][p] += 1


@dataclass
class SimOutput:
    trips: list
    unfinished: list
    detector_log: DetectorLog
    queue_mean: dict             # link -> mean vehicles in queue over steps
    departures: int
    completed: int
    ledger: np.ndarray           # steps x 3: departed, completed, in-network
    gridlock: bool
    applied_greens: list         # (t, junction, greens tuple)
    trajectories: list = None    # (t, vid, class, link, pos, speed, accel)


class _Vehicle:
    __slots__ = ("vid", "cls", "spec", "route", "leg", "pos", "speed",
                 "accel", "depart", "sched")

    def __init__(self, vid, cls, route, sched):
        self.vid = vid
        self.cls = cls
        self.spec = CLASS_SPECS[cls]
        self.route = route
        self.leg = 0
        self.pos = 0.0
        self.speed = 0.0
        self.accel = 0.0
        self.depart = None
        self.sched = sched


def generate_departures(scenario: Scenario, seed: int):
    """Seeded Poisson departures per OD pair, merged and time-sorted.

    Returns a list of (time, vehicle_class, route). Gap and class draws come
    from separate per-OD streams, so scaling the demand rate only shrinks
    the same gap sequence: the departures at scale k >= 1 are a superset of
    those at scale 1, and the draw is independent of OD iteration order.
    """
    net = scenario.network
    demand = scenario.demand
    classes = sorted(demand.fleet_mix)
    cum = np.cumsum([demand.fleet_mix[c] for c in classes])
    events = []
    for oi, (o, d) in enumerate(sorted(demand.od_matrix)):
        route = shortest_path(net, net.zones[o], net.zones[d])
        if route is None:
            continue
        rng_gap = np.random.default_rng([seed, oi, 0])
        rng_cls = np.random.default_rng([seed, oi, 1])
        for (t0, t1, rate) in demand.od_matrix[(o, d)]:
            lam = rate * demand.scale_factor / 3600.0
            if lam <= 0:
                continue
            span = (t1 - t0) * lam  # slice length at unit rate
            s = rng_gap.exponential()
            while s < span:
                ci = int(np.searchsorted(cum, rng_cls.random(), side="right"))
                events.append((t0 + s / lam,
                               classes[min(ci, len(classes) - 1)], route))
                s += rng_gap.exponential()
    events.sort(key=lambda e: e[0])
    return events


class Simulation:
    """One seeded run; use run() or step() for fine-grained control."""

    def __init__(self, scenario: Scenario, controller=None, seed: int = 0,
                 config: SimConfig = None, observers=()):
        self.scenario = scenario
        self.net = scenario.network
        self.controller = controller
        self.seed = seed
        self.cfg = config or SimConfig()
        self.observers = list(observers)

        self.link_order = sorted(self.net.links)
        self.vehicles = {lid: [] for lid in self.link_order}  # front first
        self.entry_queues = {}
        self.departure_events = generate_departures(scenario, seed)
        self._next_event = 0
        self._vid = 0

        self.step_index = 0
        self.departed = 0
        self.completed_trips = []

        horizon = self.cfg.horizon
        self.detector_log = DetectorLog(self.net.detectors, horizon)
        self._dets_by_link = {}
        for di, det in enumerate(self.net.detectors):
            self._dets_by_link.setdefault(det.link_id, []).append(
                (di, det.position))

        self.greens = {jid: list(plan.default_greens)
                       for jid, plan in self.net.signal_plans.items()}
        self.pending_greens = {}
        self._cycle_index = {jid: -1 for jid in self.net.signal_plans}
        self.applied_greens = []

        self.queue_sums = {lid: 0.0 for lid in self.link_order}
        self.ledger = []
        self.gridlock = False
        self._still_since = None
        self.trajectories = [] if self.cfg.record_trajectories else None

    # -- signals ----------------------------------------------------------

    def _active_movements(self, jid, t):
        plan = self.net.signal_plans[jid]
        greens = self.greens[jid]
        inter = plan.lost_time / len(plan.phases)
        elapsed = (t - plan.offset) % plan.cycle_time
        cum = 0.0
        for ph, g in zip(plan.phases, greens):
            if cum <= elapsed < cum + g:
                return ph.movements
            cum += g + inter
        return frozenset()

    def _apply_cycle_starts(self, t):
        for jid, plan in self.net.signal_plans.items():
            cyc = int(math.floor((t - plan.offset) / plan.cycle_time + 1e-9))
            if cyc != self._cycle_index[jid]:
                self._cycle_index[jid] = cyc
                if jid in self.pending_greens:
                    self.greens[jid] = list(self.pending_greens.pop(jid))
                    self.applied_greens.append(
                        (t, jid, tuple(self.greens[jid])))

    def _run_controller(self, t):
        result = self.controller(t, self.detector_log)
        if result is None:
            return
        for jid, greens in result.items():
            plan = self.net.signal_plans.get(jid)
            if plan is None:
                raise InfeasibleControlError(f"unknown junction {jid}")
            g = np.asarray(greens, dtype=float)
            lo = np.array([p.g_min for p in plan.phases])
            hi = np.array([p.g_max for p in plan.phases])
            if (g.size != len(plan.phases)
                    or np.any(g < lo - 1e-6) or np.any(g > hi + 1e-6)
                    or abs(g.sum() - plan.budget) > 1e-6):
                raise InfeasibleControlError(
                    f"junction {jid}: greens {g.tolist()} violate the "
                    f"timing constraints")
            self.pending_greens[jid] = tuple(float(v) for v in g)

    # -- vehicles ---------------------------------------------------------

    def _insert_departures(self, t):
        while (self._next_event < len(self.departure_events)
               and self.departure_events[self._next_event][0] <= t):
            _ts, cls, route = self.departure_events[self._next_event]
            self._next_event += 1
            veh = _Vehicle(self._vid, cls, route, _ts)
            self._vid += 1
            # departed on schedule; waits in the entry queue until there is
            # room, and that wait counts toward its delay
            veh.depart = _ts
            self.departed += 1
            self.entry_queues.setdefault(route[0], []).append(veh)

        for lid in self.link_order:
            queue = self.entry_queues.get(lid)
            if not queue:
                continue
            link = self.net.links[lid]
            scale = 1.0 / link.lane_count
            occupants = self.vehicles[lid]
            while queue:
                veh = queue[0]
                spec = veh.spec
                v_des = spec.speed_factor * link.free_flow_speed
                if occupants:
                    rear = occupants[-1]
                    gap = rear.pos - rear.spec.length * scale
                    if gap < spec.jam_gap * scale + 0.5:
                        break
                    v0 = min(v_des, max(0.0, (gap - spec.jam_gap * scale)
                                        / spec.headway))
                else:
                    v0 = v_des
                queue.pop(0)
                veh.pos = 0.0
                veh.speed = v0
                occupants.append(veh)
                # detectors sitting at the very link entrance
                for di, dpos in self._dets_by_link.get(lid, ()):
                    if dpos <= 0.0:
                        self.detector_log.record(di, t)

    def _idm_accel(self, veh, v0, gap, dv, scale):
        spec = veh.spec
        v = veh.speed
        free = (v / v0) ** 4 if v0 > 0 else 1.0
        if gap is None:
            a = spec.a_max * (1.0 - free)
        else:
            s = max(gap, MIN_GAP)
            s_star = (spec.jam_gap * scale + v * spec.headway * scale
                      + v * dv / (2.0 * math.sqrt(spec.a_max * spec.b_comf)))
            a = spec.a_max * (1.0 - free - (max(s_star, 0.0) / s) ** 2)
        return min(max(a, -self.cfg.accel_limit), self.cfg.accel_limit)

    def _movement_state(self, veh, link, t):
        """(gap, leader_speed) ahead of a link's front vehicle, or None."""
        if veh.leg + 1 >= len(veh.route):
            return None  # exits freely at the end of its last link
        next_id = veh.route[veh.leg + 1]
        jid = link.to_node
        if jid in self.net.signal_plans:
            if (link.id, next_id) not in self._green_now[jid]:
                return (link.length - veh.pos, 0.0)
        ahead = self.vehicles[next_id]
        if ahead:
            rear = ahead[-1]
            next_scale = 1.0 / self.net.links[next_id].lane_count
            gap = ((link.length - veh.pos) + rear.pos
                   - rear.spec.length * next_scale)
            return (gap, rear.speed)
        return None

    def step(self):
        cfg = self.cfg
        t = self.step_index * cfg.dt
        clock = SimClock(self.step_index, cfg.dt, cfg.horizon)

        if (self.controller is not None
                and decision_epoch_hook(clock, cfg.control_period)):
            self._run_controller(t)
        self._apply_cycle_starts(t)
        self._insert_departures(t)

        self._green_now = {jid: self._active_movements(jid, t)
                           for jid in self.net.signal_plans}

        # synchronous acceleration pass
        for lid in self.link_order:
            vehs = self.vehicles[lid]
            if not vehs:
                continue
            link = self.net.links[lid]
            scale = 1.0 / link.lane_count
            for i, veh in enumerate(vehs):
                v0 = veh.spec.speed_factor * link.free_flow_speed
                if i == 0:
                    state = self._movement_state(veh, link, t)
                    if state is None:
                        veh.accel = self._idm_accel(veh, v0, None, 0.0, scale)
                    else:
                        gap, lv = state
                        veh.accel = self._idm_accel(
                            veh, v0, gap, veh.speed - lv, scale)
                else:
                    lead = vehs[i - 1]
                    gap = lead.pos - lead.spec.length * scale - veh.pos
                    veh.accel = self._idm_accel(
                        veh, v0, gap, veh.speed - lead.speed, scale)

        # integration (semi-implicit Euler) with a hard anti-overlap guard
        for lid in self.link_order:
            vehs = self.vehicles[lid]
            if not vehs:
                continue
            scale = 1.0 / self.net.links[lid].lane_count
            prev = None
            for veh in vehs:
                v_new = max(0.0, veh.speed + veh.accel * cfg.dt)
                pos_new = veh.pos + v_new * cfg.dt
                if prev is not None:
                    limit = (prev.pos - prev.spec.length * scale
                             - 0.5 * veh.spec.jam_gap * scale)
                    if pos_new > limit:
                        pos_new = max(veh.pos, limit)
                        v_new = max(0.0, (pos_new - veh.pos) / cfg.dt)
                veh.accel = (v_new - veh.speed) / cfg.dt
                veh.speed = v_new
                # detector crossings on the current link
                for di, dpos in self._dets_by_link.get(lid, ()):
                    if veh.pos < dpos <= pos_new:
                        self.detector_log.record(di, t)
                veh.pos = pos_new
                prev = veh

        self._process_transitions(t)

        t_next = t + cfg.dt
        in_network = sum(len(q) for q in self.entry_queues.values())
        moving = 0.0
        rows = [] if (self.observers or self.trajectories is not None) else None
        for lid in self.link_order:
            vehs = self.vehicles[lid]
            in_network += len(vehs)
            q = 0
            for veh in vehs:
                if veh.speed < STOPPED_SPEED:
                    q += 1
                moving = max(moving, veh.speed)
                if rows is not None:
                    rows.append((veh.vid, veh.cls, lid, veh.pos,
                                 veh.speed, veh.accel))
            self.queue_sums[lid] += q

        if rows is not None:
            for obs in self.observers:
                obs(t_next, rows)
            if self.trajectories is not None:
                self.trajectories.extend(
                    (t_next, vid, cls, l, p, s, a)
                    for (vid, cls, l, p, s, a) in rows)

        self.ledger.append((self.departed, len(self.completed_trips),
                            in_network))
        if self.departed != len(self.completed_trips) + in_network:
            raise AssertionError("vehicle conservation violated")

        if in_network > 0 and moving < 0.05:
            if self._still_since is None:
                self._still_since = t
            elif t - self._still_since >= cfg.gridlock_span:
                self.gridlock = True
        else:
            self._still_since = None

        self.step_index += 1

    def _process_transitions(self, t):
        t_next = t + self.cfg.dt
        for lid in self.link_order:
            vehs = self.vehicles[lid]
            link = self.net.links[lid]
            while vehs and vehs[0].pos >= link.length:
                veh = vehs[0]
                if veh.leg + 1 >= len(veh.route):
                    vehs.pop(0)
                    self._finish_trip(veh, t_next)
                    continue
                next_id = veh.route[veh.leg + 1]
                jid = link.to_node
                if (jid in self.net.signal_plans
                        and (lid, next_id) not in self._green_now[jid]):
                    veh.pos = link.length - 0.5
                    veh.speed = 0.0
                    break
                ahead = self.vehicles[next_id]
                overshoot = veh.pos - link.length
                if ahead:
                    next_scale = 1.0 / self.net.links[next_id].lane_count
                    rear = ahead[-1]
                    room = rear.pos - rear.spec.length * next_scale - MIN_GAP
                    if room <= 0.0:
                        veh.pos = link.length - 0.5
                        veh.speed = 0.0
                        break
                    overshoot = min(overshoot, room)
                vehs.pop(0)
                veh.leg += 1
                veh.pos = overshoot
                ahead.append(veh)
                for di, dpos in self._dets_by_link.get(next_id, ()):
                    if dpos <= overshoot:
                        self.detector_log.record(di, t)

    def _finish_trip(self, veh, t_arrive):
        route_links = [self.net.links[lid] for lid in veh.route]
        self.completed_trips.append(TripRecord(
            vehicle_id=veh.vid, vehicle_class=veh.cls,
            depart_s=veh.depart, arrive_s=t_arrive,
            free_flow_s=sum(l.free_flow_time for l in route_links),
            route_length_m=sum(l.length for l in route_links)))

    def queue_length(self, link_id) -> int:
        """Vehicles currently queued (below the stopped threshold)."""
        return sum(1 for v in self.vehicles[link_id]
                   if v.speed < STOPPED_SPEED)

    def run(self) -> SimOutput:
        n_steps = int(round(self.cfg.horizon / self.cfg.dt))
        while self.step_index < n_steps:
            self.step()
        unfinished = []
        in_system = [v for lid in self.link_order for v in self.vehicles[lid]]
        in_system += [v for q in self.entry_queues.values() for v in q]
        for veh in in_system:
            route_links = [self.net.links[l] for l in veh.route]
            unfinished.append(TripRecord(
                vehicle_id=veh.vid, vehicle_class=veh.cls,
                depart_s=veh.depart, arrive_s=None,
                free_flow_s=sum(l.free_flow_time for l in route_links),
                route_length_m=sum(l.length for l in route_links)))
        steps = max(self.step_index, 1)
        queue_mean = {lid: s / steps for lid, s in self.queue_sums.items()}
        return SimOutput(
            trips=sorted(self.completed_trips, key=lambda tr: tr.vehicle_id),
            unfinished=sorted(unfinished, key=lambda tr: tr.vehicle_id),
            detector_log=self.detector_log,
            queue_mean=queue_mean,
            departures=self.departed,
            completed=len(self.completed_trips),
            ledger=np.array(self.ledger, dtype=np.int64),
            gridlock=self.gridlock,
            applied_greens=self.applied_greens,
            trajectories=self.trajectories)


def run_simulation(scenario: Scenario, controller=None, seed: int = 0,
                   config: SimConfig = None, observers=()) -> SimOutput:
    """Run one seeded simulation to the horizon; see Simulation for knobs."""
    return Simulation(scenario, controller, seed, config, observers).run()
