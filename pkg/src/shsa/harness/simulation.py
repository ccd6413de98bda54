"""Tick-synchronous simulation of the highway sensor field.

Tick order: faults switch, vehicles move, sensors publish, the bus
delivers, every fog node runs its self-healing loop (substitute outputs are
delivered in the same tick), the fog trackers update and publish their
per-radar estimates, and finally the evaluator publishes estimate and error
records used for the metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import bundled, parse_kb_file
from ..diagnosis import ChannelClass, ChannelStats, comm_behavior_classify
from ..errors import ScenarioError
from ..knowledge_base import Itom, ItomRegistry, KnowledgeBase
from .bus import BusMessage, TopicBus
from .events import EventLog, iter_vectors, parse_log
from .faults import FaultInjector, component_rng
from .loop import ShsaNode, TickState, VehicleView
from .scenario import Scenario, serialize_scenario, validate_scenario
from .tracker import Measurement, MultiTracker

__all__ = ["Metrics", "SimulationResult", "run_scenario", "compute_metrics", "replay_log"]

LOG_VERSION = "shsa event log v1"


@dataclass(frozen=True)
class Metrics:
    detection_latency: float  # ticks from first fault onset to first detection
    recovery_latency: float  # ticks from first fault onset to first substitute output
    tracking_rmse: float  # m, planar error over the whole run
    availability: float  # fraction of (vehicle, tick) pairs with an estimate
    rmse_after_recovery: float  # m, from the first substitute tick on

    FIELDS = (
        "detection_latency_ticks",
        "recovery_latency_ticks",
        "tracking_rmse_m",
        "availability_fraction",
        "rmse_after_recovery_m",
    )

    def values(self) -> tuple[float, ...]:
        return (self.detection_latency, self.recovery_latency, self.tracking_rmse,
                self.availability, self.rmse_after_recovery)

    def to_csv(self) -> str:
        return ",".join(self.FIELDS) + "\n" + ",".join(f"{x:.6g}" for x in self.values()) + "\n"


@dataclass
class SimulationResult:
    scenario: Scenario
    log: EventLog
    metrics: Metrics
    # (tick, fog, track id, innovation norm) for every measurement update
    innovations: list[tuple[int, str, str, float]] = field(default_factory=list)
    min_cov_eig: float = math.inf
    bus: TopicBus | None = None

    def channel_report(self, delta: float | None = None) -> list[tuple[ChannelStats, ChannelClass]]:
        """Traffic class of every publisher->subscriber channel over the whole run."""
        if self.bus is None:
            return []
        delta = self.scenario.params.delta if delta is None else delta
        out = []
        for ch in sorted(self.bus.channels):
            stats = self.bus.channel_stats(ch, 0, self.scenario.duration)
            out.append((stats, comm_behavior_classify(stats, delta)))
        return out

    def log_text(self) -> str:
        return self.log.text()

    def rmse(self, start: int = 0, end: int | None = None) -> float:
        return _rmse(self.log.events, start, end)

    def events(self, kind: str):
        return self.log.of_kind(kind)


def _rmse(events, start: int = 0, end: int | None = None) -> float:
    sq, n = 0.0, 0
    for tick, _, err in iter_vectors(events, "publish", "err/"):
        if tick >= start and (end is None or tick < end):
            sq += float(err[0] ** 2 + err[1] ** 2)
            n += 1
    return math.sqrt(sq / n) if n else math.nan


def compute_metrics(events) -> Metrics:
    """Metrics from event records alone (shared by the run and by replay)."""
    onset = min((e.tick for e in events if e.kind == "fault" and e.payload.startswith("start")), default=None)
    detect = sub = None
    if onset is not None:
        detect = min((e.tick for e in events if e.kind == "detect" and e.tick >= onset), default=None)
        sub = min((e.tick for e in events if e.kind == "publish" and e.subject.startswith("sub/")
                   and e.tick >= onset), default=None)
    n_truth = sum(1 for e in events if e.kind == "publish" and e.subject.startswith("truth/"))
    n_est = sum(1 for e in events if e.kind == "publish" and e.subject.startswith("err/"))
    nan = math.nan
    return Metrics(
        detection_latency=nan if detect is None else float(detect - onset),
        recovery_latency=nan if sub is None else float(sub - onset),
        tracking_rmse=_rmse(events),
        availability=n_est / n_truth if n_truth else nan,
        rmse_after_recovery=nan if sub is None else _rmse(events, sub),
    )


def replay_log(text: str) -> Metrics:
    settings, events = parse_log(text)
    return compute_metrics(events)


class _World:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.length = sc.road_length
        self.vehicles = sorted(sc.vehicles, key=lambda v: v.id)
        self.radars = sorted(sc.radars, key=lambda r: r.id)
        self.rng = {r.id: component_rng(sc.seed, r.id) for r in self.radars}
        for v in self.vehicles:
            if v.gps:
                self.rng[f"{v.id}.gps"] = component_rng(sc.seed, f"{v.id}.gps")
            if v.distance:
                self.rng[f"{v.id}.distance"] = component_rng(sc.seed, f"{v.id}.distance")
        self.truth: dict[str, np.ndarray] = {}

    def advance(self, tick: int) -> None:
        t = tick * self.sc.dt
        self.truth = {v.id: np.array([v.x + v.v * t, v.y, v.v]) for v in self.vehicles}

    def radar_of(self, vehicle: str) -> str:
        x = self.truth[vehicle][0] % self.length
        for r in self.radars:
            if r.fov[0] <= x < r.fov[1]:
                return r.id
        raise AssertionError(f"no radar covers x={x}")

    def ahead(self, vehicle: str) -> str | None:
        me = self.truth[vehicle]
        best = None
        for v in self.vehicles:
            if v.id == vehicle:
                continue
            dx = self.truth[v.id][0] - me[0]
            if 0 < dx <= self.sc.sensors.distance_range and (best is None or dx < best[0]):
                best = (dx, v.id)
        return None if best is None else best[1]


def _build_views(sc, world, bus, fog, tick, time, owned):
    fresh = bus.fresh(fog, tick, include_quarantine=True)
    inbox = bus.inbox[fog]
    dt = sc.dt
    views, missing = [], {}
    for v in owned:
        k = world.radar_of(v)
        reg = ItomRegistry()
        topic = f"{k}/{v}"
        rec = fresh.get(topic)
        if rec is not None:
            reg.add(Itom(topic, "pos", k, rec.message.tick * dt, rec.payload))
        else:
            missing.setdefault(k, []).append(v)
        rec = fresh.get(f"gps/{v}")
        if rec is not None:
            reg.add(Itom(f"gps/{v}", "pos", f"{v}.gps", rec.message.tick * dt, rec.payload))
        pred = sc.predecessor(k)
        if pred is not None:
            rec = inbox.get(f"trk/{pred}/{v}")
            if rec is not None:
                ts = rec.message.tick * dt
                if time - ts <= sc.tracker.prev_max_age:
                    reg.add(Itom(f"trk/{pred}/{v}", "pos_prev", pred, ts, rec.payload))
                    reg.add(Itom(f"tprev/{pred}/{v}", "t_prev", pred, ts, np.array([ts])))
        reg.add(Itom("clock", "t", "clock", time, np.array([time])))
        behind = sorted(
            (float(r.payload[0]), t) for t, r in fresh.items()
            if t.startswith("distance/") and t.endswith(f"/{v}")
        )
        if behind:
            topic = behind[0][1]
            b = topic.split("/")[1]
            rec = fresh[topic]
            reg.add(Itom(topic, "dist", f"{b}.distance", rec.message.tick * dt, rec.payload))
            g = fresh.get(f"gps/{b}")
            if g is not None:
                reg.add(Itom(f"gps/{b}", "pos_behind", f"{b}.gps", g.message.tick * dt, g.payload))
        views.append(VehicleView(v, k, reg))
    return TickState(tick, time, views, missing)


def run_scenario(sc: Scenario, kb: KnowledgeBase | None = None) -> SimulationResult:
    """Run ``sc`` to completion and return the event log and metrics.

    ``kb`` defaults to the bundled highway knowledge base; a replacement must
    declare the same variables (its itoms are ignored, they are bound from
    bus traffic at run time).
    """
    validate_scenario(sc)
    if kb is None:
        kb, _ = parse_kb_file(bundled("highway.kb"))
    else:
        need = {"pos", "pos_prev", "t", "t_prev", "pos_behind", "dist"}
        missing = sorted(need - set(kb.var))
        if missing:
            raise ScenarioError(f"knowledge base lacks variables {missing}")
    log = EventLog([LOG_VERSION] + serialize_scenario(sc).splitlines())
    bus = TopicBus(log)
    world = _World(sc)
    injector = FaultInjector(sc.faults, sc.seed, sc.dt, sc.components())
    fogs = sorted(sc.fogs, key=lambda f: f.id)
    nodes, trackers = {}, {}
    tp = sc.tracker
    for f in fogs:
        for k in f.radars:
            bus.subscribe(f.id, f"{k}/*")
            bus.subscribe(f.id, f"sub/{k}/*")
        for pattern in ("gps/*", "distance/*", "trk/*"):
            bus.subscribe(f.id, pattern)
        nodes[f.id] = ShsaNode(f.id, kb, sc.params, sc.dt)
        trackers[f.id] = MultiTracker(
            f.id, sc.dt, sc.params.gate, tp.q, tp.coast_after, tp.drop_after,
            tp.adaptive_r, tp.r_max, tp.akf_window,
        )
    radar_fog = {k: f.id for f in fogs for k in f.radars}
    R = {r.id: np.eye(3) * max(r.sigma, 1e-3) ** 2 for r in sc.radars}
    R_sub = {k: np.diag([m[0, 0], m[1, 1], tp.substitute_speed_sigma**2]) for k, m in R.items()}
    gps_sigma, dist_sigma = sc.sensors.gps_sigma, sc.sensors.distance_sigma

    def emit(component: str, msg: BusMessage) -> None:
        out = injector.apply(component, msg)
        if out is not None:
            bus.publish(out)

    for tick in range(sc.duration):
        time = tick * sc.dt
        for f, phase in injector.transitions(tick):
            log.record(tick, "fault", f.target, f"{phase} {f.describe()}")
        world.advance(tick)
        for v in world.vehicles:
            bus.publish(BusMessage(f"truth/{v.id}", "world", tick, world.truth[v.id]))
        # sensors; every component draws its noise whether or not it is faulty
        for r in world.radars:
            rng = world.rng[r.id]
            for v in world.vehicles:
                if world.radar_of(v.id) != r.id:
                    continue
                z = world.truth[v.id] + rng.normal(0.0, r.sigma, 3)
                emit(r.id, BusMessage(f"{r.id}/{v.id}", r.id, tick, z))
        for v in world.vehicles:
            if v.gps:
                name = f"{v.id}.gps"
                z = world.truth[v.id] + world.rng[name].normal(0.0, gps_sigma, 3)
                emit(name, BusMessage(f"gps/{v.id}", name, tick, z))
            if v.distance:
                name = f"{v.id}.distance"
                noise = world.rng[name].normal(0.0, dist_sigma, 2)
                a = world.ahead(v.id)
                if a is not None:
                    d = world.truth[a][:2] - world.truth[v.id][:2] + noise
                    emit(name, BusMessage(f"distance/{v.id}/{a}", name, tick, d))
        bus.deliver(tick)

        owned = {f.id: [] for f in fogs}
        for v in world.vehicles:
            owned[radar_fog[world.radar_of(v.id)]].append(v.id)
        for f in fogs:
            state = _build_views(sc, world, bus, f.id, tick, time, owned[f.id])
            actions, pubs = nodes[f.id].step(state)
            for a in actions:
                log.record(tick, a.kind, a.subject, a.payload)
                if a.kind == "isolate":
                    bus.isolate(a.subject, tick + 1)
                elif a.kind == "restore":
                    bus.restore(a.subject, tick + 1)
            for p in pubs:
                bus.publish(BusMessage(p.topic, p.publisher, tick, np.asarray(p.value, dtype=float)))
        bus.deliver(tick)

        for f in fogs:
            fresh = bus.fresh(f.id, tick)
            meas = []
            for topic in sorted(fresh):
                parts = topic.split("/")
                if parts[0] in R and len(parts) == 2:
                    meas.append(Measurement(parts[1], parts[0], fresh[topic].payload, R[parts[0]]))
                elif parts[0] == "sub" and parts[1] in R:
                    meas.append(Measurement(parts[2], parts[1], fresh[topic].payload, R_sub[parts[1]], True))
            used = trackers[f.id].step(tick, meas)
            for v in sorted({m.label for m in used.values() if not m.substituted}):
                est = trackers[f.id].estimate(v)
                m = used.get(est.id) if est is not None else None
                if m is not None and not m.substituted:
                    bus.publish(BusMessage(f"trk/{m.source}/{v}", f.id, tick, est.x.copy()))
        bus.deliver(tick)

        for v in world.vehicles:
            fog = radar_fog[world.radar_of(v.id)]
            est = trackers[fog].estimate(v.id)
            if est is None:
                continue
            bus.publish(BusMessage(f"est/{v.id}", fog, tick, est.x))
            bus.publish(BusMessage(f"err/{v.id}", "eval", tick, est.x[:2] - world.truth[v.id][:2]))
        bus.deliver(tick)

    innovations = []
    min_eig = math.inf
    for fid in sorted(trackers):
        tr = trackers[fid]
        innovations += [(t, fid, tid, float(np.linalg.norm(y))) for t, tid, y in tr.updates]
        min_eig = min(min_eig, tr.min_eig)
    innovations.sort()
    return SimulationResult(sc, log, compute_metrics(log.events), innovations, min_eig, bus)
