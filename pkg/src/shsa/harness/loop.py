"""Monitor, diagnose and recover: the self-healing loop of one fog node.

Per tick the node gets one itom registry per tracked vehicle (built by the
simulation from what the node received). It

1. runs a plausibility monitor on ``pos`` for every vehicle,
2. folds the direct-branch confidences into a trust series per provider,
3. on a provider whose trust stayed below ``theta`` for ``hold`` ticks, ranks
   components with SFL over the recent monitor spectrum and isolates the
   top-ranked provider,
4. keeps a substitute running for every vehicle whose radar is isolated,
5. restores an isolated provider once its (quarantined) output agrees with
   the healthy branches again for ``hold`` ticks.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..diagnosis import build_spectrum, sfl_rank
from ..errors import DiagnosisError, MonitorSetupError
from ..knowledge_base import ItomRegistry, KnowledgeBase, provided_variables
from ..monitoring import ConfidenceReport, Monitor, MonitorSpec, agreement_confidence, aggregate_trust, setup_monitor
from ..substitution import SearchConfig, Substitute, best_substitution, instantiate_substitute
from .scenario import ShsaParams

__all__ = ["VehicleView", "TickState", "Action", "Publication", "ShsaNode", "shsa_control_loop"]

VARIABLE = "pos"


@dataclass
class VehicleView:
    vehicle: str
    radar: str  # radar responsible for the vehicle (data association)
    registry: ItomRegistry


@dataclass
class TickState:
    tick: int
    time: float
    views: list[VehicleView]
    # radar -> vehicles it should have reported this tick but did not
    missing: Mapping[str, list[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class Action:
    kind: str  # detect | isolate | substitute | restore | degraded
    subject: str
    payload: str = ""


@dataclass(frozen=True)
class Publication:
    topic: str
    publisher: str
    value: np.ndarray


class ShsaNode:
    def __init__(self, node_id: str, kb: KnowledgeBase, params: ShsaParams, dt: float):
        self.id = node_id
        self.kb = kb
        self.params = params
        self.dt = dt
        self.cfg = SearchConfig(params.relation_weight, params.staleness_weight, params.max_depth)
        self.monitors: dict[str, Monitor] = {}  # vehicle -> monitor
        self._specs: dict[tuple, MonitorSpec | None] = {}
        self.trust: dict[str, deque] = {}
        self.trace: deque = deque()  # (tick, report, branch -> components)
        self.suspect: set[str] = set()
        self.isolated: dict[str, int] = {}
        self.substitutes: dict[str, tuple[str, Substitute]] = {}  # vehicle -> (radar, substitute)
        self.held: dict[str, np.ndarray | None] = {}  # degraded vehicles -> last good value
        self.last_good: dict[str, np.ndarray] = {}

    @property
    def publisher(self) -> str:
        return f"{self.id}.shsa"

    # -- monitoring ----------------------------------------------------------

    def _spec(self, reg: ItomRegistry) -> MonitorSpec | None:
        key = tuple(sorted((i.id, i.variable, i.provider) for i in reg if i.available))
        if key not in self._specs:
            try:
                spec = setup_monitor(self.kb, reg, VARIABLE, self.params.epsilon,
                                     self.params.theta, self.params.hold)
            except MonitorSetupError:
                spec = None
            self._specs[key] = spec
        return self._specs[key]

    def _monitor(self, view: VehicleView, healthy: ItomRegistry) -> tuple[Monitor, ConfidenceReport] | None:
        spec = self._spec(healthy)
        if spec is None:
            self.monitors.pop(view.vehicle, None)
            return None
        mon = self.monitors.get(view.vehicle)
        if mon is None:
            mon = self.monitors[view.vehicle] = Monitor(spec)
        elif mon.spec is not spec:
            mon.reset_spec(spec)
        snap = {i.id: i.value for i in healthy if i.available}
        return mon, mon.step(snap, 0.0)

    def _components(self, spec: MonitorSpec) -> dict[str, tuple[str, ...]]:
        out = {}
        for b in spec.branches:
            comps = set(b.providers)
            if not b.direct:
                comps.add(self.id)
            out[b.id] = tuple(sorted(comps))
        return out

    # -- main step -----------------------------------------------------------

    def step(self, state: TickState) -> tuple[list[Action], list[Publication]]:
        p = self.params
        actions: list[Action] = []
        pubs: list[Publication] = []
        samples: dict[str, list[float]] = {}
        for view in state.views:
            healthy = ItomRegistry(i for i in view.registry if i.provider not in self.isolated)
            res = self._monitor(view, healthy)
            if res is None:
                continue
            mon, report = res
            report.time = state.time
            self.trace.append((state.tick, report, self._components(mon.spec)))
            branches = mon.spec.branches
            if len(branches) >= 3:
                for b in branches:
                    if b.direct:
                        samples.setdefault(b.providers[0], []).append(report.confidence[b.id])
            # health probe for isolated providers: agreement with the healthy branches
            probes = [i for i in view.registry if i.provider in self.isolated and i.available
                      and i.variable == VARIABLE]
            if probes and len(branches) >= 2:
                for it in probes:
                    vals = dict(report.values)
                    vals[it.id] = np.asarray(it.value, dtype=float)
                    conf = agreement_confidence(vals, p.epsilon)[it.id]
                    samples.setdefault(it.provider, []).append(conf)
        for radar, vehicles in state.missing.items():
            samples.setdefault(radar, []).extend(0.0 for _ in vehicles)
        while self.trace and self.trace[0][0] <= state.tick - p.window:
            self.trace.popleft()
        for comp in sorted(samples):
            series = self.trust.setdefault(comp, deque(maxlen=max(p.hold, 1) * 4))
            series.append(aggregate_trust(samples[comp]))

        self._detect(state, actions)
        self._restore(state, actions)
        self._recover(state, actions, pubs)
        return actions, pubs

    def _low(self, comp: str) -> bool:
        s = self.trust.get(comp, ())
        return len(s) >= self.params.hold and all(c < self.params.theta for c in list(s)[-self.params.hold:])

    def _high(self, comp: str) -> bool:
        s = self.trust.get(comp, ())
        return len(s) >= self.params.hold and all(c >= self.params.theta for c in list(s)[-self.params.hold:])

    def _detect(self, state: TickState, actions: list[Action]) -> None:
        for comp in sorted(self.trust):
            if comp in self.isolated:
                continue
            if comp in self.suspect:
                if self._high(comp):
                    self.suspect.discard(comp)
                continue
            if not self._low(comp):
                continue
            self.suspect.add(comp)
            actions.append(Action("detect", comp, f"trust={self.trust[comp][-1]:.6g}"))
            target, score = self._localize(comp)
            if target in self.isolated:
                continue
            self.isolated[target] = state.tick
            self.trust[target] = deque(maxlen=max(self.params.hold, 1) * 4)
            actions.append(Action("isolate", target, f"score={score:.6g}"))

    def _localize(self, failed: str) -> tuple[str, float]:
        """Top-ranked isolatable provider; the failed one when SFL cannot decide."""
        reports = [r for _, r, _ in self.trace]
        comps: dict[str, tuple[str, ...]] = {}
        for _, _, c in self.trace:
            comps.update(c)
        try:
            ranking = sfl_rank(build_spectrum(reports, comps, self.params.epsilon), self.params.formula)
        except DiagnosisError:
            return failed, float("nan")
        for comp, score in ranking.entries:
            if comp in self.trust and comp not in self.isolated and score > 0:
                return comp, score
        return failed, float("nan")

    def _restore(self, state: TickState, actions: list[Action]) -> None:
        for comp in sorted(self.isolated):
            if self.isolated[comp] >= state.tick or not self._high(comp):
                continue
            del self.isolated[comp]
            self.suspect.discard(comp)
            for v in [v for v, (r, _) in self.substitutes.items() if r == comp]:
                del self.substitutes[v]
            actions.append(Action("restore", comp, ""))

    def _recover(self, state: TickState, actions: list[Action], pubs: list[Publication]) -> None:
        active = set()
        for view in state.views:
            v, radar = view.vehicle, view.radar
            if radar not in self.isolated:
                self.held.pop(v, None)
                continue
            active.add(v)
            running = self.substitutes.get(v)
            if running is not None and running[0] != radar:
                running = None
            reg = ItomRegistry(i for i in view.registry if i.provider not in self.isolated)
            value = None
            for _ in range(2):
                if running is None or running[1].needs_search:
                    running = self._search(state, view, reg, actions)
                    if running is None:
                        break
                value = running[1].step(reg, state.time)
                if value is not None or not running[1].needs_search:
                    break
            if running is None:
                self.substitutes.pop(v, None)
                continue
            self.substitutes[v] = running
            if value is not None:
                self.last_good[v] = value
                pubs.append(Publication(running[1].output_itom, self.publisher, value))
        for v in [v for v in self.substitutes if v not in active]:
            del self.substitutes[v]

    def _search(self, state: TickState, view: VehicleView, reg: ItomRegistry, actions: list[Action]):
        v, radar = view.vehicle, view.radar
        provided = provided_variables(self.kb, reg)
        sub = best_substitution(self.kb, VARIABLE, provided, reg, self.cfg, now=state.time)
        if sub is None:
            if v not in self.held:
                self.held[v] = self.last_good.get(v)
                actions.append(Action("degraded", f"sub/{radar}/{v}", "no valid substitution"))
            return None
        self.held.pop(v, None)
        s = instantiate_substitute(sub, reg, self.dt, f"sub/{radar}/{v}", self.publisher)
        sources = ",".join(f"{var}<-{i}" for var, i in sorted(s.selected.items()))
        actions.append(Action("substitute", s.output_itom, f"{sub} [{sources}]"))
        return radar, s


def shsa_control_loop(node: ShsaNode, state: TickState) -> tuple[list[Action], list[Publication]]:
    """One monitor-diagnose-recover pass of ``node`` over ``state``."""
    return node.step(state)
