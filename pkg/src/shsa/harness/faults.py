"""Fault injection at the component interface.

Faults only change what a component puts on the bus: its messages can be
dropped, replaced, perturbed, delayed or made subscriber-dependent. The
component itself keeps stepping, so its noise stream is unaffected.
"""

from __future__ import annotations

import zlib
from dataclasses import replace
from typing import Iterable

import numpy as np

from ..errors import FaultInjectionError
from .bus import BusMessage
from .scenario import FaultInjection

__all__ = ["FaultInjector", "inject_fault", "component_rng"]


def component_rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent stream per component name, stable across runs and platforms."""
    return np.random.default_rng([seed, zlib.crc32(name.encode()), *extra])


class FaultInjector:
    def __init__(
        self,
        faults: Iterable[FaultInjection] = (),
        seed: int = 42,
        dt: float = 0.1,
        components: Iterable[str] | None = None,
    ):
        self.seed = seed
        self.dt = dt
        self.components = None if components is None else set(components)
        self.faults: list[FaultInjection] = []
        self._rngs: dict[int, np.random.Generator] = {}
        for f in faults:
            self.inject(f)

    def inject(self, f: FaultInjection) -> None:
        if self.components is not None and f.target not in self.components:
            raise FaultInjectionError(f"fault target {f.target!r} is not a known component")
        for g in self.faults:
            if f.overlaps(g):
                raise FaultInjectionError(
                    f"fault {f.describe()} on {f.target} overlaps {g.describe()}"
                )
        self.faults.append(f)
        self._rngs[len(self.faults) - 1] = component_rng(self.seed, "fault:" + f.target, len(self.faults))

    def active(self, target: str, tick: int) -> tuple[int, FaultInjection] | None:
        for k, f in enumerate(self.faults):
            if f.target == target and f.active(tick):
                return k, f
        return None

    def transitions(self, tick: int) -> list[tuple[FaultInjection, str]]:
        """Faults starting or ending at ``tick``, in injection order."""
        out = []
        for f in self.faults:
            if f.start == tick:
                out.append((f, "start"))
            elif f.end == tick:
                out.append((f, "end"))
        return out

    def apply(self, target: str, msg: BusMessage) -> BusMessage | None:
        """The message ``target`` actually emits, or ``None`` when it stays silent."""
        hit = self.active(target, msg.tick)
        if hit is None:
            return msg
        k, f = hit
        kind = f.kind
        if kind in ("fail_stop", "fail_silent"):
            return None
        if kind == "stuck_at":
            return replace(msg, payload=np.full_like(msg.payload, float(f.params["value"])))
        if kind == "noise":
            noise = self._rngs[k].normal(0.0, float(f.params["sigma"]), msg.payload.shape)
            return replace(msg, payload=msg.payload + noise)
        if kind == "delay":
            return replace(msg, due=msg.tick + int(f.params["ticks"]))
        if kind == "spoof":
            per = {s: np.full_like(msg.payload, float(v)) for s, v in f.params["values"].items()}
            return replace(msg, per_subscriber=per)
        if kind == "drift":
            bias = float(f.params["rate"]) * (msg.tick - f.start) * self.dt
            return replace(msg, payload=msg.payload + bias)
        raise FaultInjectionError(f"unhandled fault kind {kind!r}")


def inject_fault(injector: FaultInjector, f: FaultInjection) -> FaultInjector:
    """Register ``f`` with ``injector``; overlapping windows on one target are rejected."""
    injector.inject(f)
    return injector
