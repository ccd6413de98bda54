"""Event log records and the fixed-precision number format used in outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

__all__ = ["EVENT_KINDS", "Event", "EventLog", "fmt", "fmt_vec", "parse_log", "iter_vectors"]

EVENT_KINDS = (
    "publish", "deliver", "fault", "detect", "isolate",
    "substitute", "restore", "degraded",
)


def fmt(x: float) -> str:
    return f"{x:.6g}"


def fmt_vec(v) -> str:
    return ",".join(f"{x:.6g}" for x in np.asarray(v, dtype=float).reshape(-1))


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    subject: str
    payload: str

    def line(self) -> str:
        return f"{self.tick}\t{self.kind}\t{self.subject}\t{self.payload}"


class EventLog:
    """Tab-separated ``tick kind subject payload`` records after a ``#`` header."""

    def __init__(self, header: Iterable[str] = ()):
        self.header = list(header)
        self.events: list[Event] = []

    def record(self, tick: int, kind: str, subject: str, payload: str = "") -> None:
        self.events.append(Event(tick, kind, subject, payload))

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def text(self) -> str:
        lines = [f"# {h}" for h in self.header]
        lines += [e.line() for e in self.events]
        return "\n".join(lines) + "\n"


def parse_log(text: str) -> tuple[dict[str, str], list[Event]]:
    """Split a log into its ``key=value`` header settings and events."""
    settings: dict[str, str] = {}
    events = []
    for raw in text.splitlines():
        if not raw:
            continue
        if raw.startswith("#"):
            for tok in raw[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    settings[k] = v
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise ValueError(f"malformed log record: {raw!r}")
        events.append(Event(int(parts[0]), parts[1], parts[2], parts[3]))
    return settings, events


def iter_vectors(events: Iterable[Event], kind: str, prefix: str) -> Iterator[tuple[int, str, np.ndarray]]:
    for e in events:
        if e.kind == kind and e.subject.startswith(prefix):
            yield e.tick, e.subject[len(prefix):], np.array([float(x) for x in e.payload.split(",")])
