"""Deterministic topic bus with isolation and per-channel traffic counters."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field

import numpy as np

from ..diagnosis import ChannelStats
from .events import EventLog, fmt_vec

__all__ = ["BusMessage", "Received", "TopicBus"]


@dataclass
class BusMessage:
    topic: str
    publisher: str
    tick: int
    payload: np.ndarray
    # subscriber -> payload override (Byzantine sources)
    per_subscriber: dict[str, np.ndarray] | None = None
    # delivery tick; defaults to the publish tick
    due: int | None = None

    def payload_for(self, subscriber: str) -> np.ndarray:
        if self.per_subscriber and subscriber in self.per_subscriber:
            return self.per_subscriber[subscriber]
        return self.payload


@dataclass(frozen=True)
class Received:
    message: BusMessage
    payload: np.ndarray
    delivered: int


@dataclass
class _Channel:
    sent: list[int] = field(default_factory=list)
    received: list[int] = field(default_factory=list)


class TopicBus:
    """Publish/subscribe with tick-synchronous delivery.

    Messages are queued on :meth:`publish` and handed out by :meth:`deliver`
    in publish order, subscribers in id order. Publishers can be isolated:
    their messages are then kept in a per-subscriber quarantine instead of
    the inbox, so a health probe can still look at them.
    """

    def __init__(self, log: EventLog | None = None):
        self.log = log
        self._subs: dict[str, list[str]] = {}
        self._match_cache: dict[str, tuple[str, ...]] = {}
        self._pending: list[BusMessage] = []
        self._blocked: dict[str, list[tuple[int, float]]] = {}
        self.inbox: dict[str, dict[str, Received]] = {}
        self.quarantine: dict[str, dict[str, Received]] = {}
        self.channels: dict[str, _Channel] = {}
        self._text: dict[int, str] = {}  # formatted payload of queued messages
        self.published = 0
        self.delivered = 0

    def subscribe(self, subscriber: str, pattern: str) -> None:
        self._subs.setdefault(subscriber, []).append(pattern)
        self.inbox.setdefault(subscriber, {})
        self.quarantine.setdefault(subscriber, {})
        self._match_cache.clear()

    def subscribers(self, topic: str) -> tuple[str, ...]:
        hit = self._match_cache.get(topic)
        if hit is None:
            hit = tuple(
                s for s in sorted(self._subs)
                if any(fnmatch.fnmatchcase(topic, p) for p in self._subs[s])
            )
            self._match_cache[topic] = hit
        return hit

    def publish(self, msg: BusMessage) -> None:
        if msg.due is None:
            msg.due = msg.tick
        self._pending.append(msg)
        self.published += 1
        for s in self.subscribers(msg.topic):
            self._channel(msg.publisher, s).sent.append(msg.tick)
        if self.log is not None:
            text = fmt_vec(msg.payload)
            self._text[id(msg)] = text
            self.log.record(msg.tick, "publish", msg.topic, text)

    def isolate(self, publisher: str, from_tick: int) -> None:
        self._blocked.setdefault(publisher, []).append((from_tick, float("inf")))

    def restore(self, publisher: str, from_tick: int) -> None:
        spans = self._blocked.get(publisher, [])
        if spans and spans[-1][1] == float("inf"):
            spans[-1] = (spans[-1][0], from_tick)

    def is_blocked(self, publisher: str, tick: int) -> bool:
        return any(lo <= tick < hi for lo, hi in self._blocked.get(publisher, ()))

    def deliver(self, tick: int) -> list[tuple[str, BusMessage]]:
        """Hand out every queued message due at or before ``tick``."""
        due = [m for m in self._pending if m.due <= tick]
        if not due:
            return []
        self._pending = [m for m in self._pending if m.due > tick]
        out = []
        for msg in due:
            text = self._text.pop(id(msg), None)
            blocked = self.is_blocked(msg.publisher, tick)
            for s in self.subscribers(msg.topic):
                rec = Received(msg, msg.payload_for(s), tick)
                if blocked:
                    self.quarantine[s][msg.topic] = rec
                    continue
                self.inbox[s][msg.topic] = rec
                self._channel(msg.publisher, s).received.append(tick)
                self.delivered += 1
                out.append((s, msg))
                if self.log is not None:
                    shown = text if text is not None and rec.payload is msg.payload else fmt_vec(rec.payload)
                    self.log.record(tick, "deliver", f"{msg.topic}>{s}", shown)
        return out

    def fresh(self, subscriber: str, tick: int, include_quarantine: bool = False) -> dict[str, Received]:
        """Messages handed to ``subscriber`` at ``tick``, by topic."""
        out = {t: r for t, r in self.inbox[subscriber].items() if r.delivered == tick}
        if include_quarantine:
            for t, r in self.quarantine[subscriber].items():
                if r.delivered == tick and t not in out:
                    out[t] = r
        return out

    def _channel(self, publisher: str, subscriber: str) -> _Channel:
        key = f"{publisher}->{subscriber}"
        ch = self.channels.get(key)
        if ch is None:
            ch = self.channels[key] = _Channel()
        return ch

    def channel_stats(self, channel: str, start: int, end: int) -> ChannelStats:
        """Traffic of ``publisher->subscriber`` over ticks ``[start, end)``."""
        ch = self.channels.get(channel, _Channel())
        n_in = sum(1 for t in ch.sent if start <= t < end)
        n_out = sum(1 for t in ch.received if start <= t < end)
        return ChannelStats(channel, end - start, n_in, n_out)
