"""Search for substitutions of a variable and run them as substitutes.

A substitution re-derives one variable (its root) from other variables by
chaining relations of the knowledge base. Structurally it is a connected
acyclic subgraph where

  (i)   the root is the only sink,
  (ii)  every variable has at most one producing relation,
  (iii) every included relation has all its inputs included,

so its sources are variables. It is valid once every source is provided.

Depth counts variables along the longest path to the root: the root alone has
depth 1, one relation layer gives depth 2, and so on.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .errors import MalformedSubstitutionError, SubstitutionError, UnknownVariableError
from .knowledge_base import Itom, ItomRegistry, ItomStatus, KnowledgeBase, Relation, eval_relation

__all__ = [
    "Substitution",
    "SearchConfig",
    "Substitute",
    "structure_violations",
    "is_valid",
    "enumerate_substitutions",
    "substitution_cost",
    "best_substitution",
    "instantiate_substitute",
    "format_report",
]

DEFAULT_MAX_DEPTH = 8


@dataclass(frozen=True)
class Substitution:
    root: str
    variables: frozenset[str]
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", frozenset(self.variables))
        object.__setattr__(self, "relations", tuple(sorted(self.relations, key=lambda r: r.id)))

    @classmethod
    def from_nodes(cls, kb: KnowledgeBase, root: str, nodes: Iterable[str]) -> "Substitution":
        nodes = set(nodes)
        return cls(
            root,
            frozenset(n for n in nodes if n in kb.var),
            tuple(kb.rel[n] for n in nodes if n in kb.rel),
        )

    @cached_property
    def relation_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.relations)

    @cached_property
    def nodes(self) -> frozenset[str]:
        return self.variables | frozenset(self.relation_ids)

    @cached_property
    def edges(self) -> frozenset[tuple[str, str]]:
        out = set()
        for r in self.relations:
            out.update((i, r.id) for i in r.inputs if i in self.variables)
            if r.output in self.variables:
                out.add((r.id, r.output))
        return frozenset(out)

    @cached_property
    def producer(self) -> dict[str, Relation]:
        return {r.output: r for r in self.relations}

    @cached_property
    def sources(self) -> frozenset[str]:
        return frozenset(v for v in self.variables if v not in self.producer)

    @cached_property
    def depth(self) -> int:
        levels: dict[str, int] = {}

        def visit(v: str, level: int, trail: frozenset):
            if v in trail:
                return
            if levels.get(v, 0) >= level:
                return
            levels[v] = level
            rel = self.producer.get(v)
            if rel is not None:
                for u in rel.inputs:
                    visit(u, level + 1, trail | {v})

        visit(self.root, 1, frozenset())
        return max(levels.values(), default=0)

    @cached_property
    def key(self) -> tuple:
        """Deterministic tie-break key: relation ids first, then variables."""
        return (self.relation_ids, tuple(sorted(self.variables)))

    def topological_relations(self) -> list[Relation]:
        """Relations ordered so every relation runs after its inputs' producers."""
        done: set[str] = set()
        order: list[Relation] = []

        def visit(v: str):
            rel = self.producer.get(v)
            if rel is None or rel.id in done:
                return
            done.add(rel.id)
            for u in sorted(rel.inputs):
                visit(u)
            order.append(rel)

        visit(self.root)
        return order

    def __str__(self):
        if not self.relations:
            return f"{{{self.root}}}"
        return _describe(self, self.root)


def _describe(sub: Substitution, v: str) -> str:
    rel = sub.producer.get(v)
    if rel is None:
        return v
    args = ", ".join(_describe(sub, u) for u in rel.inputs)
    return f"{v} <- {rel.id}({args})"


def structure_violations(sub: Substitution) -> list[str]:
    """List the structural properties ``sub`` breaks (empty when well formed)."""
    out = []
    if sub.root not in sub.variables:
        out.append(f"(i) root {sub.root!r} is not part of the substitution")
        return out
    consumers: dict[str, int] = {v: 0 for v in sub.variables}
    for r in sub.relations:
        for i in r.inputs:
            if i in consumers:
                consumers[i] += 1
    if consumers[sub.root]:
        out.append(f"(i) root {sub.root!r} feeds a relation of the substitution")
    sinks = sorted(v for v, n in consumers.items() if n == 0 and v != sub.root)
    sinks += sorted(r.id for r in sub.relations if r.output not in sub.variables)
    if sinks:
        out.append(f"(i) additional sinks {sinks}")
    per_var: dict[str, list[str]] = {}
    for r in sub.relations:
        per_var.setdefault(r.output, []).append(r.id)
    for v, rels in sorted(per_var.items()):
        if len(rels) > 1:
            out.append(f"(ii) variable {v!r} has {len(rels)} predecessor relations {rels}")
    for r in sub.relations:
        missing = [i for i in r.inputs if i not in sub.variables]
        if missing:
            out.append(f"(iii) relation {r.id!r} misses inputs {missing}")
    if _has_cycle(sub):
        out.append("cycle in substitution")
    if not _connected(sub):
        out.append("substitution is not connected")
    return out


def _has_cycle(sub: Substitution) -> bool:
    succ: dict[str, list[str]] = {n: [] for n in sub.nodes}
    for a, b in sub.edges:
        succ[a].append(b)
    state: dict[str, int] = {}

    def dfs(n: str) -> bool:
        state[n] = 1
        for m in succ[n]:
            s = state.get(m, 0)
            if s == 1 or (s == 0 and dfs(m)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and dfs(n) for n in sorted(sub.nodes))


def _connected(sub: Substitution) -> bool:
    if not sub.nodes:
        return False
    adj: dict[str, set[str]] = {n: set() for n in sub.nodes}
    for a, b in sub.edges:
        adj[a].add(b)
        adj[b].add(a)
    start = sub.root if sub.root in adj else next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(adj)


def is_valid(sub: Substitution, provided: Iterable[str]) -> bool:
    """True iff ``sub`` is well formed and all its sources are provided."""
    problems = structure_violations(sub)
    if problems:
        raise MalformedSubstitutionError(problems)
    return sub.sources <= frozenset(provided)


@dataclass(frozen=True)
class SearchConfig:
    relation_weight: float = 1.0
    staleness_weight: float = 0.0
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.relation_weight < 0 or self.staleness_weight < 0:
            raise ValueError("search weights must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


class _Partial:
    """A substitution under construction.

    ``chosen`` maps each decided variable to its producing relation, or
    ``None`` when the variable was made a source. ``frontier`` holds the
    variables still to decide, in id order.
    """

    __slots__ = ("root", "chosen", "frontier", "levels")

    def __init__(self, root, chosen, frontier, levels):
        self.root = root
        self.chosen: dict[str, Relation | None] = chosen
        self.frontier: tuple[str, ...] = frontier
        self.levels: dict[str, int] = levels

    @classmethod
    def start(cls, root: str) -> "_Partial":
        return cls(root, {}, (root,), {root: 1})

    @property
    def variables(self):
        return set(self.chosen) | set(self.frontier)

    def as_source(self) -> "_Partial":
        v = self.frontier[0]
        chosen = dict(self.chosen)
        chosen[v] = None
        return _Partial(self.root, chosen, self.frontier[1:], self.levels)

    def downstream(self, v: str) -> set[str]:
        """Variables reachable from ``v`` towards the root (excluding ``v``)."""
        consumers: dict[str, list[str]] = {}
        for out, rel in self.chosen.items():
            if rel is not None:
                for i in rel.inputs:
                    consumers.setdefault(i, []).append(out)
        seen: set[str] = set()
        stack = [v]
        while stack:
            for w in consumers.get(stack.pop(), ()):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def expand(self, rel: Relation, max_depth: int) -> "_Partial | None":
        v = self.frontier[0]
        present = self.variables
        blocked = self.downstream(v) | {v}
        if any(i in blocked for i in rel.inputs):
            return None
        chosen = dict(self.chosen)
        chosen[v] = rel
        levels = dict(self.levels)
        grow = [(i, levels[v] + 1) for i in rel.inputs]
        # push level increases through already-expanded shared variables
        while grow:
            u, lvl = grow.pop()
            if levels.get(u, 0) >= lvl:
                continue
            if lvl > max_depth:
                return None
            levels[u] = lvl
            prod = chosen.get(u)
            if prod is not None:
                grow.extend((w, lvl + 1) for w in prod.inputs)
        new = [i for i in rel.inputs if i not in present]
        frontier = tuple(sorted(set(self.frontier[1:]) | set(new)))
        return _Partial(self.root, chosen, frontier, levels)

    def finish(self) -> Substitution:
        return Substitution(
            self.root,
            frozenset(self.chosen),
            tuple(r for r in self.chosen.values() if r is not None),
        )


def _check_target(kb: KnowledgeBase, target: str) -> None:
    if target not in kb.var:
        raise UnknownVariableError(target, "substitution target")


def _walk(
    kb: KnowledgeBase,
    partial: _Partial,
    max_depth: int,
    can_source: Callable[[str], bool],
) -> Iterator[Substitution]:
    if not partial.frontier:
        yield partial.finish()
        return
    v = partial.frontier[0]
    if can_source(v):
        yield from _walk(kb, partial.as_source(), max_depth, can_source)
    for rel in kb.producers.get(v, ()):
        nxt = partial.expand(rel, max_depth)
        if nxt is not None:
            yield from _walk(kb, nxt, max_depth, can_source)


def enumerate_substitutions(
    kb: KnowledgeBase, target: str, max_depth: int = DEFAULT_MAX_DEPTH
) -> list[Substitution]:
    """All well-formed substitutions rooted at ``target`` up to ``max_depth``.

    Ordered by number of relations, then by the tie-break key.
    """
    _check_target(kb, target)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    subs = set(_walk(kb, _Partial.start(target), max_depth, lambda v: True))
    return sorted(subs, key=lambda s: (len(s.relations), s.key))


def _age(reg: ItomRegistry | None, variable: str, now: float | None) -> float:
    if reg is None or now is None:
        return 0.0
    it = reg.freshest(variable)
    if it is None or it.timestamp is None:
        return 0.0
    return max(0.0, now - it.timestamp)


def _default_now(reg: ItomRegistry | None) -> float | None:
    if reg is None:
        return None
    stamps = [i.timestamp for i in reg if i.timestamp is not None]
    return max(stamps) if stamps else None


def substitution_cost(
    sub: Substitution,
    reg: ItomRegistry | None = None,
    cfg: SearchConfig = SearchConfig(),
    now: float | None = None,
) -> float:
    """Weighted relation cost plus weighted age of each source's freshest itom."""
    if now is None:
        now = _default_now(reg)
    rel = sum(sorted(r.cost for r in sub.relations))
    stale = sum(sorted(_age(reg, v, now) for v in sub.sources))
    return cfg.relation_weight * rel + cfg.staleness_weight * stale


def _rank(cost: float, sub: Substitution) -> tuple:
    return (round(cost, 9), sub.key)


def best_substitution(
    kb: KnowledgeBase,
    target: str,
    provided: Iterable[str],
    reg: ItomRegistry | None = None,
    cfg: SearchConfig = SearchConfig(),
    now: float | None = None,
) -> Substitution | None:
    """Cheapest valid substitution of ``target``, or ``None`` if there is none.

    Best-first search over partial substitutions: a partial's cost only grows
    as it is expanded (weights are non-negative), so once a complete
    substitution is popped nothing cheaper remains in the queue. All complete
    substitutions at that cost are collected and the tie-break key decides.
    ``now`` defaults to the newest timestamp in ``reg``.
    """
    _check_target(kb, target)
    provided = frozenset(provided)
    if now is None:
        now = _default_now(reg)

    def source_cost(v: str) -> float:
        return cfg.staleness_weight * _age(reg, v, now)

    counter = itertools.count()
    heap = [(0.0, next(counter), _Partial.start(target))]
    best: tuple | None = None
    best_sub: Substitution | None = None
    while heap:
        cost, _, part = heapq.heappop(heap)
        if best is not None and cost > best[0] + 1e-9:
            break
        if not part.frontier:
            sub = part.finish()
            rank = _rank(substitution_cost(sub, reg, cfg, now), sub)
            if best is None or rank < best:
                best, best_sub = rank, sub
            continue
        v = part.frontier[0]
        if v in provided:
            heapq.heappush(heap, (cost + source_cost(v), next(counter), part.as_source()))
        for rel in kb.producers.get(v, ()):
            nxt = part.expand(rel, cfg.max_depth)
            if nxt is not None:
                step = cfg.relation_weight * rel.cost
                heapq.heappush(heap, (cost + step, next(counter), nxt))
    return best_sub


class Substitute:
    """Running instance of a substitution.

    Each :meth:`step` reads the selected source itoms, evaluates the relation
    chain in topological order and writes the root value into the output
    itom. If a selected itom is no longer available the output turns stale,
    keeps its last value and :attr:`needs_search` is raised.
    """

    def __init__(
        self,
        substitution: Substitution,
        selected: Mapping[str, str],
        period: float,
        output_itom: str,
        provider: str = "substitute",
    ):
        self.substitution = substitution
        self.selected = dict(selected)
        self.period = period
        self.output_itom = output_itom
        self.provider = provider
        self.needs_search = False
        self.last_value: np.ndarray | None = None
        self.last_publish: float | None = None
        self._order = substitution.topological_relations()

    def __repr__(self):
        return f"Substitute({self.substitution}, selected={self.selected})"

    @property
    def status(self) -> ItomStatus:
        return ItomStatus.STALE if self.needs_search else ItomStatus.AVAILABLE

    def compute(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        """Evaluate the chain on source values (variable id -> vector)."""
        env = {v: np.asarray(values[v], dtype=float).reshape(-1) for v in self.substitution.sources}
        for rel in self._order:
            env[rel.output] = eval_relation(rel, env)
        return env[self.substitution.root]

    def step(self, reg: ItomRegistry, now: float) -> np.ndarray | None:
        """Run one tick; returns the published value or ``None`` if nothing was published."""
        values = {}
        for var, itom_id in self.selected.items():
            it = reg[itom_id] if itom_id in reg else None
            if it is None or not it.available or it.value is None:
                self.needs_search = True
                self._write(reg, self.last_value, now, ItomStatus.STALE)
                return None
            values[var] = it.value
        if self.last_publish is not None and now - self.last_publish < self.period - 1e-9:
            return None
        value = self.compute(values)
        self.last_value = value
        self.last_publish = now
        self._write(reg, value, now, ItomStatus.AVAILABLE)
        return value

    def _write(self, reg: ItomRegistry, value, now: float, status: ItomStatus) -> None:
        if self.output_itom not in reg:
            reg.add(Itom(self.output_itom, self.substitution.root, self.provider))
        it = reg[self.output_itom]
        if status is ItomStatus.AVAILABLE:
            it.update(value, now)
        else:
            it.status = status


def instantiate_substitute(
    sub: Substitution,
    reg: ItomRegistry,
    period: float,
    output_itom: str | None = None,
    provider: str = "substitute",
) -> Substitute:
    """Bind the freshest available itom to every source of ``sub``."""
    provided = {i.variable for i in reg if i.available}
    if not is_valid(sub, provided):
        missing = sorted(sub.sources - provided)
        raise SubstitutionError(f"substitution {sub} is not valid: unprovided sources {missing}")
    selected = {v: reg.freshest(v).id for v in sorted(sub.sources)}
    return Substitute(sub, selected, period, output_itom or f"substitute:{sub.root}", provider)


def format_report(
    sub: Substitution,
    selected: Mapping[str, str] | None = None,
    cost: float | None = None,
) -> str:
    lines = [f"root: {sub.root}"]
    order = [r.id for r in sub.topological_relations()]
    lines.append("relations: " + (" ".join(order) if order else "-"))
    srcs = []
    for v in sorted(sub.sources):
        if selected and v in selected:
            srcs.append(f"{v}<-{selected[v]}")
        else:
            srcs.append(v)
    lines.append("sources: " + " ".join(srcs))
    if cost is not None:
        lines.append(f"cost: {cost:.6g}")
    return "\n".join(lines) + "\n"
