"""Knowledge base of system variables and the relations between them.

The knowledge base is a bipartite directed graph: variables on one side,
relations on the other. An edge ``v -> r`` means ``v`` is an input of ``r``;
``r -> v`` means ``r`` computes ``v``. Cycles are allowed.

Itoms are the concrete data streams bound to a variable. A variable counts as
*provided* once at least one of its itoms is available.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EvaluationError,
    ExpressionError,
    KnowledgeBaseError,
    UnknownVariableError,
)
from .expr import Expression, compile_expression

__all__ = [
    "Variable",
    "Relation",
    "ItomStatus",
    "Itom",
    "KnowledgeBase",
    "ItomRegistry",
    "Violation",
    "validate_kb",
    "provided_variables",
    "eval_relation",
]


@dataclass(frozen=True)
class Variable:
    id: str
    dims: int = 1
    units: tuple[str, ...] = ()
    # optional (lo, hi) per dimension; informational only
    ranges: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class Relation:
    id: str
    inputs: tuple[str, ...]
    output: str
    expr: str
    cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))

    @property
    def expression(self) -> Expression:
        return compile_expression(self.expr)


class ItomStatus(str, enum.Enum):
    AVAILABLE = "available"
    STALE = "stale"
    FAILED = "failed"


@dataclass
class Itom:
    """A provider-attributed data stream bound to one variable."""

    id: str
    variable: str
    provider: str
    timestamp: float | None = None
    value: np.ndarray | None = None
    status: ItomStatus = ItomStatus.AVAILABLE

    def __post_init__(self):
        self.status = ItomStatus(self.status)
        if self.value is not None:
            self.value = np.asarray(self.value, dtype=float).reshape(-1)

    @property
    def available(self) -> bool:
        return self.status is ItomStatus.AVAILABLE

    def update(self, value, timestamp: float) -> None:
        """Store a new sample. Timestamps must not go backwards."""
        if self.timestamp is not None and timestamp < self.timestamp:
            raise ValueError(
                f"itom {self.id}: timestamp {timestamp} precedes {self.timestamp}"
            )
        self.value = np.asarray(value, dtype=float).reshape(-1)
        self.timestamp = timestamp
        self.status = ItomStatus.AVAILABLE


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable variable/relation graph.

    ``extra_edges`` carries raw edges that do not come from a relation
    declaration (e.g. imported from another graph tool); they are checked by
    :func:`validate_kb` but otherwise ignored.
    """

    variables: tuple[Variable, ...] = ()
    relations: tuple[Relation, ...] = ()
    extra_edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "extra_edges", tuple(tuple(e) for e in self.extra_edges))

    @cached_property
    def var(self) -> dict[str, Variable]:
        return {v.id: v for v in self.variables}

    @cached_property
    def rel(self) -> dict[str, Relation]:
        return {r.id: r for r in self.relations}

    @cached_property
    def edges(self) -> tuple[tuple[str, str], ...]:
        out = []
        for r in self.relations:
            out.extend((i, r.id) for i in r.inputs)
            out.append((r.id, r.output))
        return tuple(out) + self.extra_edges

    @cached_property
    def producers(self) -> dict[str, tuple[Relation, ...]]:
        """Variable id -> relations that output it, sorted by relation id."""
        out: dict[str, list[Relation]] = {v.id: [] for v in self.variables}
        for r in sorted(self.relations, key=lambda r: r.id):
            out.setdefault(r.output, []).append(r)
        return {k: tuple(v) for k, v in out.items()}

    def is_variable(self, node: str) -> bool:
        return node in self.var

    def is_relation(self, node: str) -> bool:
        return node in self.rel


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.subject}: {self.message}"


def validate_kb(kb: KnowledgeBase) -> list[Violation]:
    """Check structural invariants; returns an empty list for a sound graph."""
    out: list[Violation] = []
    seen: dict[str, str] = {}
    for v in kb.variables:
        if v.id in seen:
            out.append(Violation("duplicate", v.id, f"id already declared as {seen[v.id]}"))
        seen[v.id] = "variable"
        if v.dims < 1:
            out.append(Violation("dims", v.id, f"dims must be >= 1, got {v.dims}"))
        if v.units and len(v.units) != v.dims:
            out.append(Violation("units", v.id, f"{len(v.units)} unit labels for {v.dims} dims"))
    for r in kb.relations:
        if r.id in seen:
            out.append(Violation("duplicate", r.id, f"id already declared as {seen[r.id]}"))
        seen[r.id] = "relation"

    var_ids = {v.id for v in kb.variables}
    rel_ids = {r.id for r in kb.relations}

    for r in kb.relations:
        if not r.inputs:
            out.append(Violation("inputs", r.id, "relation has no inputs"))
        if r.cost < 0:
            out.append(Violation("cost", r.id, f"negative cost {r.cost}"))
        broken = False
        for name, role in [(i, "input") for i in r.inputs] + [(r.output, "output")]:
            if name in rel_ids:
                out.append(
                    Violation("bipartite", f"{r.id}->{name}" if role == "output" else f"{name}->{r.id}",
                              f"{role} {name!r} is a relation, not a variable")
                )
                broken = True
            elif name not in var_ids:
                out.append(Violation("dangling", r.id, f"{role} {name!r} is not a declared variable"))
                broken = True
        try:
            expr = r.expression
        except ExpressionError as exc:
            out.append(Violation("expression", r.id, str(exc)))
            continue
        stray = sorted(expr.identifiers - set(r.inputs))
        for name in stray:
            out.append(Violation("scope", r.id, f"expression references undeclared input {name!r}"))
        if broken or stray:
            continue
        dims = {i: kb.var[i].dims for i in r.inputs}
        try:
            n = expr.output_length(dims)
        except ExpressionError as exc:
            out.append(Violation("expression", r.id, str(exc)))
            continue
        if n != kb.var[r.output].dims:
            out.append(
                Violation("arity", r.id,
                          f"expression yields {n} values, output {r.output!r} has dims={kb.var[r.output].dims}")
            )

    for src, dst in kb.extra_edges:
        known = [n in var_ids or n in rel_ids for n in (src, dst)]
        if not all(known):
            missing = src if not known[0] else dst
            out.append(Violation("dangling", f"{src}->{dst}", f"edge endpoint {missing!r} is not declared"))
        elif (src in var_ids) == (dst in var_ids):
            side = "variable" if src in var_ids else "relation"
            out.append(Violation("bipartite", f"{src}->{dst}", f"edge connects {side} to {side}"))
    return out


class ItomRegistry:
    """Mutable set of itoms, keyed by itom id."""

    def __init__(self, itoms: Iterable[Itom] = ()):
        self._itoms: dict[str, Itom] = {}
        for it in itoms:
            self.add(it)

    def add(self, itom: Itom) -> Itom:
        if itom.id in self._itoms:
            raise KnowledgeBaseError(f"duplicate itom id {itom.id!r}")
        self._itoms[itom.id] = itom
        return itom

    def remove(self, itom_id: str) -> None:
        del self._itoms[itom_id]

    def __getitem__(self, itom_id: str) -> Itom:
        return self._itoms[itom_id]

    def __contains__(self, itom_id) -> bool:
        return itom_id in self._itoms

    def __iter__(self):
        return iter(self._itoms.values())

    def __len__(self):
        return len(self._itoms)

    @property
    def association(self) -> dict[str, str]:
        return {i.id: i.variable for i in self._itoms.values()}

    def for_variable(self, variable: str, available_only: bool = False) -> list[Itom]:
        out = [i for i in self._itoms.values() if i.variable == variable]
        if available_only:
            out = [i for i in out if i.available]
        return sorted(out, key=lambda i: i.id)

    def freshest(self, variable: str) -> Itom | None:
        """Most recent available itom of ``variable``; ties go to the smaller id."""
        cands = self.for_variable(variable, available_only=True)
        if not cands:
            return None
        # max() keeps the first maximum, and cands is sorted by id
        return max(cands, key=_ts)

    def set_status(self, itom_id: str, status: ItomStatus | str) -> None:
        self._itoms[itom_id].status = ItomStatus(status)

    def copy(self) -> "ItomRegistry":
        return ItomRegistry(
            Itom(i.id, i.variable, i.provider, i.timestamp,
                 None if i.value is None else i.value.copy(), i.status)
            for i in self._itoms.values()
        )


def _ts(itom: Itom) -> float:
    return float("-inf") if itom.timestamp is None else itom.timestamp


def provided_variables(kb: KnowledgeBase, reg: ItomRegistry) -> frozenset[str]:
    """Variables with at least one available itom."""
    out = set()
    for it in reg:
        if it.variable not in kb.var:
            raise UnknownVariableError(it.variable, f"itom {it.id!r}")
        if it.available:
            out.add(it.variable)
    return frozenset(out)


def eval_relation(
    rel: Relation,
    bindings: Mapping[str, Sequence[float]],
    kb: KnowledgeBase | None = None,
) -> np.ndarray:
    """Evaluate ``rel`` on ``bindings`` (variable id -> vector).

    When ``kb`` is given, input and output arities are checked against the
    declared variable dims.
    """
    expr = rel.expression
    env = {}
    for name in rel.inputs:
        if name not in bindings:
            ref = next((r for r in expr.references if r.name == name), None)
            raise EvaluationError(f"missing binding for {name!r}", ref.pos if ref else None, rel.expr)
        vec = np.asarray(bindings[name], dtype=float).reshape(-1)
        if kb is not None and name in kb.var and vec.size != kb.var[name].dims:
            ref = next((r for r in expr.references if r.name == name), None)
            raise EvaluationError(
                f"{name!r} has {vec.size} values, expected {kb.var[name].dims}",
                ref.pos if ref else None,
                rel.expr,
            )
        env[name] = vec
    out = expr.evaluate(env)
    if kb is not None and rel.output in kb.var and out.size != kb.var[rel.output].dims:
        raise EvaluationError(
            f"result has {out.size} values, {rel.output!r} expects {kb.var[rel.output].dims}",
            0,
            rel.expr,
        )
    return out
