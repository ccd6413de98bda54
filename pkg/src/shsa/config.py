"""Readers and writers for the declarative text formats.

Knowledge-base files::

    variable pos dims=3 units=m,m,m/s
    relation r_add out=pos in=pos_behind,dist cost=1 expr="(pos_behind.0 + dist.0, ...)"
    itom gps_pos var=pos provider=gps

Scenario files use the same ``keyword id key=value ...`` layout; see
:mod:`shsa.harness.scenario` for the fields.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterator

from .errors import ConfigSyntaxError, ExpressionSyntaxError, KnowledgeBaseError
from .knowledge_base import (
    Itom,
    ItomRegistry,
    ItomStatus,
    KnowledgeBase,
    Relation,
    Variable,
    Violation,
    validate_kb,
)

__all__ = [
    "Line",
    "KbValidationError",
    "tokenize_lines",
    "parse_kb_file",
    "serialize_kb",
    "bundled",
]

_FIELD = re.compile(r'\s*(?:([A-Za-z_][\w.]*)=("(?:[^"\\]|\\.)*"|[^\s"]*)|("(?:[^"\\]|\\.)*"|[^\s=]+))')


@dataclass
class Line:
    number: int
    keyword: str
    name: str | None
    fields: dict[str, str]
    columns: dict[str, int]  # field -> 1-based column of its value

    def require(self, key: str) -> str:
        if key not in self.fields:
            raise ConfigSyntaxError(f"{self.keyword} {self.name}: missing field {key!r}", self.number, 1)
        return self.fields[key]

    def col(self, key: str) -> int:
        return self.columns.get(key, 1)

    def fail(self, msg: str, key: str | None = None) -> ConfigSyntaxError:
        return ConfigSyntaxError(msg, self.number, self.col(key) if key else 1)


def _unquote(tok: str) -> str:
    if len(tok) >= 2 and tok[0] == tok[-1] == '"':
        return re.sub(r"\\(.)", r"\1", tok[1:-1])
    return tok


def tokenize_lines(text: str) -> Iterator[Line]:
    """Split a config text into ``keyword [name] key=value...`` records."""
    for number, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0] if '"' not in raw else _strip_comment(raw)
        if not body.strip():
            continue
        pos = 0
        words: list[tuple[str, int]] = []
        fields: dict[str, str] = {}
        columns: dict[str, int] = {}
        while pos < len(body):
            if body[pos:].strip() == "":
                break
            m = _FIELD.match(body, pos)
            if m is None or m.end() == pos:
                col = len(body) - len(body[pos:].lstrip()) + 1
                raise ConfigSyntaxError(f"cannot parse {body[pos:].strip()!r}", number, col)
            if m.group(1):
                key = m.group(1)
                if key in fields:
                    raise ConfigSyntaxError(f"duplicate field {key!r}", number, m.start(1) + 1)
                if m.group(2).startswith('"') and (len(m.group(2)) < 2 or not m.group(2).endswith('"')):
                    raise ConfigSyntaxError("unterminated string", number, m.start(2) + 1)
                fields[key] = _unquote(m.group(2))
                columns[key] = m.start(2) + 1 + (1 if m.group(2).startswith('"') else 0)
            else:
                tok = m.group(3)
                if tok.startswith('"') and not (len(tok) >= 2 and tok.endswith('"')):
                    raise ConfigSyntaxError("unterminated string", number, m.start(3) + 1)
                if fields:
                    raise ConfigSyntaxError(f"unexpected word {tok!r} after fields", number, m.start(3) + 1)
                words.append((_unquote(tok), m.start(3) + 1))
            pos = m.end()
        if len(words) > 2:
            raise ConfigSyntaxError(f"unexpected word {words[2][0]!r}", number, words[2][1])
        yield Line(number, words[0][0], words[1][0] if len(words) > 1 else None, fields, columns)


def _strip_comment(raw: str) -> str:
    quoted = False
    for k, ch in enumerate(raw):
        if ch == '"' and (k == 0 or raw[k - 1] != "\\"):
            quoted = not quoted
        elif ch == "#" and not quoted:
            return raw[:k]
    return raw


class KbValidationError(KnowledgeBaseError):
    def __init__(self, violations: list[Violation], lines: dict[str, int]):
        self.violations = violations
        self.lines = lines
        parts = []
        for v in violations:
            where = lines.get(v.subject.split("->")[0]) or lines.get(v.subject.split("->")[-1])
            parts.append(f"line {where}: {v}" if where else str(v))
        super().__init__("invalid knowledge base:\n  " + "\n  ".join(parts))


def _csv(value: str) -> list[str]:
    return [p for p in value.split(",") if p] if value else []


def _number(line: Line, key: str, cast=float, default=None):
    if key not in line.fields:
        if default is None:
            raise line.fail(f"missing field {key!r}")
        return default
    try:
        return cast(line.fields[key])
    except ValueError:
        raise line.fail(f"field {key}={line.fields[key]!r} is not a valid {cast.__name__}", key) from None


def parse_kb_file(text: str, validate: bool = True) -> tuple[KnowledgeBase, ItomRegistry]:
    """Parse a knowledge-base file and (by default) validate the result."""
    variables: list[Variable] = []
    relations: list[Relation] = []
    itoms: list[Itom] = []
    where: dict[str, int] = {}
    itom_lines: list[Line] = []
    for line in tokenize_lines(text):
        if line.name is None:
            raise line.fail(f"{line.keyword}: missing id")
        where.setdefault(line.name, line.number)
        if line.keyword == "variable":
            dims = _number(line, "dims", int, 1)
            units = tuple(_csv(line.fields.get("units", "")))
            ranges = []
            for part in _csv(line.fields.get("ranges", "")):
                try:
                    lo, hi = (float(x) for x in part.split(":"))
                except ValueError:
                    raise line.fail(f"bad range {part!r}, expected lo:hi", "ranges") from None
                ranges.append((lo, hi))
            variables.append(Variable(line.name, dims, units, tuple(ranges)))
        elif line.keyword == "relation":
            inputs = tuple(_csv(line.require("in")))
            out = line.require("out")
            expr = line.require("expr")
            cost = _number(line, "cost", float, 1.0)
            rel = Relation(line.name, inputs, out, expr, cost)
            try:
                compiled = rel.expression
            except ExpressionSyntaxError as exc:
                raise ConfigSyntaxError(
                    f"relation {line.name}: {exc.args[0]}", line.number,
                    line.col("expr") + (exc.pos or 0),
                ) from None
            for ref in compiled.references:
                if ref.name not in inputs:
                    raise ConfigSyntaxError(
                        f"relation {line.name}: expression uses undeclared input {ref.name!r}",
                        line.number,
                        line.col("expr") + ref.pos,
                    )
            relations.append(rel)
        elif line.keyword == "itom":
            itom_lines.append(line)
            status = line.fields.get("status", "available")
            try:
                status = ItomStatus(status)
            except ValueError:
                raise line.fail(f"unknown itom status {status!r}", "status") from None
            itoms.append(Itom(line.name, line.require("var"), line.require("provider"), status=status))
        else:
            raise ConfigSyntaxError(f"unknown keyword {line.keyword!r}", line.number, 1)
    kb = KnowledgeBase(tuple(variables), tuple(relations))
    for line, it in zip(itom_lines, itoms):
        if it.variable not in kb.var:
            raise line.fail(f"itom {it.id}: unknown variable {it.variable!r}", "var")
    try:
        reg = ItomRegistry(itoms)
    except KnowledgeBaseError as exc:
        raise ConfigSyntaxError(str(exc)) from None
    if validate:
        problems = validate_kb(kb)
        if problems:
            raise KbValidationError(problems, where)
    return kb, reg


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_kb(kb: KnowledgeBase, reg: ItomRegistry | None = None) -> str:
    out = []
    for v in kb.variables:
        line = f"variable {v.id} dims={v.dims}"
        if v.units:
            line += " units=" + ",".join(v.units)
        if v.ranges:
            line += " ranges=" + ",".join(f"{lo:g}:{hi:g}" for lo, hi in v.ranges)
        out.append(line)
    for r in kb.relations:
        out.append(
            f"relation {r.id} out={r.output} in={','.join(r.inputs)} cost={r.cost:g} expr={_quote(r.expr)}"
        )
    for it in reg or ():
        line = f"itom {it.id} var={it.variable} provider={it.provider}"
        if it.status is not ItomStatus.AVAILABLE:
            line += f" status={it.status.value}"
        out.append(line)
    return "\n".join(out) + ("\n" if out else "")


def bundled(name: str) -> str:
    """Text of a data file shipped with the package (e.g. ``highway.kb``)."""
    return resources.files("shsa").joinpath("data").joinpath(name).read_text()
