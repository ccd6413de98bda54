"""A small arithmetic language for relation bodies.

Relations are written as plain expressions over their input variables::

    (pos_prev.0 + pos_prev.2 * (t - t_prev), pos_prev.1, pos_prev.2)

Every value is a 1-D float vector. ``name`` yields the whole vector of an
input variable, ``name.k`` its k-th component (a length-1 vector). Binary
operators work element-wise; a length-1 operand broadcasts. A parenthesised
list ``(e1, e2, ...)`` concatenates its elements.

Builtins: ``min``/``max`` (one argument: reduce, several: element-wise),
``abs`` and ``nearest_ahead(D)``, which takes a distance vector laid out as
``(count, d1, d2, ...)`` and returns the smallest positive distance among the
first ``count`` entries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import EvaluationError, ExpressionSyntaxError

__all__ = ["Expression", "compile_expression", "BUILTINS"]

BUILTINS = ("min", "max", "abs", "nearest_ahead")

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


# AST nodes. ``pos`` always points at the first character of the construct
# (or at the operator for binary operations).
@dataclass(frozen=True)
class Num:
    value: float
    pos: int


@dataclass(frozen=True)
class Ref:
    name: str
    index: int | None
    pos: int


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]
    pos: int


@dataclass(frozen=True)
class Tuple_:
    items: tuple["Node", ...]
    pos: int


Node = Union[Num, Ref, BinOp, Neg, Call, Tuple_]


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    i = 0
    while i < len(src):
        m = _TOKEN.match(src, i)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {src[i]!r}", i, src)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), i))
        i = m.end()
    toks.append(_Tok("eof", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.cur
        raise ExpressionSyntaxError(msg, tok.pos, self.src)

    def _eat(self, text: str) -> _Tok:
        if self.cur.text != text or self.cur.kind not in ("op",):
            what = self.cur.text or "end of expression"
            self._fail(f"expected {text!r}, found {what!r}")
        tok = self.cur
        self.i += 1
        return tok

    def parse(self) -> Node:
        if self.cur.kind == "eof":
            self._fail("empty expression")
        node = self._expr()
        if self.cur.kind != "eof":
            self._fail(f"unexpected {self.cur.text!r}")
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            tok = self.cur
            self.i += 1
            node = BinOp(tok.text, node, self._term(), tok.pos)
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            tok = self.cur
            self.i += 1
            node = BinOp(tok.text, node, self._unary(), tok.pos)
        return node

    def _unary(self) -> Node:
        tok = self.cur
        if tok.kind == "op" and tok.text in "+-":
            self.i += 1
            operand = self._unary()
            return operand if tok.text == "+" else Neg(operand, tok.pos)
        return self._atom()

    def _atom(self) -> Node:
        tok = self.cur
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text), tok.pos)
        if tok.kind == "ident":
            self.i += 1
            if self.cur.kind == "op" and self.cur.text == "(":
                if tok.text not in BUILTINS:
                    self._fail(f"unknown function {tok.text!r}", tok)
                self.i += 1
                args = self._list(")")
                if tok.text in ("abs", "nearest_ahead") and len(args) != 1:
                    self._fail(f"{tok.text}() takes exactly one argument", tok)
                return Call(tok.text, args, tok.pos)
            if tok.text in BUILTINS:
                self._fail(f"builtin {tok.text!r} used without arguments", tok)
            index = None
            if self.cur.kind == "op" and self.cur.text == ".":
                self.i += 1
                if self.cur.kind != "num" or not self.cur.text.isdigit():
                    self._fail("expected component index after '.'")
                index = int(self.cur.text)
                self.i += 1
            elif self.cur.kind == "num" and self.cur.text.startswith("."):
                # ``pos.0`` tokenizes as ident + number ".0"
                frac = self.cur.text[1:]
                if not frac.isdigit():
                    self._fail("expected component index after '.'")
                index = int(frac)
                self.i += 1
            return Ref(tok.text, index, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            items = self._list(")")
            if len(items) == 1:
                return items[0]
            return Tuple_(items, tok.pos)
        what = tok.text or "end of expression"
        self._fail(f"unexpected {what!r}")

    def _list(self, close: str) -> tuple[Node, ...]:
        items = [self._expr()]
        while self.cur.kind == "op" and self.cur.text == ",":
            self.i += 1
            items.append(self._expr())
        self._eat(close)
        return tuple(items)


def _refs(node: Node, out: list[Ref]) -> None:
    if isinstance(node, Ref):
        out.append(node)
    elif isinstance(node, BinOp):
        _refs(node.left, out)
        _refs(node.right, out)
    elif isinstance(node, Neg):
        _refs(node.operand, out)
    elif isinstance(node, (Call, Tuple_)):
        for child in node.args if isinstance(node, Call) else node.items:
            _refs(child, out)


def _broadcast(a: int, b: int, pos: int, src: str, err=EvaluationError) -> int:
    if a == b or b == 1:
        return a
    if a == 1:
        return b
    raise err(f"length mismatch: {a} vs {b}", pos, src)


class Expression:
    """A parsed relation expression."""

    def __init__(self, source: str):
        self.source = source
        self.ast = _Parser(source).parse()
        refs: list[Ref] = []
        _refs(self.ast, refs)
        self.references = tuple(refs)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self):
        return hash(self.source)

    @property
    def identifiers(self) -> frozenset[str]:
        return frozenset(r.name for r in self.references)

    def output_length(self, dims: Mapping[str, int]) -> int:
        """Statically infer the result length given the input arities.

        Raises ``ExpressionSyntaxError`` on out-of-range component access or
        incompatible operand lengths.
        """
        return self._length(self.ast, dims)

    def _length(self, node: Node, dims: Mapping[str, int]) -> int:
        err = ExpressionSyntaxError
        if isinstance(node, Num):
            return 1
        if isinstance(node, Ref):
            if node.name not in dims:
                raise err(f"undeclared identifier {node.name!r}", node.pos, self.source)
            n = dims[node.name]
            if node.index is None:
                return n
            if node.index >= n:
                raise err(
                    f"component {node.name}.{node.index} out of range (dims={n})",
                    node.pos,
                    self.source,
                )
            return 1
        if isinstance(node, BinOp):
            a = self._length(node.left, dims)
            b = self._length(node.right, dims)
            return _broadcast(a, b, node.pos, self.source, err)
        if isinstance(node, Neg):
            return self._length(node.operand, dims)
        if isinstance(node, Tuple_):
            return sum(self._length(item, dims) for item in node.items)
        # Call
        lens = [self._length(a, dims) for a in node.args]
        if node.func == "nearest_ahead":
            return 1
        if node.func in ("min", "max") and len(lens) == 1:
            return 1
        n = lens[0]
        for m in lens[1:]:
            n = _broadcast(n, m, node.pos, self.source, err)
        return n

    def evaluate(self, bindings: Mapping[str, Sequence[float]]) -> np.ndarray:
        """Evaluate against ``bindings`` (identifier -> vector)."""
        return self._eval(self.ast, bindings)

    def _eval(self, node: Node, env) -> np.ndarray:
        if isinstance(node, Num):
            return np.array([node.value])
        if isinstance(node, Ref):
            if node.name not in env:
                raise EvaluationError(f"missing binding for {node.name!r}", node.pos, self.source)
            vec = np.asarray(env[node.name], dtype=float).reshape(-1)
            if node.index is None:
                return vec
            if node.index >= vec.size:
                raise EvaluationError(
                    f"component {node.name}.{node.index} out of range (got {vec.size} values)",
                    node.pos,
                    self.source,
                )
            return vec[node.index : node.index + 1]
        if isinstance(node, BinOp):
            a = self._eval(node.left, env)
            b = self._eval(node.right, env)
            _broadcast(a.size, b.size, node.pos, self.source)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if np.any(b == 0.0):
                raise EvaluationError("division by zero", node.pos, self.source)
            return a / b
        if isinstance(node, Neg):
            return -self._eval(node.operand, env)
        if isinstance(node, Tuple_):
            return np.concatenate([self._eval(item, env) for item in node.items])
        args = [self._eval(a, env) for a in node.args]
        if node.func == "abs":
            return np.abs(args[0])
        if node.func == "nearest_ahead":
            return self._nearest_ahead(args[0], node.pos)
        reduce = np.min if node.func == "min" else np.max
        if len(args) == 1:
            return np.array([reduce(args[0])])
        out = args[0]
        for a in args[1:]:
            _broadcast(out.size, a.size, node.pos, self.source)
            out = np.minimum(out, a) if node.func == "min" else np.maximum(out, a)
        return out

    def _nearest_ahead(self, cloud: np.ndarray, pos: int) -> np.ndarray:
        if cloud.size < 1:
            raise EvaluationError("nearest_ahead() needs a (count, d1, ...) vector", pos, self.source)
        count = int(cloud[0])
        if count < 0 or count > cloud.size - 1:
            raise EvaluationError(f"invalid point count {count}", pos, self.source)
        pts = cloud[1 : 1 + count]
        ahead = pts[pts > 0.0]
        if ahead.size == 0:
            raise EvaluationError("no point ahead", pos, self.source)
        return np.array([ahead.min()])


@lru_cache(maxsize=1024)
def compile_expression(source: str) -> Expression:
    return Expression(source)
