"""Restricted declarative predicate language for gate nodes.

Gates must stay serializable and auditable, so predicates are plain strings
in a small grammar rather than arbitrary code:

    expr       := or_expr
    or_expr    := and_expr ("or" and_expr)*
    and_expr   := unary ("and" unary)*
    unary      := "not" unary | "(" expr ")" | comparison
    comparison := KEY OP value
    OP         := "==" | "!=" | "<=" | ">=" | "<" | ">" | "contains"
    value      := quoted string | number | true | false | bare word
    KEY        := identifier ("." identifier)*

Keys name entries in the executor's auxiliary state store. Comparisons are
numeric when both sides parse as numbers, string-wise otherwise; `contains`
is substring containment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class PredicateError(Exception):
    """Predicate text does not conform to the grammar."""


class MissingKey(Exception):
    """Predicate referenced a key absent from the state mapping."""

    def __init__(self, key: str):
        super().__init__(f"missing state key: {key}")
        self.key = key


_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<lparen>\()
      | (?P<rparen>\))
      | (?P<op>==|!=|<=|>=|<|>)
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<number>-?\d+(?:\.\d+)?)
      | (?P<word>[A-Za-z_][A-Za-z0-9_-]*(?:\.[A-Za-z_][A-Za-z0-9_-]*)*)
    )""",
    re.VERBOSE,
)

_KEYWORDS = frozenset({"and", "or", "not", "contains", "true", "false"})


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise PredicateError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
            break
        pos = m.end()
        kind = m.lastgroup
        value = m.group(kind)
        tokens.append((kind, value))
    return tokens


# AST nodes -----------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    key: str
    op: str
    value: object  # str | float

    def keys(self) -> set[str]:
        return {self.key}

    def evaluate(self, state: dict) -> bool:
        if self.key not in state:
            raise MissingKey(self.key)
        left = state[self.key]
        right = self.value
        if self.op == "contains":
            return str(right) in str(left)
        lf, rf = _as_number(left), _as_number(right)
        if lf is not None and rf is not None:
            left, right = lf, rf
        else:
            left, right = str(left), str(right)
        if self.op == "==":
            return left == right
        if self.op == "!=":
            return left != right
        if self.op == "<":
            return left < right
        if self.op == "<=":
            return left <= right
        if self.op == ">":
            return left > right
        if self.op == ">=":
            return left >= right
        raise PredicateError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Not:
    inner: object

    def keys(self) -> set[str]:
        return self.inner.keys()

    def evaluate(self, state: dict) -> bool:
        return not self.inner.evaluate(state)


@dataclass(frozen=True)
class Bool:
    op: str  # "and" | "or"
    parts: tuple

    def keys(self) -> set[str]:
        out: set[str] = set()
        for p in self.parts:
            out |= p.keys()
        return out

    def evaluate(self, state: dict) -> bool:
        if self.op == "and":
            return all(p.evaluate(state) for p in self.parts)
        return any(p.evaluate(state) for p in self.parts)


def _as_number(value) -> float | None:
    if isinstance(value, bool):
        return float(value)
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value))
    except (TypeError, ValueError):
        return None


# Parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise PredicateError("unexpected end of predicate")
        self.pos += 1
        return tok

    def parse(self):
        node = self.or_expr()
        if self.peek() is not None:
            raise PredicateError(f"trailing tokens from {self.peek()[1]!r}")
        return node

    def or_expr(self):
        parts = [self.and_expr()]
        while self.peek() == ("word", "or"):
            self.take()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Bool("or", tuple(parts))

    def and_expr(self):
        parts = [self.unary()]
        while self.peek() == ("word", "and"):
            self.take()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else Bool("and", tuple(parts))

    def unary(self):
        tok = self.peek()
        if tok == ("word", "not"):
            self.take()
            return Not(self.unary())
        if tok is not None and tok[0] == "lparen":
            self.take()
            node = self.or_expr()
            closing = self.take()
            if closing[0] != "rparen":
                raise PredicateError("expected ')'")
            return node
        return self.comparison()

    def comparison(self):
        kind, key = self.take()
        if kind != "word" or key in _KEYWORDS:
            raise PredicateError(f"expected state key, got {key!r}")
        op_kind, op = self.take()
        if op_kind == "word" and op == "contains":
            pass
        elif op_kind != "op":
            raise PredicateError(f"expected comparison operator after {key!r}, got {op!r}")
        val_kind, raw = self.take()
        if val_kind == "string":
            value: object = raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
        elif val_kind == "number":
            value = float(raw)
        elif val_kind == "word" and raw in ("true", "false"):
            # Shared state holds strings, so boolean literals compare as
            # their lowercase spellings.
            value = raw
        elif val_kind == "word" and raw not in _KEYWORDS:
            value = raw
        else:
            raise PredicateError(f"expected literal value, got {raw!r}")
        return Comparison(key, op, value)


def parse_predicate(text: str):
    """Parse predicate text to an evaluable AST. Raises PredicateError."""
    if not text or not text.strip():
        raise PredicateError("empty predicate")
    return _Parser(_tokenize(text)).parse()


def referenced_keys(text: str) -> set[str]:
    """State keys a predicate reads, for validation and audit."""
    return parse_predicate(text).keys()


def evaluate_predicate(text: str, state: dict) -> bool:
    """Evaluate against a state mapping. Raises MissingKey for absent keys."""
    return parse_predicate(text).evaluate(state)
