"""Constraint expression language over configuration options.

A constraint is a single comparison between two integer arithmetic
expressions::

    constraint := expr cmp expr
    expr       := term (('+' | '-') term)*
    term       := factor (('*' | '/') factor)*
    factor     := INTEGER | IDENTIFIER | '(' expr ')'
    cmp        := '<' | '<=' | '>' | '>=' | '==' | '!='

Arithmetic is exact integer arithmetic; '/' is floor division. Binary
option values participate as OFF = 0 and ON = 1. Exactly one comparison
is allowed per constraint; chained comparisons are rejected.
"""

from __future__ import annotations

import math
import operator
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConstraintError, EvaluationError, RepairInfeasibleError

OFF = "OFF"
ON = "ON"

Value = int | str

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}

_TOKEN_RE = re.compile(
    r"(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|!=|[<>+\-*/()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "int" | "ident" | "op" | "end"
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ConstraintError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Lit | Var | BinOp


def _numeric(value: Value) -> int:
    if value == OFF:
        return 0
    if value == ON:
        return 1
    if isinstance(value, bool) or not isinstance(value, int):
        raise EvaluationError(f"non-integer value {value!r} in constraint arithmetic")
    return value


def _eval_expr(node: Expr, env: Mapping[str, Value]) -> int:
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        try:
            return _numeric(env[node.name])
        except KeyError:
            raise EvaluationError(f"unknown option {node.name!r} in constraint") from None
    left = _eval_expr(node.left, env)
    right = _eval_expr(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0:
        raise EvaluationError("division by zero in constraint")
    return left // right


def _render(node: Expr) -> tuple[str, int]:
    """Render a node; returns (text, precedence of outermost operator)."""
    if isinstance(node, Lit):
        return str(node.value), 3
    if isinstance(node, Var):
        return node.name, 3
    prec = _PRECEDENCE[node.op]
    left_text, left_prec = _render(node.left)
    right_text, right_prec = _render(node.right)
    if left_prec < prec:
        left_text = f"({left_text})"
    # Right operands of equal precedence keep explicit parens so that the
    # rendered text reparses to the identical tree.
    if right_prec <= prec:
        right_text = f"({right_text})"
    return f"{left_text} {node.op} {right_text}", prec


def _collect_identifiers(node: Expr, out: set[str]) -> None:
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, BinOp):
        _collect_identifiers(node.left, out)
        _collect_identifiers(node.right, out)


@dataclass(frozen=True)
class ConstraintExpr:
    """A parsed constraint: one comparison between two integer expressions."""

    left: Expr
    op: str
    right: Expr

    @property
    def text(self) -> str:
        return f"{_render(self.left)[0]} {self.op} {_render(self.right)[0]}"

    def identifiers(self) -> frozenset[str]:
        names: set[str] = set()
        _collect_identifiers(self.left, names)
        _collect_identifiers(self.right, names)
        return frozenset(names)

    def evaluate(self, env: Mapping[str, Value]) -> bool:
        return _COMPARATORS[self.op](_eval_expr(self.left, env), _eval_expr(self.right, env))

    def __str__(self) -> str:
        return self.text


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def parse_constraint(self) -> ConstraintExpr:
        left = self.parse_expr()
        cmp_token = self.peek()
        if cmp_token.kind != "op" or cmp_token.text not in _COMPARATORS:
            raise ConstraintError("expected a comparison operator", cmp_token.position)
        self.advance()
        right = self.parse_expr()
        tail = self.peek()
        if tail.kind != "end":
            if tail.kind == "op" and tail.text in _COMPARATORS:
                raise ConstraintError(
                    "chained comparisons are not allowed", tail.position
                )
            raise ConstraintError(f"unexpected trailing {tail.text!r}", tail.position)
        return ConstraintExpr(left, cmp_token.text, right)

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        token = self.advance()
        if token.kind == "int":
            return Lit(int(token.text))
        if token.kind == "ident":
            return Var(token.text)
        if token.kind == "op" and token.text == "(":
            node = self.parse_expr()
            closing = self.advance()
            if closing.kind != "op" or closing.text != ")":
                raise ConstraintError("expected ')'", closing.position)
            return node
        if token.kind == "end":
            raise ConstraintError("unexpected end of constraint", token.position)
        raise ConstraintError(f"unexpected {token.text!r}", token.position)


def parse_constraint(text: str) -> ConstraintExpr:
    """Parse a constraint string into its expression tree."""
    return _Parser(_tokenize(text)).parse_constraint()


def check(config, constraints: Iterable[ConstraintExpr] | None = None) -> tuple[ConstraintExpr, ...]:
    """Return the constraints the configuration violates (empty if feasible)."""
    if constraints is None:
        constraints = config.schema.constraints
    values = config.values
    return tuple(c for c in constraints if not c.evaluate(values))


def find_assignment(
    order: Sequence[str],
    domains: Mapping[str, Sequence[Value]],
    constraints: Iterable[ConstraintExpr],
    fixed: Mapping[str, Value] | None = None,
) -> dict[str, Value] | None:
    """Backtracking search for one feasible assignment.

    Options in ``order`` take values from ``domains``; ``fixed`` supplies
    values for every other option a constraint may mention. Constraints are
    checked as soon as all their identifiers are decided. Returns the first
    assignment found (values for ``order`` only) or None.
    """
    env: dict[str, Value] = dict(fixed or {})
    position = {name: i for i, name in enumerate(order)}
    upfront: list[ConstraintExpr] = []
    by_depth: list[list[ConstraintExpr]] = [[] for _ in order]
    for constraint in constraints:
        depths = []
        for name in constraint.identifiers():
            if name in position:
                depths.append(position[name])
            elif name not in env:
                raise EvaluationError(
                    f"constraint references option {name!r} with no value or domain"
                )
        if depths:
            by_depth[max(depths)].append(constraint)
        else:
            upfront.append(constraint)
    if not all(c.evaluate(env) for c in upfront):
        return None

    def descend(depth: int) -> bool:
        if depth == len(order):
            return True
        name = order[depth]
        for value in domains[name]:
            env[name] = value
            if all(c.evaluate(env) for c in by_depth[depth]):
                if descend(depth + 1):
                    return True
        env.pop(name, None)
        return False

    if descend(0):
        return {name: env[name] for name in order}
    return None


def _numeric_order(value: Value) -> int:
    # Binary values sort OFF < ON; integers sort naturally.
    if value == OFF:
        return 0
    if value == ON:
        return 1
    return value  # type: ignore[return-value]


def _change_magnitude(old: Value, new: Value) -> float:
    # A binary flip counts as one lattice step.
    if isinstance(old, str) or isinstance(new, str):
        return 1.0
    return abs(math.log2(new) - math.log2(old))


def repair(
    config,
    pinned: str | None,
    constraints: Iterable[ConstraintExpr] | None = None,
    lattices: Mapping[str, Sequence[Value]] | None = None,
):
    """Move a minimal set of non-pinned options onto lattice values so that
    every constraint holds.

    Candidate repairs are ordered by (1) fewest changed options, (2) no
    decreased value over any decreased value, (3) smallest total absolute
    log2 change, (4) ascending value vector in schema option order. Raises
    RepairInfeasibleError when no assignment over the lattices (keeping any
    subset of current values) satisfies the constraints with ``pinned``
    fixed.
    """
    schema = config.schema
    if constraints is None:
        constraints = schema.constraints
    constraints = tuple(constraints)
    names = [option.name for option in schema.options]
    if pinned is not None and pinned not in names:
        raise ValueError(f"pinned option {pinned!r} is not in the schema")
    if not check(config, constraints):
        return config

    current = dict(config.values)
    involved: set[str] = set()
    for constraint in constraints:
        involved.update(constraint.identifiers())
    movable = [n for n in names if n in involved and n != pinned]
    lattice_values: dict[str, tuple[Value, ...]] = {}
    for name in movable:
        if lattices is None or name not in lattices:
            raise ValueError(f"repair needs a value lattice for option {name!r}")
        entry = lattices[name]
        lattice_values[name] = tuple(getattr(entry, "values", entry))

    fixed = {n: current[n] for n in names if n not in movable}
    sat_domains = {
        name: _with_current_first(current[name], lattice_values[name])
        for name in movable
    }
    if find_assignment(movable, sat_domains, constraints, fixed) is None:
        raise RepairInfeasibleError(
            "no lattice assignment satisfies the constraints"
            + (f" with {pinned!r} pinned" if pinned is not None else "")
        )

    position = {name: i for i, name in enumerate(movable)}
    by_depth: list[list[ConstraintExpr]] = [[] for _ in movable]
    upfront: list[ConstraintExpr] = []
    for constraint in constraints:
        depths = [position[n] for n in constraint.identifiers() if n in position]
        if depths:
            by_depth[max(depths)].append(constraint)
        else:
            upfront.append(constraint)
    # Constraints over only fixed options were already honoured by the
    # satisfiability probe above; evaluate them once for safety.
    if not all(c.evaluate(fixed) for c in upfront):
        raise RepairInfeasibleError("constraints over pinned options cannot hold")

    env: dict[str, Value] = dict(fixed)
    best_key: tuple | None = None
    best_values: dict[str, Value] | None = None

    def candidate_key() -> tuple:
        decreased = False
        magnitude = 0.0
        for name in movable:
            old, new = current[name], env[name]
            if new != old:
                if _numeric_order(new) < _numeric_order(old):
                    decreased = True
                magnitude += _change_magnitude(old, new)
        vector = tuple(_numeric_order(env.get(n, current[n])) for n in names)
        return (decreased, magnitude, vector)

    def descend(depth: int, remaining_changes: int) -> None:
        nonlocal best_key, best_values
        if depth == len(movable):
            if remaining_changes == 0:
                key = candidate_key()
                if best_key is None or key < best_key:
                    best_key = key
                    best_values = {n: env[n] for n in movable}
            return
        if len(movable) - depth < remaining_changes:
            return
        name = movable[depth]
        env[name] = current[name]
        if all(c.evaluate(env) for c in by_depth[depth]):
            descend(depth + 1, remaining_changes)
        if remaining_changes > 0:
            for value in lattice_values[name]:
                if value == current[name]:
                    continue
                env[name] = value
                if all(c.evaluate(env) for c in by_depth[depth]):
                    descend(depth + 1, remaining_changes - 1)
        env.pop(name, None)

    for budget in range(1, len(movable) + 1):
        descend(0, budget)
        if best_values is not None:
            return config.replace(**best_values)
    raise RepairInfeasibleError("no lattice assignment satisfies the constraints")


def _with_current_first(current: Value, lattice: tuple[Value, ...]) -> tuple[Value, ...]:
    rest = tuple(v for v in lattice if v != current)
    return (current,) + rest
