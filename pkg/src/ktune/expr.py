"""Boolean/integer expression language for inter-parameter constraints.

The grammar is deliberately tiny: parameter references, integer literals,
arithmetic (`+ - * / %`), comparisons (`== != < <= > >=`), and boolean
connectives (`&& || !`). There are no floats, no string literals, and no
user functions, which keeps the evaluator total and the canonical form
trivially stable.

Semantics that constraint authors rely on:

- `/` is integer division truncating toward zero, `%` takes the sign of
  the dividend (C semantics), so `BLOCK_M % 32 == 0` means what a kernel
  author expects.
- `&&` and `||` short-circuit, so `N != 0 && M % N == 0` is safe.
- Booleans never coerce to integers; mixing them is a type error when the
  constraint is bound to a space.
- Division or modulo by zero raises :class:`ExprEvalError`, never an
  undefined result.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ExprEvalError, ExprSyntaxError, ExprTypeError

Value = int | bool | str

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[-+*/%<>!()])
    """,
    re.VERBOSE,
)

_CMP_OPS = ("<", "<=", ">", ">=")
_EQ_OPS = ("==", "!=")
_ARITH_OPS = ("+", "-", "*", "/", "%")
_LOGIC_OPS = ("&&", "||")


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "name" | "op" | "end"
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", i)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup or "", m.group(), i))
        i = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Lit:
    value: int
    pos: int = 0


@dataclass(frozen=True)
class Ref:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Unary:
    op: str  # "!" | "-"
    operand: "Node"
    pos: int = 0


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Node"
    rhs: "Node"
    pos: int = 0


Node = Lit | Ref | Unary | Binary


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ExprSyntaxError(f"expected {op!r}, found {tok.text or 'end of input'!r}", tok.pos)
        return self.next()

    def accept_op(self, *ops: str) -> Token | None:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ops:
            return self.next()
        return None

    def parse(self) -> Node:
        node = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return node

    def or_expr(self) -> Node:
        node = self.and_expr()
        while (tok := self.accept_op("||")) is not None:
            node = Binary("||", node, self.and_expr(), tok.pos)
        return node

    def and_expr(self) -> Node:
        node = self.cmp_expr()
        while (tok := self.accept_op("&&")) is not None:
            node = Binary("&&", node, self.cmp_expr(), tok.pos)
        return node

    def cmp_expr(self) -> Node:
        node = self.add_expr()
        while (tok := self.accept_op(*_CMP_OPS, *_EQ_OPS)) is not None:
            node = Binary(tok.text, node, self.add_expr(), tok.pos)
        return node

    def add_expr(self) -> Node:
        node = self.mul_expr()
        while (tok := self.accept_op("+", "-")) is not None:
            node = Binary(tok.text, node, self.mul_expr(), tok.pos)
        return node

    def mul_expr(self) -> Node:
        node = self.unary()
        while (tok := self.accept_op("*", "/", "%")) is not None:
            node = Binary(tok.text, node, self.unary(), tok.pos)
        return node

    def unary(self) -> Node:
        if (tok := self.accept_op("!")) is not None:
            return Unary("!", self.unary(), tok.pos)
        if (tok := self.accept_op("-")) is not None:
            return Unary("-", self.unary(), tok.pos)
        return self.atom()

    def atom(self) -> Node:
        tok = self.next()
        if tok.kind == "int":
            return Lit(int(tok.text), tok.pos)
        if tok.kind == "name":
            return Ref(tok.text, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            node = self.or_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(
            f"expected a value, found {tok.text or 'end of input'!r}", tok.pos
        )


def parse_expr(text: str) -> Node:
    """Parse `text` into an expression tree. Raises ExprSyntaxError."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Canonical printing: fully parenthesized, single-space separated. Two
# expressions that differ only in whitespace or redundant parentheses print
# identically, which is what space digests hash.


def canonical(node: Node) -> str:
    if isinstance(node, Lit):
        return str(node.value)
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{canonical(node.operand)})"
    return f"({canonical(node.lhs)} {node.op} {canonical(node.rhs)})"


# ---------------------------------------------------------------------------
# Static typing against a parameter-type environment


def check_types(node: Node, env_types: dict[str, str]) -> str:
    """Return the node's type ("int" | "bool" | "str") or raise ExprTypeError.

    `env_types` maps parameter names to their scalar type. Unknown names
    raise ExprTypeError as well; callers that want a friendlier message
    should pre-check references via :func:`referenced_names`.
    """
    if isinstance(node, Lit):
        return "int"
    if isinstance(node, Ref):
        t = env_types.get(node.name)
        if t is None:
            raise ExprTypeError(f"unknown parameter {node.name!r}", node.pos)
        return t
    if isinstance(node, Unary):
        t = check_types(node.operand, env_types)
        if node.op == "!":
            if t != "bool":
                raise ExprTypeError(f"'!' needs a boolean operand, got {t}", node.pos)
            return "bool"
        if t != "int":
            raise ExprTypeError(f"unary '-' needs an integer operand, got {t}", node.pos)
        return "int"
    lt = check_types(node.lhs, env_types)
    rt = check_types(node.rhs, env_types)
    if node.op in _ARITH_OPS:
        if lt != "int" or rt != "int":
            raise ExprTypeError(
                f"{node.op!r} needs integer operands, got {lt} and {rt}", node.pos
            )
        return "int"
    if node.op in _CMP_OPS:
        if lt != "int" or rt != "int":
            raise ExprTypeError(
                f"{node.op!r} compares integers, got {lt} and {rt}", node.pos
            )
        return "bool"
    if node.op in _EQ_OPS:
        if lt != rt:
            raise ExprTypeError(
                f"{node.op!r} needs operands of one type, got {lt} and {rt}", node.pos
            )
        return "bool"
    # logic ops
    if lt != "bool" or rt != "bool":
        raise ExprTypeError(
            f"{node.op!r} needs boolean operands, got {lt} and {rt}", node.pos
        )
    return "bool"


def referenced_names(node: Node) -> set[str]:
    if isinstance(node, Lit):
        return set()
    if isinstance(node, Ref):
        return {node.name}
    if isinstance(node, Unary):
        return referenced_names(node.operand)
    return referenced_names(node.lhs) | referenced_names(node.rhs)


# ---------------------------------------------------------------------------
# Evaluation


def c_div(a: int, b: int) -> int:
    if b == 0:
        raise ExprEvalError(f"division by zero: {a} / 0")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def c_mod(a: int, b: int) -> int:
    if b == 0:
        raise ExprEvalError(f"modulo by zero: {a} % 0")
    return a - b * c_div(a, b)


def _as_int(v: Value, context: str) -> int:
    # bool is a subclass of int in Python; keep the types apart here.
    if isinstance(v, bool) or not isinstance(v, int):
        raise ExprEvalError(f"{context} needs an integer, got {v!r}")
    return v


def _as_bool(v: Value, context: str) -> bool:
    if not isinstance(v, bool):
        raise ExprEvalError(f"{context} needs a boolean, got {v!r}")
    return v


def evaluate(node: Node, env: dict[str, Value]) -> Value:
    """Evaluate the tree against `env` (name -> scalar).

    Performs dynamic type validation so that expressions evaluated without
    a prior static check (e.g. cost-profile rules) still fail loudly
    instead of silently coercing.
    """
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Ref):
        if node.name not in env:
            raise ExprEvalError(f"unknown name {node.name!r} in expression")
        return env[node.name]
    if isinstance(node, Unary):
        v = evaluate(node.operand, env)
        if node.op == "!":
            return not _as_bool(v, "'!'")
        return -_as_int(v, "unary '-'")
    # short-circuit before evaluating the right-hand side
    if node.op == "&&":
        if not _as_bool(evaluate(node.lhs, env), "'&&'"):
            return False
        return _as_bool(evaluate(node.rhs, env), "'&&'")
    if node.op == "||":
        if _as_bool(evaluate(node.lhs, env), "'||'"):
            return True
        return _as_bool(evaluate(node.rhs, env), "'||'")
    lhs = evaluate(node.lhs, env)
    rhs = evaluate(node.rhs, env)
    op = node.op
    if op in _ARITH_OPS:
        a = _as_int(lhs, f"{op!r}")
        b = _as_int(rhs, f"{op!r}")
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return c_div(a, b)
        return c_mod(a, b)
    if op in _CMP_OPS:
        a = _as_int(lhs, f"{op!r}")
        b = _as_int(rhs, f"{op!r}")
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
    if op in _EQ_OPS:
        if isinstance(lhs, bool) != isinstance(rhs, bool) or (
            not isinstance(lhs, bool) and type(lhs) is not type(rhs)
        ):
            raise ExprEvalError(
                f"{op!r} needs operands of one type, got {lhs!r} and {rhs!r}"
            )
        return (lhs == rhs) if op == "==" else (lhs != rhs)
    raise ExprEvalError(f"unknown operator {op!r}")  # pragma: no cover
