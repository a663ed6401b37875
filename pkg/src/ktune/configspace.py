"""Kernel configuration spaces: parameter domains, constraints, enumeration.

A space is a set of discrete parameter domains plus boolean constraints
over them. Enumeration streams the constraint-satisfying points of the
cartesian product in a deterministic order: declared parameter order,
each domain in ascending (ranges) or declared (lists) value order.

Everything here is an immutable value after construction and safe to
share between threads. Digests are lowercase hex SHA-256 over a canonical
serialization, so they are stable across processes and platforms; the
result cache depends on that.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Iterator

from . import expr
from .errors import (
    ConfigStructureError,
    EnumerationError,
    ExprError,
    ExprEvalError,
    SpaceParseError,
)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

Scalar = int | bool | str

KINDS = ("int-list", "int-range", "pow2-range", "categorical", "boolean")


def canonical_json(obj) -> str:
    """Canonical JSON: sorted keys, no whitespace, ASCII-only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _is_pow2(n: int) -> bool:
    return isinstance(n, int) and not isinstance(n, bool) and n > 0 and n & (n - 1) == 0


def _check_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpaceParseError(f"expected an integer, got {v!r}", where)
    return v


@dataclass(frozen=True)
class ParamDomain:
    """One tunable parameter and its discrete domain."""

    name: str
    kind: str
    values: tuple = ()  # int-list / categorical members, declared order
    lo: int | None = None
    hi: int | None = None
    step: int = 1

    def __post_init__(self):
        where = f"param {self.name!r}"
        if not _NAME_RE.match(self.name or ""):
            raise SpaceParseError(f"invalid parameter name {self.name!r}", "param")
        if self.kind not in KINDS:
            raise SpaceParseError(f"unknown kind {self.kind!r}", where)
        if self.kind == "int-list":
            if not self.values:
                raise SpaceParseError("empty domain", where)
            for v in self.values:
                _check_int(v, where)
            if len(set(self.values)) != len(self.values):
                raise SpaceParseError("duplicate values in domain", where)
        elif self.kind == "categorical":
            if not self.values:
                raise SpaceParseError("empty domain", where)
            for v in self.values:
                if not isinstance(v, str):
                    raise SpaceParseError(f"expected a string, got {v!r}", where)
            if len(set(self.values)) != len(self.values):
                raise SpaceParseError("duplicate values in domain", where)
        elif self.kind == "int-range":
            lo = _check_int(self.lo, where)
            hi = _check_int(self.hi, where)
            if lo > hi:
                raise SpaceParseError(f"lo {lo} > hi {hi}", where)
            if _check_int(self.step, where) < 1:
                raise SpaceParseError(f"step must be >= 1, got {self.step}", where)
        elif self.kind == "pow2-range":
            lo = _check_int(self.lo, where)
            hi = _check_int(self.hi, where)
            if not (_is_pow2(lo) and _is_pow2(hi)):
                raise SpaceParseError(f"lo and hi must be powers of two, got {lo}, {hi}", where)
            if lo > hi:
                raise SpaceParseError(f"lo {lo} > hi {hi}", where)

    # -- factories ---------------------------------------------------------

    @classmethod
    def int_list(cls, name: str, values) -> "ParamDomain":
        return cls(name, "int-list", values=tuple(values))

    @classmethod
    def int_range(cls, name: str, lo: int, hi: int, step: int = 1) -> "ParamDomain":
        return cls(name, "int-range", lo=lo, hi=hi, step=step)

    @classmethod
    def pow2_range(cls, name: str, lo: int, hi: int) -> "ParamDomain":
        return cls(name, "pow2-range", lo=lo, hi=hi)

    @classmethod
    def categorical(cls, name: str, values) -> "ParamDomain":
        return cls(name, "categorical", values=tuple(values))

    @classmethod
    def boolean(cls, name: str) -> "ParamDomain":
        return cls(name, "boolean")

    # -- behavior ----------------------------------------------------------

    def domain_values(self) -> tuple:
        if self.kind == "int-list" or self.kind == "categorical":
            return self.values
        if self.kind == "int-range":
            return tuple(range(self.lo, self.hi + 1, self.step))
        if self.kind == "pow2-range":
            vals = []
            v = self.lo
            while v <= self.hi:
                vals.append(v)
                v *= 2
            return tuple(vals)
        return (False, True)

    def size(self) -> int:
        return len(self.domain_values())

    def value_type(self) -> str:
        if self.kind == "boolean":
            return "bool"
        if self.kind == "categorical":
            return "str"
        return "int"

    def contains(self, v: Scalar) -> bool:
        if self.value_type() == "int" and (isinstance(v, bool) or not isinstance(v, int)):
            return False
        if self.value_type() == "bool" and not isinstance(v, bool):
            return False
        if self.value_type() == "str" and not isinstance(v, str):
            return False
        return v in self.domain_values()

    def describe(self) -> str:
        if self.kind == "int-range":
            return f"int-range({self.lo}, {self.hi}, step {self.step})"
        if self.kind == "pow2-range":
            return f"pow2-range({self.lo}, {self.hi})"
        if self.kind == "boolean":
            return "boolean"
        return f"{self.kind}{list(self.values)}"

    def to_json_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind}
        if self.kind in ("int-list", "categorical"):
            d["values"] = list(self.values)
        elif self.kind in ("int-range", "pow2-range"):
            d["lo"] = self.lo
            d["hi"] = self.hi
            if self.kind == "int-range":
                d["step"] = self.step
        return d

    @classmethod
    def from_json_dict(cls, d: dict, where: str) -> "ParamDomain":
        if not isinstance(d, dict):
            raise SpaceParseError(f"expected an object, got {d!r}", where)
        name = d.get("name")
        kind = d.get("kind")
        if not isinstance(name, str):
            raise SpaceParseError("missing or non-string 'name'", where)
        if kind not in KINDS:
            raise SpaceParseError(f"missing or unknown 'kind' {kind!r}", where)
        known = {"name", "kind", "values", "lo", "hi", "step"}
        extra = set(d) - known
        if extra:
            raise SpaceParseError(f"unknown keys {sorted(extra)}", f"{where} ({name})")
        try:
            if kind in ("int-list", "categorical"):
                if "values" not in d or not isinstance(d["values"], list):
                    raise SpaceParseError("missing 'values' array", f"{where} ({name})")
                return cls(name, kind, values=tuple(d["values"]))
            if kind == "boolean":
                return cls(name, kind)
            return cls(name, kind, lo=d.get("lo"), hi=d.get("hi"), step=d.get("step", 1))
        except SpaceParseError as e:
            raise SpaceParseError(e.message, f"{where} ({name})") from None


@dataclass(frozen=True)
class Constraint:
    """A boolean expression over the owning space's parameters.

    `text` is the author's source string (kept for messages), `canonical_text`
    the normalized form that digests hash.
    """

    text: str
    tree: expr.Node = field(compare=False)
    canonical_text: str = ""

    @classmethod
    def parse(cls, text: str, where: str = "constraint") -> "Constraint":
        try:
            tree = expr.parse_expr(text)
        except ExprError as e:
            raise SpaceParseError(f"malformed expression: {e}", where) from None
        return cls(text=text, tree=tree, canonical_text=expr.canonical(tree))

    def holds(self, env: dict[str, Scalar]) -> bool:
        v = expr.evaluate(self.tree, env)
        if not isinstance(v, bool):  # pragma: no cover - static check prevents this
            raise ExprEvalError(f"constraint {self.text!r} did not evaluate to a boolean")
        return v


@dataclass(frozen=True)
class ConfigSpace:
    """A named, ordered set of parameter domains plus constraints."""

    name: str
    params: tuple[ParamDomain, ...]
    constraints: tuple[Constraint, ...]
    digest: str

    @classmethod
    def build(cls, name: str, params, constraints=()) -> "ConfigSpace":
        params = tuple(params)
        constraints = tuple(constraints)
        if not _NAME_RE.match(name or ""):
            raise SpaceParseError(f"invalid space name {name!r}", "name")
        seen: set[str] = set()
        for i, p in enumerate(params):
            if p.name in seen:
                raise SpaceParseError(f"duplicate parameter name {p.name!r}", f"params[{i}]")
            seen.add(p.name)
        env_types = {p.name: p.value_type() for p in params}
        for i, c in enumerate(constraints):
            where = f"constraints[{i}] ({c.text!r})"
            unknown = expr.referenced_names(c.tree) - seen
            if unknown:
                raise SpaceParseError(
                    f"unknown parameter {sorted(unknown)[0]!r}", where
                )
            try:
                t = expr.check_types(c.tree, env_types)
            except ExprError as e:
                raise SpaceParseError(str(e), where) from None
            if t != "bool":
                raise SpaceParseError(f"expression has type {t}, expected bool", where)
        canon = {
            "name": name,
            "params": [p.to_json_dict() for p in params],
            "constraints": [c.canonical_text for c in constraints],
        }
        return cls(name=name, params=params, constraints=constraints, digest=digest_of(canon))

    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def param(self, name: str) -> ParamDomain:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "params": [p.to_json_dict() for p in self.params],
            "constraints": [c.text for c in self.constraints],
        }


@dataclass(frozen=True)
class KernelConfig:
    """One fully-assigned point of a space. Digest is over the canonical
    (sorted-key) assignment map, so it is stable across processes."""

    assignments: dict[str, Scalar]
    digest: str

    @classmethod
    def from_assignments(cls, assignments: dict[str, Scalar]) -> "KernelConfig":
        assignments = dict(assignments)
        return cls(assignments=assignments, digest=digest_of(assignments))

    def __str__(self) -> str:
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self.assignments.items()))
        return f"({inner})"


@dataclass(frozen=True)
class ShapeKey:
    """The workload point a tuning result applies to: named dimensions such
    as batch_size, seq_len, num_heads, head_dim, dtype."""

    dims: dict[str, Scalar | float]
    digest: str

    @classmethod
    def from_dims(cls, dims: dict) -> "ShapeKey":
        if not dims:
            raise SpaceParseError("shape must have at least one dimension", "shape")
        for k, v in dims.items():
            if not isinstance(k, str) or not k:
                raise SpaceParseError(f"invalid dimension name {k!r}", "shape")
            if not isinstance(v, (int, float, str, bool)):
                raise SpaceParseError(f"invalid dimension value {v!r}", f"shape.{k}")
        return cls(dims=dict(dims), digest=digest_of(dims))

    def __str__(self) -> str:
        return ",".join(f"{k}={v}" for k, v in sorted(self.dims.items()))


# ---------------------------------------------------------------------------
# Parsing the space file format


def parse_space(text: str) -> ConfigSpace:
    """Parse a space-definition document (JSON, see README for the schema)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpaceParseError(f"invalid JSON: {e}", "document") from None
    if not isinstance(doc, dict):
        raise SpaceParseError("top level must be an object", "document")
    name = doc.get("name")
    if not isinstance(name, str):
        raise SpaceParseError("missing or non-string 'name'", "document")
    raw_params = doc.get("params")
    if not isinstance(raw_params, list) or not raw_params:
        raise SpaceParseError("'params' must be a nonempty array", "document")
    params = [
        ParamDomain.from_json_dict(p, f"params[{i}]") for i, p in enumerate(raw_params)
    ]
    raw_constraints = doc.get("constraints", [])
    if not isinstance(raw_constraints, list):
        raise SpaceParseError("'constraints' must be an array", "document")
    constraints = []
    for i, c in enumerate(raw_constraints):
        if not isinstance(c, str):
            raise SpaceParseError(f"expected an expression string, got {c!r}", f"constraints[{i}]")
        constraints.append(Constraint.parse(c, f"constraints[{i}]"))
    return ConfigSpace.build(name, params, constraints)


def parse_space_file(path) -> ConfigSpace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_space(fh.read())


# ---------------------------------------------------------------------------
# Enumeration / cardinality / validation


def enumerate_configs(space: ConfigSpace) -> Iterator[KernelConfig]:
    """Stream the constraint-satisfying grid points in deterministic order.

    Lazy by design: a huge raw grid with tight constraints never
    materializes. Constraint evaluation errors abort with the offending
    config and constraint named.
    """
    names = space.param_names()
    for combo in itertools.product(*(p.domain_values() for p in space.params)):
        env = dict(zip(names, combo))
        ok = True
        for c in space.constraints:
            try:
                if not c.holds(env):
                    ok = False
                    break
            except ExprEvalError as e:
                raise EnumerationError(
                    f"constraint {c.text!r} failed on config {env!r}: {e}"
                ) from None
        if ok:
            yield KernelConfig.from_assignments(env)


def cardinality(space: ConfigSpace) -> tuple[int, int]:
    """(raw grid size, constraint-satisfying count)."""
    raw = 1
    for p in space.params:
        raw *= p.size()
    valid = sum(1 for _ in enumerate_configs(space))
    return raw, valid


def validate_config(space: ConfigSpace, config: KernelConfig) -> tuple[bool, list[str]]:
    """Check one config against its space.

    Returns (ok, violations); domain misses and failed constraints are
    listed by name. A config that does not assign exactly the space's
    parameters is a structural error, not a violation.
    """
    expected = set(space.param_names())
    got = set(config.assignments)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        parts = []
        if missing:
            parts.append(f"missing parameters {missing}")
        if extra:
            parts.append(f"unknown parameters {extra}")
        raise ConfigStructureError("; ".join(parts))
    violations: list[str] = []
    for p in space.params:
        v = config.assignments[p.name]
        if not p.contains(v):
            violations.append(f"{p.name}: value {v!r} not in {p.describe()}")
    env = dict(config.assignments)
    for c in space.constraints:
        try:
            if not c.holds(env):
                violations.append(c.text)
        except ExprEvalError as e:
            raise EnumerationError(
                f"constraint {c.text!r} failed on config {env!r}: {e}"
            ) from None
    return (not violations), violations
