"""Comparison atoms, boolean formulas and their evaluation."""

import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, Tuple, Union

from core.errors import SpecMineError


Value = Union[int, str]
Valuation = Mapping[str, Value]

ADDR_ZERO = "0x0"

# Words the formula syntax reads as constants
RESERVED_NAMES = frozenset(("true", "false"))

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


class Domain(str, Enum):
    """Value domain of a parameter."""

    INT = "int"
    ADDR = "addr"
    BOOL = "bool"


class Op(str, Enum):
    """Comparison operators of the atom template."""

    EQ = "=="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="


NEGATED_OP = {
    Op.EQ: Op.NE, Op.NE: Op.EQ,
    Op.LT: Op.GE, Op.GE: Op.LT,
    Op.LE: Op.GT, Op.GT: Op.LE,
}

# Operator seen from the other side: a < b  <=>  b > a
MIRRORED_OP = {
    Op.EQ: Op.EQ, Op.NE: Op.NE,
    Op.LT: Op.GT, Op.GT: Op.LT,
    Op.LE: Op.GE, Op.GE: Op.LE,
}

ADDR_OPS = (Op.EQ, Op.NE)


class UnboundParam(SpecMineError):
    """A formula mentions a parameter the valuation does not bind."""

    def __init__(self, param: str):
        super().__init__(f"Unbound parameter: {param}", stage="logic")
        self.param = param


def is_addr_literal(value: object) -> bool:
    """Addresses are strings prefixed with 0x."""
    return isinstance(value, str) and value.lower().startswith("0x")


def is_param_ref(value: object) -> bool:
    """A right-hand side naming a parameter rather than a constant."""
    return isinstance(value, str) and not is_addr_literal(value)


def is_identifier(name: str) -> bool:
    """A name the formula syntax reads back as a parameter."""
    return bool(_NAME_RE.fullmatch(name)) and name not in RESERVED_NAMES


def normalize_addr(value: str) -> str:
    """Canonical lowercase form with leading zeros stripped (0x000 -> 0x0)."""
    digits = value[2:].lower().lstrip("0")
    return "0x" + (digits or "0")


@dataclass(frozen=True)
class Top:
    """The constant true formula."""

    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class Bottom:
    """The constant false formula."""

    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Atom:
    """A comparison `lhs op rhs`; rhs is a parameter name or a constant."""

    lhs: str
    op: Op
    rhs: Value

    def params(self) -> FrozenSet[str]:
        if is_param_ref(self.rhs):
            return frozenset((self.lhs, self.rhs))
        return frozenset((self.lhs,))

    def negated(self) -> "Atom":
        return Atom(self.lhs, NEGATED_OP[self.op], self.rhs)

    def __str__(self) -> str:
        return f"{self.lhs} {self.op.value} {self.rhs}"


@dataclass(frozen=True)
class And:
    children: Tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["Formula", ...]


@dataclass(frozen=True)
class Not:
    child: "Formula"


Formula = Union[Top, Bottom, Atom, And, Or, Not]

TRUE = Top()
FALSE = Bottom()


def atom(lhs: str, op: Union[str, Op], rhs: Value) -> Atom:
    """Build an atom from text operators ("=" is accepted for "==")."""
    if isinstance(op, str) and op == "=":
        op = Op.EQ
    op = Op(op)
    if is_addr_literal(rhs):
        rhs = normalize_addr(rhs)
    elif isinstance(rhs, bool):
        rhs = int(rhs)
    return Atom(lhs, op, rhs)


def conj(parts: Iterable[Formula]) -> Formula:
    """Conjunction with the empty case collapsed to true."""
    items = tuple(parts)
    if not items:
        return TRUE
    if len(items) == 1:
        return items[0]
    return And(items)


def disj(parts: Iterable[Formula]) -> Formula:
    """Disjunction with the empty case collapsed to false."""
    items = tuple(parts)
    if not items:
        return FALSE
    if len(items) == 1:
        return items[0]
    return Or(items)


def _compare(left: Value, op: Op, right: Value) -> bool:
    if op is Op.EQ:
        return left == right
    if op is Op.NE:
        return left != right
    if isinstance(left, str) or isinstance(right, str):
        # Addresses admit equality only
        raise TypeError(f"Ordering comparison on address values: {left!r} {op.value} {right!r}")
    if op is Op.LT:
        return left < right
    if op is Op.LE:
        return left <= right
    if op is Op.GT:
        return left > right
    return left >= right


def _lookup(valuation: Valuation, name: str) -> Value:
    try:
        return valuation[name]
    except KeyError:
        raise UnboundParam(name) from None


def evaluate(formula: Formula, valuation: Valuation) -> bool:
    """Evaluate a formula against a valuation binding all its free parameters."""
    if isinstance(formula, Top):
        return True
    if isinstance(formula, Bottom):
        return False
    if isinstance(formula, Atom):
        left = _lookup(valuation, formula.lhs)
        right = _lookup(valuation, formula.rhs) if is_param_ref(formula.rhs) else formula.rhs
        return _compare(left, formula.op, right)
    if isinstance(formula, And):
        return all(evaluate(child, valuation) for child in formula.children)
    if isinstance(formula, Or):
        return any(evaluate(child, valuation) for child in formula.children)
    if isinstance(formula, Not):
        return not evaluate(formula.child, valuation)
    raise TypeError(f"Not a formula: {formula!r}")


def iter_atoms(formula: Formula) -> Iterator[Atom]:
    """Yield atoms in left-to-right order (duplicates included)."""
    if isinstance(formula, Atom):
        yield formula
    elif isinstance(formula, (And, Or)):
        for child in formula.children:
            yield from iter_atoms(child)
    elif isinstance(formula, Not):
        yield from iter_atoms(formula.child)


def free_params(formula: Formula) -> FrozenSet[str]:
    """Names of all parameters the formula mentions."""
    names = set()
    for item in iter_atoms(formula):
        names.update(item.params())
    return frozenset(names)


def to_nnf(formula: Formula, negate: bool = False) -> Formula:
    """Negation normal form: negations pushed into atoms, constants folded."""
    if isinstance(formula, Top):
        return FALSE if negate else TRUE
    if isinstance(formula, Bottom):
        return TRUE if negate else FALSE
    if isinstance(formula, Atom):
        return formula.negated() if negate else formula
    if isinstance(formula, Not):
        return to_nnf(formula.child, not negate)
    children = [to_nnf(child, negate) for child in formula.children]
    as_and = isinstance(formula, And) != negate
    return simplify(And(tuple(children)) if as_and else Or(tuple(children)))


def simplify(formula: Formula) -> Formula:
    """Structural clean-up: flatten, fold constants, drop duplicate children."""
    if isinstance(formula, Not):
        child = simplify(formula.child)
        if isinstance(child, Top):
            return FALSE
        if isinstance(child, Bottom):
            return TRUE
        if isinstance(child, Not):
            return child.child
        return Not(child)
    if not isinstance(formula, (And, Or)):
        return formula

    is_and = isinstance(formula, And)
    unit, zero = (Top, Bottom) if is_and else (Bottom, Top)
    kind = And if is_and else Or

    flat = []
    seen = set()
    for child in formula.children:
        child = simplify(child)
        if isinstance(child, zero):
            return child
        if isinstance(child, unit):
            continue
        nested = child.children if isinstance(child, kind) else (child,)
        for item in nested:
            if item not in seen:
                seen.add(item)
                flat.append(item)
    return conj(flat) if is_and else disj(flat)


def project(formula: Formula, keep: Iterable[str]) -> Formula:
    """
    Keep only the constraints over the given parameters.

    Atoms mentioning other parameters are replaced by true after conversion
    to negation normal form, which over-approximates existential
    quantification of the dropped parameters.
    """
    allowed = frozenset(keep)

    def walk(node: Formula) -> Formula:
        if isinstance(node, Atom):
            return node if node.params() <= allowed else TRUE
        if isinstance(node, And):
            return simplify(And(tuple(walk(child) for child in node.children)))
        if isinstance(node, Or):
            return simplify(Or(tuple(walk(child) for child in node.children)))
        return node

    return walk(to_nnf(formula))


def conjuncts(formula: Formula) -> Tuple[Formula, ...]:
    """Top-level conjuncts of a formula (the formula itself if not an And)."""
    if isinstance(formula, And):
        return formula.children
    if isinstance(formula, Top):
        return ()
    return (formula,)


def formula_size(formula: Formula) -> int:
    """Node count, used to prefer smaller representatives."""
    if isinstance(formula, (And, Or)):
        return 1 + sum(formula_size(child) for child in formula.children)
    if isinstance(formula, Not):
        return 1 + formula_size(formula.child)
    return 1


def zero_value(domain: Domain) -> Value:
    """The value an uninitialised variable of this domain holds."""
    return ADDR_ZERO if domain is Domain.ADDR else 0


def restrict(valuation: Valuation, names: Iterable[str]) -> Dict[str, Value]:
    """Sub-valuation over the given names (missing names are skipped)."""
    return {name: valuation[name] for name in names if name in valuation}
