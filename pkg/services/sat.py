"""
Decision procedure for the comparison fragment.

Formulas are put in negation normal form and expanded lazily into DNF
conjuncts. While expanding, single-variable bounds of the atoms collected so
far drop disjuncts they contradict, discharge disjunctions they entail and
commit disjunctions left with one option. Each complete conjunct is decided by:

* union-find over address equalities with constant distinctness,
* union-find over integer equalities, then a difference-constraint graph
  (x - y <= c, constants through a distinguished zero node) checked for
  negative cycles with Bellman-Ford,
* disequalities checked against the resulting solution, branching into
  x < y or x > y when the solution happens to violate one.

Strict inequalities use integer semantics (x < y becomes x - y <= -1).
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from core.config import settings
from core.errors import SpecMineError
from services.formula import (
    ADDR_OPS,
    ADDR_ZERO,
    And,
    Atom,
    Bottom,
    Domain,
    Formula,
    Not,
    Op,
    Or,
    Top,
    Value,
    evaluate,
    free_params,
    is_addr_literal,
    is_param_ref,
    to_nnf,
    zero_value,
)


class ComplexityBudgetExceeded(SpecMineError):
    """DNF expansion went past the configured conjunct or atom limits."""

    def __init__(self, message: str):
        super().__init__(message, stage="logic")


@dataclass(frozen=True)
class SatResult:
    """Outcome of a satisfiability query; witness is set when satisfiable."""

    satisfiable: bool
    witness: Optional[Dict[str, Value]] = None


UNSAT = SatResult(False)

_ZERO = "\0zero"


class _UnionFind:
    def __init__(self):
        self.parent: Dict[object, object] = {}

    def find(self, item):
        self.parent.setdefault(item, item)
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, left, right) -> None:
        a, b = self.find(left), self.find(right)
        if a != b:
            # Deterministic representative: smaller repr wins
            if repr(b) < repr(a):
                a, b = b, a
            self.parent[b] = a


class _Bounds:
    """Per-variable summary of variable-versus-constant atoms."""

    def __init__(self, atoms: Iterable[Atom], solver: "Solver"):
        self.lows: Dict[str, int] = {}
        self.highs: Dict[str, int] = {}
        self.excluded: Dict[str, Set[Value]] = {}
        self.pinned: Dict[str, Value] = {}
        self.conflict = False

        for item in atoms:
            if is_param_ref(item.rhs):
                continue
            name, value = item.lhs, item.rhs
            if solver.atom_domain(item) is Domain.ADDR:
                if item.op is Op.EQ:
                    if self.pinned.setdefault(name, value) != value:
                        self.conflict = True
                elif item.op is Op.NE:
                    self.excluded.setdefault(name, set()).add(value)
                continue
            if item.op is Op.NE:
                self.excluded.setdefault(name, set()).add(value)
                continue
            if item.op in (Op.EQ, Op.GT, Op.GE):
                floor = value + 1 if item.op is Op.GT else value
                self.lows[name] = max(self.lows.get(name, floor), floor)
            if item.op in (Op.EQ, Op.LT, Op.LE):
                ceiling = value - 1 if item.op is Op.LT else value
                self.highs[name] = min(self.highs.get(name, ceiling), ceiling)

        for name in set(self.lows) | set(self.highs) | set(self.excluded):
            if solver.domain_of(name) is Domain.BOOL:
                self.lows[name] = max(self.lows.get(name, 0), 0)
                self.highs[name] = min(self.highs.get(name, 1), 1)

        for name, value in self.pinned.items():
            if value in self.excluded.get(name, ()):
                self.conflict = True
        for name in set(self.lows) | set(self.highs):
            if name in self.pinned:
                continue
            low, high = self.lows.get(name), self.highs.get(name)
            if low is None or high is None:
                continue
            if low > high:
                self.conflict = True
                continue
            holes = self.excluded.get(name, set())
            if high - low + 1 <= len(holes) and all(v in holes for v in range(low, high + 1)):
                self.conflict = True

    def status(self, item: Atom) -> int:
        """+1 if the bounds entail the atom, -1 if they refute it, 0 if unknown."""
        if is_param_ref(item.rhs):
            return 0
        name, value, op = item.lhs, item.rhs, item.op
        excluded = self.excluded.get(name, ())

        if name in self.pinned:
            return 1 if (self.pinned[name] == value) == (op is Op.EQ) else -1
        if isinstance(value, str):
            if value in excluded:
                return -1 if op is Op.EQ else 1
            return 0

        low, high = self.lows.get(name), self.highs.get(name)
        if op is Op.EQ:
            if value in excluded or (low is not None and value < low) or (high is not None and value > high):
                return -1
            return 1 if low == high == value else 0
        if op is Op.NE:
            if value in excluded or (low is not None and value < low) or (high is not None and value > high):
                return 1
            return -1 if low == high == value else 0
        if op is Op.LT:
            return 1 if high is not None and high < value else -1 if low is not None and low >= value else 0
        if op is Op.LE:
            return 1 if high is not None and high <= value else -1 if low is not None and low > value else 0
        if op is Op.GT:
            return 1 if low is not None and low > value else -1 if high is not None and high <= value else 0
        return 1 if low is not None and low >= value else -1 if high is not None and high < value else 0


class Solver:
    """Satisfiability and implication checks over a fixed parameter typing."""

    def __init__(
        self,
        domains: Optional[Mapping[str, Domain]] = None,
        max_conjuncts: Optional[int] = None,
        max_atoms: Optional[int] = None
    ):
        self.domains: Dict[str, Domain] = dict(domains or {})
        self.max_conjuncts = max_conjuncts or settings.SPECMINE_MAX_CONJUNCTS
        self.max_atoms = max_atoms or settings.SPECMINE_MAX_CONJUNCT_ATOMS
        self._cache: Dict[Formula, SatResult] = {}
        self._leaves = 0

    # Typing

    def domain_of(self, name: str) -> Domain:
        return self.domains.get(name, Domain.INT)

    def atom_domain(self, item: Atom) -> Domain:
        """Declared domain of the atom's parameters; undeclared ones compared with an address are addresses."""
        if item.lhs in self.domains:
            return self.domains[item.lhs]
        if is_param_ref(item.rhs) and item.rhs in self.domains:
            return self.domains[item.rhs]
        if is_addr_literal(item.rhs):
            return Domain.ADDR
        return Domain.INT

    # Public queries

    def check(self, formula: Formula) -> SatResult:
        """Decide satisfiability; a returned witness always satisfies the formula."""
        cached = self._cache.get(formula)
        if cached is not None:
            return cached

        self._leaves = 0
        model = self._search((), [to_nnf(formula)])
        if model is None:
            result = UNSAT
        else:
            witness = {name: zero_value(self.domain_of(name)) for name in sorted(free_params(formula))}
            witness.update({name: value for name, value in model.items() if name in witness})
            if not evaluate(formula, witness):
                raise SpecMineError(f"Decision procedure produced a non-model {witness}", stage="logic")
            result = SatResult(True, witness)

        self._cache[formula] = result
        return result

    def is_sat(self, formula: Formula) -> bool:
        return self.check(formula).satisfiable

    def implies(self, premise: Formula, conclusion: Formula) -> bool:
        """premise |= conclusion, i.e. premise && !conclusion is unsatisfiable."""
        return not self.is_sat(And((premise, Not(conclusion))))

    def equivalent(self, left: Formula, right: Formula) -> bool:
        return self.implies(left, right) and self.implies(right, left)

    # Lazy DNF expansion

    def _search(self, atoms: Tuple[Atom, ...], todo: List[Formula]) -> Optional[Dict[str, Value]]:
        collected = dict.fromkeys(atoms)
        pending: List[Tuple[Formula, ...]] = []

        while True:
            stack = list(todo)
            while stack:
                node = stack.pop()
                if isinstance(node, Top):
                    continue
                if isinstance(node, Bottom):
                    return None
                if isinstance(node, Atom):
                    collected[node] = None
                elif isinstance(node, And):
                    stack.extend(reversed(node.children))
                elif isinstance(node, Or):
                    pending.append(node.children)
                else:
                    raise TypeError(f"Formula not in negation normal form: {node!r}")

            bounds = _Bounds(collected, self)
            if bounds.conflict:
                return None

            # Drop refuted options, discharge entailed disjunctions, commit forced ones
            todo = []
            remaining = []
            for options in pending:
                viable = []
                for child in options:
                    if isinstance(child, Atom):
                        verdict = 1 if child in collected else bounds.status(child)
                        if verdict > 0:
                            viable = None
                            break
                        if verdict < 0:
                            continue
                    viable.append(child)
                if viable is None:
                    continue
                if not viable:
                    return None
                if len(viable) == 1:
                    todo.append(viable[0])
                else:
                    remaining.append(tuple(viable))
            pending = remaining
            if not todo:
                break

        current = tuple(collected)
        counted = sum(1 for item in current if not (item.op is Op.NE and not is_param_ref(item.rhs)))
        if counted > self.max_atoms:
            raise ComplexityBudgetExceeded(
                f"Conjunct with {counted} atoms exceeds the limit of {self.max_atoms}"
            )

        if not pending:
            self._leaves += 1
            if self._leaves > self.max_conjuncts:
                raise ComplexityBudgetExceeded(
                    f"More than {self.max_conjuncts} DNF conjuncts explored"
                )
            return self._solve_conjunct(current)

        # Branch on the disjunction with the fewest options
        index = min(range(len(pending)), key=lambda i: len(pending[i]))
        rest = [Or(options) for i, options in enumerate(pending) if i != index]
        for child in pending[index]:
            model = self._search(current, [child, *rest])
            if model is not None:
                return model
        return None

    # Theory solving for one conjunct

    def _solve_conjunct(self, atoms: Tuple[Atom, ...]) -> Optional[Dict[str, Value]]:
        addr_atoms = []
        int_atoms = []
        for item in atoms:
            if self.atom_domain(item) is Domain.ADDR:
                if item.op not in ADDR_OPS:
                    raise SpecMineError(f"Ordering comparison on address parameter: {item}", stage="logic")
                addr_atoms.append(item)
            else:
                int_atoms.append(item)

        addr_model = self._solve_addr(addr_atoms)
        if addr_model is None:
            return None
        int_model = self._solve_int(int_atoms)
        if int_model is None:
            return None
        return {**addr_model, **int_model}

    @staticmethod
    def _solve_addr(atoms: List[Atom]) -> Optional[Dict[str, Value]]:
        uf = _UnionFind()
        names = set()

        def node(value):
            if is_param_ref(value):
                names.add(value)
                return ("param", value)
            return ("const", value)

        for item in atoms:
            left, right = node(item.lhs), node(item.rhs)
            uf.find(left)
            uf.find(right)
            if item.op is Op.EQ:
                uf.union(left, right)

        constants: Dict[object, Value] = {}
        for key in list(uf.parent):
            if key[0] != "const":
                continue
            root = uf.find(key)
            if constants.setdefault(root, key[1]) != key[1]:
                return None

        for item in atoms:
            if item.op is Op.NE and uf.find(node(item.lhs)) == uf.find(node(item.rhs)):
                return None

        # Unconstrained classes get fresh addresses distinct from every constant
        used = {key[1] for key in uf.parent if key[0] == "const"} | {ADDR_ZERO}
        fresh: Dict[object, Value] = {}
        counter = 1
        model = {}
        for name in sorted(names):
            root = uf.find(("param", name))
            if root in constants:
                model[name] = constants[root]
                continue
            if root not in fresh:
                while f"0x{counter:x}" in used:
                    counter += 1
                fresh[root] = f"0x{counter:x}"
                used.add(fresh[root])
            model[name] = fresh[root]
        return model

    def _solve_int(self, atoms: List[Atom]) -> Optional[Dict[str, Value]]:
        uf = _UnionFind()
        names = set()
        for item in atoms:
            names.add(item.lhs)
            if is_param_ref(item.rhs):
                names.add(item.rhs)
                if item.op is Op.EQ:
                    uf.union(item.lhs, item.rhs)

        # Edges (u, v, w) encode v - u <= w
        edges: List[Tuple[str, str, int]] = []
        diseqs: List[Tuple[str, str, int]] = []

        def bound(x: str, y: str, op: Op, c: int) -> bool:
            """Add x - y op c; False when trivially violated."""
            if x == y:
                return _holds(0, op, c)
            if op is Op.LE:
                edges.append((y, x, c))
            elif op is Op.LT:
                edges.append((y, x, c - 1))
            elif op is Op.GE:
                edges.append((x, y, -c))
            elif op is Op.GT:
                edges.append((x, y, -c - 1))
            elif op is Op.EQ:
                edges.append((y, x, c))
                edges.append((x, y, -c))
            else:
                diseqs.append((x, y, c))
            return True

        for item in atoms:
            x = uf.find(item.lhs)
            if is_param_ref(item.rhs):
                y, c = uf.find(item.rhs), 0
            else:
                y, c = _ZERO, item.rhs
            if not bound(x, y, item.op, c):
                return None

        for name in names:
            if self.domain_of(name) is Domain.BOOL:
                rep = uf.find(name)
                bound(rep, _ZERO, Op.GE, 0)
                bound(rep, _ZERO, Op.LE, 1)

        nodes = sorted({uf.find(name) for name in names} | {_ZERO})
        values = _solve_difference(nodes, edges, diseqs)
        if values is None:
            return None
        return {name: values[uf.find(name)] for name in names}


def _holds(left: int, op: Op, right: int) -> bool:
    return evaluate(Atom("l", op, right), {"l": left})


def _bellman_ford(nodes: List[str], edges: List[Tuple[str, str, int]]) -> Optional[Dict[str, int]]:
    """Shortest distances from a virtual source; None on a negative cycle."""
    dist = {node: 0 for node in nodes}
    for _ in range(len(nodes)):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return dist
    return None


def _solve_difference(
    nodes: List[str],
    edges: List[Tuple[str, str, int]],
    diseqs: List[Tuple[str, str, int]]
) -> Optional[Dict[str, int]]:
    """Integer solution of the difference constraints avoiding every x - y = c in diseqs."""
    stack = [edges]
    while stack:
        current = stack.pop()
        dist = _bellman_ford(nodes, current)
        if dist is None:
            continue
        offset = dist[_ZERO]
        values = {node: dist[node] - offset for node in nodes}
        violated = next(((x, y, c) for x, y, c in diseqs if values[x] - values[y] == c), None)
        if violated is None:
            return values
        x, y, c = violated
        # Try x - y <= c - 1 first, then x - y >= c + 1
        stack.append(current + [(x, y, -c - 1)])
        stack.append(current + [(y, x, c - 1)])
    return None


def sat(formula: Formula, domains: Optional[Mapping[str, Domain]] = None) -> SatResult:
    """Satisfiability of a formula under the given parameter domains."""
    return Solver(domains).check(formula)


def implies(premise: Formula, conclusion: Formula, domains: Optional[Mapping[str, Domain]] = None) -> bool:
    """Whether every model of premise is a model of conclusion."""
    return Solver(domains).implies(premise, conclusion)
