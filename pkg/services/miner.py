"""
Counterexample-guided refinement of a symbolic automaton.

The loop starts from two states (all-zero and the rest), adds every
theoretically feasible transition, then repeatedly looks for the shortest
symbolic path without a witness in the observed history and removes it by
splitting a state or dropping a transition.

The history is taken over predicate signatures: two concrete states are the
same history node when every abstraction atom (the state-variable atoms of
the inferred conditions and of the state formulas) agrees on them. A path is
supported when the observed steps, joined at equal signatures, contain a
walk from the genesis signature whose nodes abstract to the path's states.
"""

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from core.config import settings
from core.errors import InvariantBroken, SpecMineError
from core.formats import ActionEntry, BudgetEntry, MiningReportFile, StateEntry, TransitionEntry
from core.logger import log
from services.efsm import Efsm, SymbolicPath, Transition, replay_all
from services.formula import (
    And,
    Atom,
    Formula,
    Not,
    Op,
    Top,
    Value,
    conj,
    disj,
    evaluate,
    iter_atoms,
    project,
    simplify,
    zero_value,
)
from services.formula_syntax import format_formula
from services.invariants import FunctionConditions
from services.sat import Solver
from services.slicer import Slice
from services.trace_model import ContractSchema


class DegenerateSchema(SpecMineError):
    def __init__(self):
        super().__init__("The contract declares no state variables", stage="mine")


class NonZeroGenesis(SpecMineError):
    """A session starts from a state other than the all-zero one."""

    def __init__(self, label: str):
        super().__init__(f"Session {label} does not start from the all-zero state", stage="mine", location=label)


class BudgetExceeded(SpecMineError):
    def __init__(self, used: int, bound: int):
        super().__init__(f"Refinement used {used} actions, above the bound {bound}", stage="mine")


class CorpusTooDiverse(SpecMineError):
    def __init__(self, count: int, limit: int, state_id: int):
        super().__init__(
            f"Splitting q{state_id} needs {count} observed signatures (limit {limit}); "
            f"use coarser predicates or a smaller corpus",
            stage="mine"
        )


Signature = Tuple[bool, ...]


@dataclass(frozen=True)
class MinerConfig:
    allow_loops: bool = True
    max_rmpath_actions: Optional[int] = None
    seed: int = 0
    path_order: str = "shortest-first"
    max_paths: Optional[int] = None


@dataclass
class TerminationBudget:
    """actions_used never exceeds (N_s + 1) * n_hat * M * n_hat."""

    n_concrete_states: int
    n_slices: int
    n_functions: int
    n_hat: int = 2
    actions_used: int = 0
    override: Optional[int] = None

    @property
    def bound(self) -> int:
        if self.override is not None:
            return self.override
        return (self.n_concrete_states + 1) * self.n_hat * self.n_functions * self.n_hat

    def spend(self) -> None:
        self.actions_used += 1
        if self.actions_used > self.bound:
            raise BudgetExceeded(self.actions_used, self.bound)


@dataclass(frozen=True)
class Spurious:
    """A supported path and the transition whose extension has no witness."""

    path: SymbolicPath
    transition: Transition


@dataclass
class MiningReport:
    actions: List[ActionEntry] = field(default_factory=list)
    rmpath_count: int = 0
    budget: Optional[TerminationBudget] = None
    n_concrete_states: int = 0
    rejected: List[str] = field(default_factory=list)
    truncated: bool = False

    def to_file(self, model: Efsm, manifest: Optional[str] = None) -> MiningReportFile:
        budget = self.budget
        return MiningReportFile(
            manifest=manifest,
            actions=self.actions,
            rmpath_count=self.rmpath_count,
            budget=BudgetEntry(
                n_concrete_states=budget.n_concrete_states,
                n_slices=budget.n_slices,
                n_functions=budget.n_functions,
                n_hat=budget.n_hat,
                actions_used=budget.actions_used,
                bound=budget.bound,
            ),
            states=[
                StateEntry(
                    id=state.id,
                    formula=format_formula(state.formula),
                    initial=state.is_initial,
                    parent=state.parent,
                    origin=state.origin,
                )
                for state in (model.states[sid] for sid in sorted(model.states))
            ],
            transitions=[
                TransitionEntry(src=t.src, event=t.event, dst=t.dst, support=model.support.get(t.key, 0))
                for t in model.sorted_transitions()
            ],
            support={str(t): model.support.get(t.key, 0) for t in model.sorted_transitions()},
            n_concrete_states=self.n_concrete_states,
            rejected_slices=self.rejected,
            truncated=self.truncated,
        )


def abstraction_atoms(
    conditions: Mapping[str, FunctionConditions],
    schema: ContractSchema,
    formulas: Iterable[Formula] = ()
) -> List[Atom]:
    """State-variable atoms of the conditions and formulas, plus one zero atom per variable."""
    names = frozenset(schema.state_names)
    found = {Atom(spec.name, Op.EQ, zero_value(spec.domain)) for spec in schema.state_vars}
    sources = [f for cond in conditions.values() for f in (cond.pre, cond.post)]
    for formula in (*sources, *formulas):
        found.update(item for item in iter_atoms(formula) if item.params() <= names)
    return sorted(found, key=str)


class History:
    """
    The observed transition system over predicate signatures.

    Every state formula the miner builds is a boolean combination of the
    abstraction atoms, so it has one truth value per signature.
    """

    def __init__(self, slices: Iterable[Slice], schema: ContractSchema, atoms: Iterable[Atom]):
        self.names = schema.state_names
        self.atoms: Tuple[Atom, ...] = tuple(sorted(set(atoms), key=str))
        zero = schema.zero_state()
        self.genesis: Signature = self.signature(zero)
        self.points: Dict[Signature, Dict[str, Value]] = {self.genesis: dict(zero)}
        self.successors: Dict[Tuple[Signature, str], Set[Signature]] = {}
        self.realizations: Dict[str, Set[Tuple[Signature, Signature]]] = {}
        self.concrete: Set[Tuple[Value, ...]] = {tuple(zero[name] for name in self.names)}
        self.n_slices = 0

        for slice_ in slices:
            self.n_slices += 1
            steps = [step for step in slice_.steps if step.succeeded]
            if steps and any(steps[0].pre_state[name] != zero[name] for name in self.names):
                raise NonZeroGenesis(slice_.label)
            for step in steps:
                src, dst = self._observe(step.pre_state), self._observe(step.post_state)
                self.successors.setdefault((src, step.event), set()).add(dst)
                self.realizations.setdefault(step.event, set()).add((src, dst))

    def _observe(self, state: Mapping[str, Value]) -> Signature:
        self.concrete.add(tuple(state[name] for name in self.names))
        sig = self.signature(state)
        self.points.setdefault(sig, {name: state[name] for name in self.names})
        return sig

    def signature(self, state: Mapping[str, Value]) -> Signature:
        return tuple(evaluate(item, state) for item in self.atoms)

    @property
    def states(self) -> List[Signature]:
        return sorted(self.points)

    def valuation(self, sig: Signature) -> Dict[str, Value]:
        """The first observed concrete state carrying the signature."""
        return self.points[sig]

    def describe(self, members: Iterable[Signature], others: Iterable[Signature]) -> Formula:
        """
        A formula true on the members and false on the others.

        Atoms are picked greedily until every member disagrees with every
        other signature on a picked atom; each distinct member pattern over
        the picked atoms becomes one disjunct.
        """
        members = sorted(set(members))
        pending = {(a, b) for a in members for b in set(others)}
        chosen: List[int] = []
        while pending:
            index = max(
                range(len(self.atoms)),
                key=lambda i: (sum(a[i] != b[i] for a, b in pending), -i)
            )
            if all(a[index] == b[index] for a, b in pending):
                raise InvariantBroken("Cannot separate identical signatures", stage="mine")
            chosen.append(index)
            pending = {(a, b) for a, b in pending if a[index] == b[index]}
        chosen.sort()
        cubes = sorted({tuple(sig[i] for i in chosen) for sig in members})
        return disj(
            conj(self.atoms[i] if bit else self.atoms[i].negated() for i, bit in zip(chosen, cube))
            for cube in cubes
        )


class Miner:
    """Init, Construct and RmPath over one corpus; the model is refined in place."""

    def __init__(
        self,
        slices: Sequence[Slice],
        conditions: Mapping[str, FunctionConditions],
        schema: ContractSchema,
        cfg: Optional[MinerConfig] = None,
        model: Optional[Efsm] = None
    ):
        self.cfg = cfg or MinerConfig()
        self.slices = list(slices)
        self.schema = schema
        self.model = model if model is not None else init_model(conditions, schema)
        formulas = [state.formula for state in self.model.states.values()]
        self.history = History(self.slices, schema, abstraction_atoms(conditions, schema, formulas))
        self.solver = Solver(schema.domains())
        self.removed: Set[Tuple[int, str, int]] = set()
        n_concrete = len(self.history.concrete)
        self.report = MiningReport(n_concrete_states=n_concrete)
        self.report.budget = TerminationBudget(
            n_concrete_states=n_concrete,
            n_slices=self.history.n_slices,
            n_functions=max(len(schema.functions), 1),
            n_hat=len(self.model.states),
            override=self.cfg.max_rmpath_actions,
        )
        self._guard_ok: Dict[Tuple[int, str], bool] = {}
        self._update_ok: Dict[Tuple[int, str], bool] = {}
        self._alpha: Dict[Signature, int] = {}
        self._abstract_all()

        observed = {event for _, event in self.history.successors}
        missing = sorted(observed - set(conditions))
        if missing:
            raise SpecMineError(f"No conditions for observed events {missing}", stage="mine")

    @classmethod
    def attach(cls, model: Efsm, slices: Sequence[Slice], cfg: Optional[MinerConfig] = None) -> "Miner":
        """A miner working on an existing model instead of a fresh two-state one."""
        return cls(slices, model.conditions, model.schema, cfg, model=model)

    # Abstraction of observed signatures

    def _abstract_all(self) -> None:
        self._alpha = {}
        for sig in self.history.states:
            valuation = self.history.valuation(sig)
            matches = [sid for sid in sorted(self.model.states) if evaluate(self.model.states[sid].formula, valuation)]
            if len(matches) != 1:
                raise InvariantBroken(f"Concrete state {valuation} matches states {matches}", stage="mine")
            self._alpha[sig] = matches[0]

    def alpha(self, sig: Signature) -> int:
        return self._alpha[sig]

    def members(self, sid: int) -> List[Signature]:
        """Observed signatures abstracted to the state."""
        return [sig for sig in self.history.states if self._alpha[sig] == sid]

    def post(self, sources: Iterable[Signature], transition: Transition) -> FrozenSet[Signature]:
        """Observed successors of sources by the transition's event that land in its target."""
        result = set()
        for sig in sources:
            for dst in self.history.successors.get((sig, transition.event), ()):
                if self._alpha[dst] == transition.dst:
                    result.add(dst)
        return frozenset(result)

    def reached(self, path: SymbolicPath) -> FrozenSet[Signature]:
        """Signatures at the end of the walks that witness the path."""
        current = frozenset((self.history.genesis,))
        for transition in path.transitions:
            current = self.post(current, transition)
        return current

    # Rules

    def construct(self) -> int:
        """Add every feasible transition not yet present and never removed."""
        added = 0
        ids = sorted(self.model.states)
        for src in ids:
            for event in self.model.alphabet:
                if not self._feasible_guard(src, event):
                    continue
                for dst in ids:
                    key = (src, event, dst)
                    if key in self.model.transitions or key in self.removed:
                        continue
                    if src == dst and not self.cfg.allow_loops:
                        continue
                    if self._feasible_update(dst, event):
                        self.model.add_transition(src, event, dst)
                        added += 1
        if added:
            self.report.actions.append(ActionEntry(kind="construct", detail=f"+{added} transitions"))
            log.debug(f"Construct added {added} transitions")
        return added

    def _feasible_guard(self, sid: int, event: str) -> bool:
        key = (sid, event)
        if key not in self._guard_ok:
            formula = And((self.model.states[sid].formula, self.model.guard(event)))
            self._guard_ok[key] = self.solver.is_sat(formula)
        return self._guard_ok[key]

    def _feasible_update(self, sid: int, event: str) -> bool:
        key = (sid, event)
        if key not in self._update_ok:
            formula = And((self.model.states[sid].formula, self.model.update(event)))
            self._update_ok[key] = self.solver.is_sat(formula)
        return self._update_ok[key]

    def find_spurious(self) -> Optional[Spurious]:
        """
        First unsupported one-step extension of a supported loop-once path.

        Paths are explored shortest first with ties broken by (event, dst).
        Returns None when every loop-once path is supported, or when the
        search was cut at the path limit and random sampling found nothing.
        """
        limit = self.cfg.max_paths or settings.SPECMINE_MAX_PATHS
        root = SymbolicPath((self.model.initial.id,))
        queue = deque([(root, frozenset((self.history.genesis,)))])
        explored = 0
        while queue:
            path, reached = queue.popleft()
            explored += 1
            if explored > limit:
                log.warning(f"Path search stopped after {limit} supported paths; sampling the rest")
                self.report.truncated = True
                return self._sample_spurious()
            for transition in self.model.outgoing(path.last):
                if transition in path.transitions:
                    continue
                successors = self.post(reached, transition)
                if not successors:
                    return Spurious(path, transition)
                queue.append((path.extend(transition), successors))
        return None

    def _sample_spurious(self, walks: int = 2000) -> Optional[Spurious]:
        rng = random.Random(self.cfg.seed)
        for _ in range(walks):
            path = SymbolicPath((self.model.initial.id,))
            reached = frozenset((self.history.genesis,))
            while True:
                options = [t for t in self.model.outgoing(path.last) if t not in path.transitions]
                if not options:
                    break
                transition = rng.choice(options)
                successors = self.post(reached, transition)
                if not successors:
                    return Spurious(path, transition)
                path, reached = path.extend(transition), successors
        return None

    def split_remove(self, spurious: Spurious) -> ActionEntry:
        """
        Eliminate a spurious extension.

        The source state is split by the event's guard projected on state
        variables when observed signatures lie on both sides of it. Otherwise
        the transition is dropped if no observed step realises it, and else
        the signatures the path reaches are split from the rest of the state.
        """
        transition = spurious.transition
        state = self.model.states[transition.src]
        event = transition.event
        members = self.members(state.id)

        guard = project(self.model.guard(event), self.history.names)
        if not isinstance(guard, Top):
            holds = [evaluate(guard, self.history.valuation(sig)) for sig in members]
            if any(holds) and not all(holds):
                inside = simplify(And((state.formula, guard)))
                outside = simplify(And((state.formula, Not(guard))))
                left, right = self._split(state.id, inside, outside, "guard")
                return ActionEntry(
                    kind="split_guard", state=state.id, event=event,
                    detail=f"q{state.id} -> q{left}, q{right}"
                )

        realized = any(
            self._alpha[src] == state.id and self._alpha[dst] == transition.dst
            for src, dst in self.history.realizations.get(event, ())
        )
        if not realized:
            self.model.remove_transition(transition)
            self.removed.add(transition.key)
            return ActionEntry(kind="remove", state=state.id, event=event, detail=str(transition))

        reached = sorted(self.reached(spurious.path))
        if not reached:
            raise InvariantBroken(f"Spurious path {spurious.path} has no witness", stage="mine")
        limit = settings.SPECMINE_MAX_PRED_DISJUNCTS
        if len(reached) > limit:
            raise CorpusTooDiverse(len(reached), limit, state.id)
        rest = [sig for sig in members if sig not in reached]
        points = self.history.describe(reached, rest)
        inside = simplify(And((state.formula, points)))
        outside = simplify(And((state.formula, Not(points))))
        left, right = self._split(state.id, inside, outside, "states")
        return ActionEntry(
            kind="split_states", state=state.id, event=event,
            detail=f"q{state.id} -> q{left} ({len(reached)} signatures), q{right}"
        )

    def _split(self, sid: int, inside: Formula, outside: Formula, origin: str) -> Tuple[int, int]:
        old = self.model.states[sid]
        genesis = self.history.valuation(self.history.genesis)
        for formula in (inside, outside):
            if not self.solver.is_sat(formula):
                raise InvariantBroken(f"Splitting q{sid} produced an unsatisfiable state", stage="mine")
        if self.solver.is_sat(And((inside, outside))):
            raise InvariantBroken(f"Splitting q{sid} produced overlapping states", stage="mine")

        initial_inside = old.is_initial and evaluate(inside, genesis)
        initial_outside = old.is_initial and evaluate(outside, genesis)
        if old.is_initial and initial_inside == initial_outside:
            raise InvariantBroken(f"Splitting initial q{sid} lost the genesis state", stage="mine")

        self.model.remove_state(sid)
        left = self.model.add_state(inside, initial_inside, parent=sid, origin=f"{origin}+")
        right = self.model.add_state(outside, initial_outside, parent=sid, origin=f"{origin}-")

        for sig, owner in self._alpha.items():
            if owner == sid:
                self._alpha[sig] = left.id if evaluate(inside, self.history.valuation(sig)) else right.id

        budget = self.report.budget
        budget.n_hat = max(budget.n_hat, len(self.model.states))
        log.debug(f"Split q{sid} ({origin}) into q{left.id} and q{right.id}")
        return left.id, right.id

    # Scheduler

    def run(self) -> Tuple[Efsm, MiningReport]:
        """Construct to fixpoint, then RmPath until no spurious loop-once path remains."""
        self.construct()
        while True:
            spurious = self.find_spurious()
            if spurious is None:
                break
            log.debug(f"Spurious: {spurious.path} then {spurious.transition}")
            action = self.split_remove(spurious)
            self.report.actions.append(action)
            self.report.rmpath_count += 1
            self.report.budget.spend()
            if action.kind != "remove":
                self.construct()

        self.model.check_states(self.solver)
        rejected = replay_all(self.slices, self.model)
        self.report.rejected = [slice_.label for slice_, _ in rejected]
        if rejected:
            log.warning(f"{len(rejected)} training sessions do not replay on the mined model")

        log.info(
            f"Mined {len(self.model.states)} states and {len(self.model.transitions)} transitions "
            f"with {self.report.rmpath_count} refinement steps"
        )
        return self.model, self.report


def init_model(conditions: Mapping[str, FunctionConditions], schema: ContractSchema) -> Efsm:
    """Two-state model: q0 fixes every state variable at zero, q1 is its complement."""
    if not schema.state_vars:
        raise DegenerateSchema()
    if not conditions:
        raise SpecMineError("Cannot initialise a model without conditions", stage="mine")
    model = Efsm(schema=schema, conditions=dict(conditions))
    zero = conj(Atom(spec.name, Op.EQ, zero_value(spec.domain)) for spec in schema.state_vars)
    model.add_state(zero, is_initial=True)
    model.add_state(Not(zero))
    return model


def construct(model: Efsm, allow_loops: bool = True, removed: Iterable[Tuple[int, str, int]] = ()) -> Efsm:
    """Add (qi, e, qj) whenever qi && guard(e) and qj && update(e) are both satisfiable."""
    miner = Miner.attach(model, (), MinerConfig(allow_loops=allow_loops))
    miner.removed.update(removed)
    miner.construct()
    return model


def find_spurious(model: Efsm, slices: Sequence[Slice], max_paths: Optional[int] = None) -> Optional[Spurious]:
    """Shortest unsupported extension of a supported loop-once path of the given model."""
    return Miner.attach(model, slices, MinerConfig(max_paths=max_paths)).find_spurious()


def split_remove(model: Efsm, spurious: Spurious, slices: Sequence[Slice]) -> ActionEntry:
    """Apply one refinement step to the model in place."""
    return Miner.attach(model, slices).split_remove(spurious)


def mine(
    slices: Sequence[Slice],
    conditions: Mapping[str, FunctionConditions],
    schema: ContractSchema,
    cfg: Optional[MinerConfig] = None
) -> Tuple[Efsm, MiningReport]:
    """Mine an automaton from training sessions and their inferred conditions."""
    if not slices:
        raise SpecMineError("Cannot mine from an empty slice set", stage="mine")
    log.info(f"Mining from {len(slices)} sessions over {len(conditions)} events")
    return Miner(slices, conditions, schema, cfg).run()