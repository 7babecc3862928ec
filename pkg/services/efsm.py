"""Extended finite state machines: abstraction, replay, path enumeration and export."""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple, Union

from pydantic import ValidationError

from core.errors import InvariantBroken, SpecMineError
from core.formats import ConditionsEntry, ModelFile, StateEntry, TransitionEntry
from core.logger import log
from services.formula import TRUE, And, Formula, Value, evaluate
from services.formula_syntax import format_formula, parse_formula
from services.invariants import FunctionConditions, conditions_from_entries
from services.sat import Solver
from services.slicer import Slice
from services.trace_model import ContractSchema, schema_from_file, schema_to_file


class AmbiguousAbstraction(SpecMineError):
    """More than one symbolic state matches a concrete state."""

    def __init__(self, valuation: Mapping[str, Value], ids: Sequence[int]):
        super().__init__(f"States {list(ids)} all match {dict(valuation)}", stage="efsm")
        self.ids = list(ids)


class ModelFormatError(SpecMineError):
    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(message, stage="model", location=location)


@dataclass(frozen=True)
class SymbolicState:
    id: int
    formula: Formula
    is_initial: bool = False
    parent: Optional[int] = None
    origin: str = "init"


@dataclass(frozen=True)
class Transition:
    """Edge (src, event, dst); guard and update ride along but do not identify it."""

    src: int
    event: str
    dst: int
    guard: Formula = field(default=TRUE, compare=False, hash=False)
    update: Formula = field(default=TRUE, compare=False, hash=False)

    @property
    def key(self) -> Tuple[int, str, int]:
        return (self.src, self.event, self.dst)

    def __str__(self) -> str:
        return f"q{self.src}-{self.event}->q{self.dst}"


@dataclass(frozen=True)
class SymbolicPath:
    """Alternating states and transitions starting at the initial state."""

    states: Tuple[int, ...]
    transitions: Tuple[Transition, ...] = ()

    @property
    def last(self) -> int:
        return self.states[-1]

    def extend(self, transition: Transition) -> "SymbolicPath":
        return SymbolicPath(self.states + (transition.dst,), self.transitions + (transition,))

    def word(self) -> List[str]:
        return [t.event for t in self.transitions]

    def __len__(self) -> int:
        return len(self.transitions)

    def __str__(self) -> str:
        parts = [f"q{self.states[0]}"]
        for t in self.transitions:
            parts.append(f"-{t.event}-q{t.dst}")
        return "".join(parts)


@dataclass
class Fsm:
    """Plain event-labelled automaton, possibly nondeterministic."""

    states: Tuple[int, ...]
    initial: int
    edges: Tuple[Tuple[int, str, int], ...] = ()
    labels: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = tuple(sorted(set(self.edges)))
        known = set(self.states)
        if self.initial not in known:
            raise ModelFormatError(f"Initial state {self.initial} is not a state")
        for src, _, dst in self.edges:
            if src not in known or dst not in known:
                raise ModelFormatError(f"Edge {src}->{dst} references an unknown state")

    @property
    def alphabet(self) -> List[str]:
        return sorted({event for _, event, _ in self.edges})

    def outgoing(self, state: int) -> List[Tuple[int, str, int]]:
        return [edge for edge in self.edges if edge[0] == state]

    def reachable_edges(self) -> Set[Tuple[int, str, int]]:
        seen = {self.initial}
        queue = deque([self.initial])
        found = set()
        while queue:
            state = queue.popleft()
            for edge in self.outgoing(state):
                found.add(edge)
                if edge[2] not in seen:
                    seen.add(edge[2])
                    queue.append(edge[2])
        return found


@dataclass
class Efsm:
    """
    Mined automaton: symbolic states, event transitions and per-event conditions.

    Transitions are keyed by (src, event, dst); their guard and update are the
    conditions of the event.
    """

    schema: ContractSchema
    conditions: Dict[str, FunctionConditions]
    states: Dict[int, SymbolicState] = field(default_factory=dict)
    transitions: Dict[Tuple[int, str, int], Transition] = field(default_factory=dict)
    support: Dict[Tuple[int, str, int], int] = field(default_factory=dict)
    next_id: int = 0

    @property
    def alphabet(self) -> List[str]:
        return sorted(self.conditions)

    @property
    def initial(self) -> SymbolicState:
        initial = [state for state in self.states.values() if state.is_initial]
        if len(initial) != 1:
            raise InvariantBroken(f"Model has {len(initial)} initial states", stage="efsm")
        return initial[0]

    def guard(self, event: str) -> Formula:
        return self.conditions[event].pre

    def update(self, event: str) -> Formula:
        return self.conditions[event].post

    def add_state(
        self,
        formula: Formula,
        is_initial: bool = False,
        parent: Optional[int] = None,
        origin: str = "init"
    ) -> SymbolicState:
        state = SymbolicState(self.next_id, formula, is_initial, parent, origin)
        self.states[state.id] = state
        self.next_id += 1
        return state

    def remove_state(self, state_id: int) -> None:
        """Delete a state together with every transition touching it."""
        del self.states[state_id]
        for key in [key for key in self.transitions if state_id in (key[0], key[2])]:
            del self.transitions[key]
            self.support.pop(key, None)

    def add_transition(self, src: int, event: str, dst: int) -> Transition:
        transition = Transition(src, event, dst, self.guard(event), self.update(event))
        self.transitions[transition.key] = transition
        return transition

    def remove_transition(self, transition: Transition) -> None:
        self.transitions.pop(transition.key, None)
        self.support.pop(transition.key, None)

    def outgoing(self, state_id: int) -> List[Transition]:
        """Transitions leaving a state, ordered by (event, dst)."""
        return sorted(
            (t for t in self.transitions.values() if t.src == state_id),
            key=lambda t: (t.event, t.dst)
        )

    def sorted_transitions(self) -> List[Transition]:
        return [self.transitions[key] for key in sorted(self.transitions)]

    def check_states(self, solver: Optional[Solver] = None) -> None:
        """States must be satisfiable and pairwise disjoint."""
        solver = solver or Solver(self.schema.domains())
        ids = sorted(self.states)
        for index, left in enumerate(ids):
            if not solver.is_sat(self.states[left].formula):
                raise InvariantBroken(f"State q{left} is unsatisfiable", stage="efsm")
            for right in ids[index + 1:]:
                both = self.states[left].formula, self.states[right].formula
                if solver.is_sat(And(both)):
                    raise InvariantBroken(f"States q{left} and q{right} overlap", stage="efsm")

    def to_fsm(self) -> Fsm:
        """Drop formulas and conditions, keeping the event-labelled structure."""
        return Fsm(
            states=tuple(sorted(self.states)),
            initial=self.initial.id,
            edges=tuple(self.transitions),
            labels={sid: format_formula(state.formula) for sid, state in self.states.items()},
        )


Automaton = Union[Efsm, Fsm]


def as_fsm(model: Automaton) -> Fsm:
    return model.to_fsm() if isinstance(model, Efsm) else model


# Abstraction and replay

def abstract(valuation: Mapping[str, Value], model: Efsm) -> Optional[int]:
    """Id of the unique state whose formula holds on the valuation, None if no state does."""
    matches = [sid for sid in sorted(model.states) if evaluate(model.states[sid].formula, valuation)]
    if len(matches) > 1:
        raise AmbiguousAbstraction(valuation, matches)
    return matches[0] if matches else None


class RejectReason(str, Enum):
    NO_STATE = "NoState"
    NO_TRANSITION = "NoTransition"
    GUARD_FALSE = "GuardFalse"
    UPDATE_FALSE = "UpdateFalse"
    DISCONTINUOUS = "Discontinuous"


@dataclass(frozen=True)
class ReplayResult:
    accepted: bool
    path: Tuple[int, ...] = ()
    step_index: Optional[int] = None
    reason: Optional[RejectReason] = None


def replay(slice_: Slice, model: Efsm, count_support: bool = True) -> ReplayResult:
    """
    Walk a slice through the model.

    Each step needs a transition between the abstractions of its pre- and
    post-state whose guard holds before and whose update holds after, and
    must start where the previous step ended.
    Support counters are incremented only when the whole slice is accepted.
    """
    if not slice_.steps:
        return ReplayResult(True, (model.initial.id,))

    current = abstract(slice_.steps[0].pre_state, model)
    if current is None:
        return ReplayResult(False, (), 0, RejectReason.NO_STATE)
    path = [current]
    used = []
    for index, step in enumerate(slice_.steps):
        src = abstract(step.pre_state, model)
        dst = abstract(step.post_state, model)
        if src is None or dst is None:
            return ReplayResult(False, tuple(path), index, RejectReason.NO_STATE)
        if src != path[-1]:
            return ReplayResult(False, tuple(path), index, RejectReason.DISCONTINUOUS)
        transition = model.transitions.get((src, step.event, dst))
        if transition is None:
            return ReplayResult(False, tuple(path), index, RejectReason.NO_TRANSITION)
        if not evaluate(transition.guard, step.pre_valuation()):
            return ReplayResult(False, tuple(path), index, RejectReason.GUARD_FALSE)
        if not evaluate(transition.update, step.post_valuation()):
            return ReplayResult(False, tuple(path), index, RejectReason.UPDATE_FALSE)
        path.append(dst)
        used.append(transition.key)

    if count_support:
        for key in used:
            model.support[key] = model.support.get(key, 0) + 1
    return ReplayResult(True, tuple(path))


def replay_all(slices: Iterable[Slice], model: Efsm) -> List[Tuple[Slice, ReplayResult]]:
    """Recount support from scratch; returns the rejected slices with their results."""
    model.support = {}
    rejected = []
    for slice_ in slices:
        result = replay(slice_, model)
        if not result.accepted:
            rejected.append((slice_, result))
            log.debug(f"Slice {slice_.label} rejected at step {result.step_index}: {result.reason.value}")
    return rejected


# Paths and words

def enumerate_paths(model: Efsm, loop_once: bool = True) -> Iterator[SymbolicPath]:
    """
    Breadth-first stream of paths from the initial state, shortest first.

    Ties are broken by (event, dst). With loop_once no transition occurs twice
    in a path and the stream is finite; otherwise it is infinite on cyclic models.
    """
    queue = deque([SymbolicPath((model.initial.id,))])
    while queue:
        path = queue.popleft()
        yield path
        for transition in model.outgoing(path.last):
            if loop_once and transition in path.transitions:
                continue
            queue.append(path.extend(transition))


def accepts_word(model: Automaton, word: Sequence[str], loop_once: bool = False) -> bool:
    """
    Prefix-closed event-level acceptance: some path from the initial state reads the word.

    Guards and updates are ignored. With loop_once the path may not reuse an edge.
    """
    fsm = as_fsm(model)
    by_source: Dict[Tuple[int, str], List[Tuple[int, str, int]]] = {}
    for edge in fsm.edges:
        by_source.setdefault((edge[0], edge[1]), []).append(edge)

    if not loop_once:
        current = {fsm.initial}
        for event in word:
            current = {edge[2] for state in current for edge in by_source.get((state, event), ())}
            if not current:
                return False
        return True

    def search(state: int, position: int, used: frozenset) -> bool:
        if position == len(word):
            return True
        for edge in by_source.get((state, word[position]), ()):
            if edge not in used and search(edge[2], position + 1, used | {edge}):
                return True
        return False

    return search(fsm.initial, 0, frozenset())


# Model files

def model_to_file(model: Automaton, manifest: Optional[str] = None) -> ModelFile:
    """Lossless JSON form of an EFSM or a plain automaton."""
    if isinstance(model, Fsm):
        return ModelFile(
            kind="fsm",
            manifest=manifest,
            alphabet=model.alphabet,
            states=[
                StateEntry(id=sid, label=model.labels.get(sid), initial=sid == model.initial)
                for sid in model.states
            ],
            transitions=[TransitionEntry(src=src, event=event, dst=dst) for src, event, dst in model.edges],
            next_id=max(model.states, default=-1) + 1,
        )

    return ModelFile(
        kind="efsm",
        manifest=manifest,
        contract=schema_to_file(model.schema),
        alphabet=model.alphabet,
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
        conditions={
            event: ConditionsEntry(pre=format_formula(cond.pre), post=format_formula(cond.post), support=cond.support)
            for event, cond in sorted(model.conditions.items())
        },
        next_id=model.next_id,
    )


def model_from_file(data: ModelFile) -> Automaton:
    if data.kind == "fsm":
        initial = [entry.id for entry in data.states if entry.initial]
        if len(initial) != 1:
            raise ModelFormatError(f"Automaton declares {len(initial)} initial states")
        return Fsm(
            states=tuple(entry.id for entry in data.states),
            initial=initial[0],
            edges=tuple((t.src, t.event, t.dst) for t in data.transitions),
            labels={entry.id: entry.label for entry in data.states if entry.label is not None},
        )

    if data.contract is None:
        raise ModelFormatError("EFSM file lacks the contract schema")
    model = Efsm(
        schema=schema_from_file(data.contract),
        conditions=conditions_from_entries(data.conditions),
        next_id=data.next_id,
    )
    for entry in data.states:
        if entry.formula is None:
            raise ModelFormatError(f"State {entry.id} has no formula")
        model.states[entry.id] = SymbolicState(
            entry.id, parse_formula(entry.formula), entry.initial, entry.parent, entry.origin
        )
    for t in data.transitions:
        if t.src not in model.states or t.dst not in model.states or t.event not in model.conditions:
            raise ModelFormatError(f"Transition q{t.src}-{t.event}->q{t.dst} references unknown parts")
        transition = model.add_transition(t.src, t.event, t.dst)
        if t.support:
            model.support[transition.key] = t.support
    model.initial  # validates the single initial state
    return model


def load_model(path: Union[str, Path]) -> Automaton:
    try:
        data = ModelFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ModelFormatError(f"Invalid model file: {e}", location=str(path)) from None
    return model_from_file(data)


def export(model: Automaton, fmt: str = "json", manifest: Optional[str] = None) -> str:
    """Model text in the requested format ("json" or "dot")."""
    if fmt == "json":
        return model_to_file(model, manifest).model_dump_json(indent=2) + "\n"
    if fmt == "dot":
        from utils.dot import render_dot
        return render_dot(model)
    raise ModelFormatError(f"Unknown export format {fmt!r}")


def describe(model: Efsm) -> str:
    """One line per state formula, then one per transition."""
    lines = [f"q{sid}: {format_formula(model.states[sid].formula)}" for sid in sorted(model.states)]
    lines.extend(str(t) for t in model.sorted_transitions())
    return "\n".join(lines)
