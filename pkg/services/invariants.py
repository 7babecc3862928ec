"""
Likely pre-/post-conditions per function from successful observations.

Every comparison template `x op y` and `x op k` over the parameters an
event always binds is instantiated and checked against every observation;
the survivors form the condition. Constants come from the corpus.
"""

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from core.config import settings
from core.errors import InvariantBroken, SpecMineError
from core.formats import ConditionsEntry, ConditionsFile
from core.logger import log
from services.formula import (
    ADDR_OPS,
    ADDR_ZERO,
    TRUE,
    Atom,
    Domain,
    Formula,
    Op,
    Value,
    conj,
    disj,
    evaluate,
    is_param_ref,
    iter_atoms,
)
from services.formula_syntax import format_formula, parse_formula
from services.sat import Solver
from services.slicer import Slice, value_sort_key
from services.trace_model import ContractSchema, ObservationStep, schema_from_file, schema_to_file


class EmptyPool(SpecMineError):
    """No inferred atom talks about state variables only."""

    def __init__(self):
        super().__init__("No state-variable predicate survived inference", stage="infer")


# Equalities first so that weaker comparisons they imply get pruned
OP_RANK = {Op.EQ: 0, Op.LT: 1, Op.GT: 1, Op.LE: 2, Op.GE: 2, Op.NE: 3}
INT_OPS = (Op.EQ, Op.NE, Op.LT, Op.LE, Op.GT, Op.GE)


@dataclass(frozen=True)
class FunctionConditions:
    event: str
    pre: Formula
    post: Formula
    support: int


@dataclass(frozen=True)
class PredicatePool:
    atoms: Tuple[Atom, ...]

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)


def observations_by_event(slices: Iterable[Slice]) -> Dict[str, List[ObservationStep]]:
    """Successful steps of all slices grouped by event name."""
    grouped: Dict[str, List[ObservationStep]] = {}
    for slice_ in slices:
        for step in slice_.steps:
            if step.succeeded:
                grouped.setdefault(step.event, []).append(step)
    return grouped


def corpus_constants(
    observations: Mapping[str, Sequence[ObservationStep]],
    schema: ContractSchema,
    limit: Optional[int] = None
) -> Dict[str, Tuple[Value, ...]]:
    """
    Per-parameter constant set: 0, 1 (or the zero address) plus the observed values.

    Observed values are added only for enum-like parameters: untagged ones
    taking at most `limit` distinct values. Unit-tagged quantities (amounts,
    rounds, timestamps) and wide-ranged parameters get the base constants alone.
    """
    limit = limit or settings.SPECMINE_MAX_CONSTANTS
    counts: Dict[str, Counter] = {}
    state_names = set(schema.state_names)
    for steps in observations.values():
        for step in steps:
            for name, value in step.args.items():
                counts.setdefault(name, Counter())[value] += 1
            for name in state_names:
                counts.setdefault(name, Counter()).update((step.pre_state[name], step.post_state[name]))

    domains = schema.domains()
    units = schema.units()
    result = {}
    for name, counter in counts.items():
        domain = domains.get(name, Domain.INT)
        if domain is Domain.BOOL:
            result[name] = (0, 1)
            continue
        base = [ADDR_ZERO] if domain is Domain.ADDR else [0, 1]
        if len(counter) > limit or units.get(name) is not None:
            result[name] = tuple(base)
            continue
        ranked = sorted(counter.items(), key=lambda item: (-item[1], value_sort_key(item[0])))
        chosen = list(base)
        for value, _ in ranked:
            if len(chosen) >= limit:
                break
            if value not in chosen:
                chosen.append(value)
        result[name] = tuple(sorted(chosen, key=value_sort_key))
    return result


def session_params(slices: Iterable[Slice], schema: ContractSchema) -> FrozenSet[str]:
    """
    Parameters that identify sessions rather than describe them.

    These are the binding parameters of the slice keys plus every parameter
    sharing a unit tag with one of them, such as the counter a key is read from.
    """
    keys = {name for slice_ in slices for name, _ in slice_.key}
    units = {schema.units().get(name) for name in keys} - {None}
    tagged = {spec.name for spec in schema.all_params() if spec.unit is not None and spec.unit in units}
    return frozenset(keys | tagged)


def relevant_params(
    event: str,
    steps: Sequence[ObservationStep],
    schema: ContractSchema,
    excluded: Iterable[str] = ()
) -> List[str]:
    """State variables plus the inputs and environment symbols bound in every observation."""
    skip = frozenset(excluded)
    args = [
        name for name in schema.argument_names(event)
        if name not in skip and all(name in step.args for step in steps)
    ]
    return list(schema.state_names) + args


def comparable(left: str, right: str, schema: ContractSchema) -> bool:
    a, b = schema.param(left), schema.param(right)
    if a is None or b is None:
        return False
    return a.domain is b.domain and a.unit == b.unit


def candidate_atoms(
    params: Sequence[str],
    constants: Mapping[str, Sequence[Value]],
    schema: ContractSchema
) -> List[Atom]:
    """All template instances over the given parameters, in a fixed order."""
    domains = schema.domains()
    atoms = []
    for index, name in enumerate(params):
        domain = domains.get(name, Domain.INT)
        ops = INT_OPS if domain is Domain.INT else ADDR_OPS
        for value in constants.get(name, ()):
            atoms.extend(Atom(name, op, value) for op in ops)
        for other in params[index + 1:]:
            if comparable(name, other, schema):
                atoms.extend(Atom(name, op, other) for op in ops)
    return atoms


def surviving_atoms(valuations: Iterable[Mapping[str, Value]], candidates: Sequence[Atom]) -> List[Atom]:
    """Candidates that hold on every valuation (order of candidates preserved)."""
    alive = list(candidates)
    for valuation in valuations:
        if not alive:
            break
        alive = [item for item in alive if evaluate(item, valuation)]
    return alive


def prune_implied(atoms: Sequence[Atom], solver: Solver) -> List[Atom]:
    """
    Drop atoms implied by a stronger survivor.

    Atoms are visited equalities first; an atom is kept unless one already
    kept over the same parameters implies it.
    """
    ordered = sorted(atoms, key=lambda item: (OP_RANK[item.op], str(item)))
    kept: List[Atom] = []
    for item in ordered:
        params = item.params()
        if any(other.params() == params and solver.implies(other, item) for other in kept):
            continue
        kept.append(item)
    return kept


def _condition(
    valuations: Sequence[Mapping[str, Value]],
    candidates: Sequence[Atom],
    solver: Solver
) -> Formula:
    return conj(prune_implied(surviving_atoms(valuations, candidates), solver))


def _case_split(
    steps: Sequence[ObservationStep],
    split_on: Sequence[str],
    side: str,
    candidates: Sequence[Atom],
    solver: Solver
) -> Formula:
    if side == "pre":
        valuation_of, state_of = ObservationStep.pre_valuation, (lambda step: step.pre_state)
    else:
        valuation_of, state_of = ObservationStep.post_valuation, (lambda step: step.post_state)

    if not split_on:
        return _condition([valuation_of(step) for step in steps], candidates, solver)

    groups: Dict[Tuple[Value, ...], List[ObservationStep]] = {}
    for step in steps:
        groups.setdefault(tuple(state_of(step)[name] for name in split_on), []).append(step)
    ordered = sorted(groups.items(), key=lambda item: tuple(value_sort_key(v) for v in item[0]))
    return disj(
        _condition([valuation_of(step) for step in group], candidates, solver)
        for _, group in ordered
    )


def infer_conditions(
    slices: Sequence[Slice],
    schema: ContractSchema,
    split_on: Sequence[str] = (),
    min_support: int = 1
) -> Dict[str, FunctionConditions]:
    """
    Guard and update per observed event.

    With split_on, observations are grouped by the values of those state
    variables and the condition is the disjunction of the per-group
    conjunctions. Events observed fewer than min_support times get the
    trivial conditions.
    """
    if not slices:
        raise SpecMineError("Cannot infer conditions from an empty slice set", stage="infer")
    unknown = [name for name in split_on if name not in schema.state_names]
    if unknown:
        raise SpecMineError(f"split_on names unknown state variables {unknown}", stage="infer")

    observations = observations_by_event(slices)
    constants = corpus_constants(observations, schema)
    solver = Solver(schema.domains())
    identifiers = session_params(slices, schema)
    if identifiers:
        log.debug(f"Session parameters kept out of templates: {', '.join(sorted(identifiers))}")

    conditions = {}
    for event in sorted(observations):
        steps = observations[event]
        if len(steps) < min_support:
            log.debug(f"{event}: support {len(steps)} below {min_support}, conditions left open")
            conditions[event] = FunctionConditions(event, TRUE, TRUE, len(steps))
            continue
        candidates = candidate_atoms(relevant_params(event, steps, schema, identifiers), constants, schema)
        pre = _case_split(steps, split_on, "pre", candidates, solver)
        post = _case_split(steps, split_on, "post", candidates, solver)
        conditions[event] = FunctionConditions(event, pre, post, len(steps))
        log.debug(f"{event}: {len(candidates)} candidates, pre {format_formula(pre)}, post {format_formula(post)}")

    check_conditions(conditions, observations)
    log.info(f"Inferred conditions for {len(conditions)} events")
    return conditions


def check_conditions(
    conditions: Mapping[str, FunctionConditions],
    observations: Mapping[str, Sequence[ObservationStep]]
) -> None:
    """Every observation must satisfy its event's guard and update."""
    for event, steps in observations.items():
        cond = conditions.get(event)
        if cond is None:
            continue
        for step in steps:
            if not evaluate(cond.pre, step.pre_valuation()):
                raise InvariantBroken(f"Step {step.seq_no} violates the inferred guard of {event}", stage="infer")
            if not evaluate(cond.post, step.post_valuation()):
                raise InvariantBroken(f"Step {step.seq_no} violates the inferred update of {event}", stage="infer")


def build_predicate_pool(conditions: Mapping[str, FunctionConditions], schema: ContractSchema) -> PredicatePool:
    """State-variable atoms of all conditions, one representative per equivalence class."""
    state_names = set(schema.state_names)
    solver = Solver(schema.domains())
    found = []
    for event in sorted(conditions):
        cond = conditions[event]
        for formula in (cond.pre, cond.post):
            found.extend(item for item in iter_atoms(formula) if item.params() <= state_names)

    ordered = sorted(set(found), key=lambda item: (item.lhs, str(item.rhs) if is_param_ref(item.rhs) else "", OP_RANK[item.op], str(item)))
    pool: List[Atom] = []
    for item in ordered:
        if any(other.params() == item.params() and solver.equivalent(other, item) for other in pool):
            continue
        pool.append(item)

    if not pool:
        raise EmptyPool()
    log.info(f"Predicate pool: {', '.join(str(item) for item in pool)}")
    return PredicatePool(tuple(pool))


# Conditions report

def conditions_to_file(
    conditions: Mapping[str, FunctionConditions],
    schema: ContractSchema,
    split_on: Sequence[str] = (),
    pool: Optional[PredicatePool] = None,
    manifest: Optional[str] = None
) -> ConditionsFile:
    return ConditionsFile(
        manifest=manifest,
        contract=schema_to_file(schema),
        split_on=list(split_on),
        conditions={
            event: ConditionsEntry(
                pre=format_formula(cond.pre),
                post=format_formula(cond.post),
                support=cond.support
            )
            for event, cond in sorted(conditions.items())
        },
        pool=[str(item) for item in pool] if pool else [],
    )


def conditions_from_entries(entries: Mapping[str, ConditionsEntry]) -> Dict[str, FunctionConditions]:
    return {
        event: FunctionConditions(event, parse_formula(entry.pre), parse_formula(entry.post), entry.support)
        for event, entry in entries.items()
    }


def load_conditions(path: Union[str, Path]) -> Tuple[ContractSchema, Dict[str, FunctionConditions]]:
    try:
        model = ConditionsFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SpecMineError(f"Invalid conditions file: {e}", stage="infer", location=str(path)) from None
    return schema_from_file(model.contract), conditions_from_entries(model.conditions)
