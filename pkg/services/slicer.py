"""Parametric trace slicing: one non-parametric session per binding-key value."""

import random
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from core.errors import SpecMineError
from core.formats import SliceConfigFile, SliceEntry, SlicesFile
from core.logger import log
from services.formula import Value
from services.trace_model import (
    ContractSchema,
    ObservationStep,
    ParamKind,
    Trace,
    schema_from_file,
    schema_to_file,
    step_from_line,
    step_to_line,
)


class SliceConfigError(SpecMineError):
    def __init__(self, message: str):
        super().__init__(message, stage="slice")


class NoStableParam(SpecMineError):
    """No input parameter is constant per test session and varying across them."""

    def __init__(self):
        super().__init__(
            "No parameter is constant within each test trace and different across traces; "
            "supply a slice configuration manually",
            stage="slice"
        )


Binding = Mapping[str, Value]
Key = Tuple[Tuple[str, Value], ...]


@dataclass(frozen=True)
class SliceConfig:
    binding_params: Tuple[str, ...]
    key_source: Mapping[str, str] = field(default_factory=dict)
    session_start: Tuple[str, ...] = ()
    drop_unbound: bool = True
    source: str = ""

    def __post_init__(self):
        if not self.binding_params:
            raise SliceConfigError("binding_params must not be empty")

    @property
    def start_events(self) -> FrozenSet[str]:
        """Events that open a new session run for their key."""
        return frozenset(self.key_source) | frozenset(self.session_start)


@dataclass(frozen=True)
class Slice:
    """Steps of one session; key is the binding in binding-parameter order."""

    key: Key
    steps: Tuple[ObservationStep, ...]
    run: int = 0

    @property
    def binding(self) -> Dict[str, Value]:
        return dict(self.key)

    @property
    def label(self) -> str:
        text = ",".join(f"{name}={value}" for name, value in self.key)
        return f"{text}#{self.run}"

    def events(self) -> List[str]:
        return [step.event for step in self.steps]


def less_informative(partial: Binding, full: Binding) -> bool:
    """partial ⊑ full: every pair bound by partial is bound identically by full."""
    return all(name in full and full[name] == value for name, value in partial.items())


def value_sort_key(value: Value) -> Tuple[int, Union[int, str]]:
    """Orders integers before addresses, each by natural order."""
    return (0, value) if isinstance(value, int) else (1, value)


def validate_config(cfg: SliceConfig, schema: ContractSchema) -> None:
    """Every binding parameter must be an input or environment symbol, or be derived."""
    for name in cfg.binding_params:
        spec = schema.param(name)
        if spec is None and not cfg.key_source:
            raise SliceConfigError(f"Binding parameter {name} is not declared and has no key source")
        if spec is not None and spec.kind is ParamKind.STATE:
            raise SliceConfigError(f"Binding parameter {name} is a state variable")
    for event, expression in cfg.key_source.items():
        if schema.function(event) is None:
            raise SliceConfigError(f"key_source names unknown event {event}")
        prefix, _, name = expression.rpartition(".")
        if prefix in ("pre", "post"):
            if name not in schema.state_names:
                raise SliceConfigError(f"key_source for {event} reads unknown state variable {name}")
        elif prefix == "args" or not prefix:
            if name not in schema.argument_names(event) and name not in schema.state_names:
                raise SliceConfigError(f"key_source for {event} reads unknown parameter {name}")
        else:
            raise SliceConfigError(f"key_source expression {expression!r} has an unknown prefix")


def _resolve(expression: str, step: ObservationStep) -> Optional[Value]:
    prefix, _, name = expression.rpartition(".")
    if prefix == "pre":
        return step.pre_state.get(name)
    if prefix == "post":
        return step.post_state.get(name)
    if prefix == "args":
        return step.args.get(name)
    if name in step.args:
        return step.args[name]
    return step.pre_state.get(name)


def step_binding(step: ObservationStep, cfg: SliceConfig) -> Dict[str, Value]:
    """Partial binding of the binding parameters carried by one step."""
    binding = {name: step.args[name] for name in cfg.binding_params if name in step.args}
    expression = cfg.key_source.get(step.event)
    missing = [name for name in cfg.binding_params if name not in binding]
    if expression is not None and missing:
        if len(missing) > 1:
            raise SliceConfigError(
                f"key_source of {step.event} can derive one parameter, but {missing} are unbound"
            )
        value = _resolve(expression, step)
        if value is not None:
            binding[missing[0]] = value
    return binding


def slice_trace(trace: Trace, cfg: SliceConfig) -> List[Slice]:
    """
    Split a history into per-session slices.

    Successful steps binding every binding parameter belong to exactly one
    slice. Steps binding only some of them go to every slice whose key they
    are less informative than, within the run that is open at that point;
    steps binding none are dropped when cfg.drop_unbound is set and appended
    to every slice otherwise. A session-start event on an already used key
    opens a new run of that key.
    """
    validate_config(cfg, trace.schema)
    params = cfg.binding_params
    starts_on = cfg.start_events
    steps = [step for step in trace.steps if step.succeeded]
    bindings = [step_binding(step, cfg) for step in steps]

    run_starts: Dict[Tuple[Value, ...], List[int]] = {}
    for index, (step, binding) in enumerate(zip(steps, bindings)):
        if len(binding) != len(params):
            continue
        vector = tuple(binding[name] for name in params)
        starts = run_starts.setdefault(vector, [])
        if not starts or step.event in starts_on:
            starts.append(index)

    if not run_starts:
        log.warning(f"NoSessionsFound: no step binds all of {list(params)}")
        return []

    buckets: Dict[Tuple[Tuple[Value, ...], int], List[ObservationStep]] = {
        (vector, run): [] for vector, starts in run_starts.items() for run in range(len(starts))
    }

    for index, (step, binding) in enumerate(zip(steps, bindings)):
        if len(binding) == len(params):
            vector = tuple(binding[name] for name in params)
            run = bisect_right(run_starts[vector], index) - 1
            buckets[(vector, run)].append(step)
            continue
        if not binding and cfg.drop_unbound:
            continue
        for vector, starts in run_starts.items():
            if less_informative(binding, dict(zip(params, vector))):
                run = max(bisect_right(starts, index) - 1, 0)
                buckets[(vector, run)].append(step)

    ordered = sorted(
        buckets.items(),
        key=lambda item: (tuple(value_sort_key(v) for v in item[0][0]), item[0][1])
    )
    slices = [
        Slice(tuple(zip(params, vector)), tuple(bucket), run)
        for (vector, run), bucket in ordered
    ]
    log.info(f"Sliced {len(steps)} successful steps into {len(slices)} sessions")
    return slices


def continuity_breaks(slice_: Slice) -> List[int]:
    """Indices i where post-state of step i differs from pre-state of step i+1."""
    return [
        index for index in range(len(slice_.steps) - 1)
        if dict(slice_.steps[index].post_state) != dict(slice_.steps[index + 1].pre_state)
    ]


def infer_binding_hint(test_traces: Sequence[Trace]) -> SliceConfig:
    """
    Binding parameters from a unit-test suite, one session per trace.

    A function input qualifies when it is bound in every trace, constant
    within each trace and not constant across all traces.
    """
    if not test_traces:
        raise NoStableParam()
    schema = test_traces[0].schema
    candidates = sorted({spec.name for fn in schema.functions for spec in fn.inputs})

    stable = []
    for name in candidates:
        per_trace = []
        for trace in test_traces:
            values = {step.args[name] for step in trace.steps if step.succeeded and name in step.args}
            if len(values) != 1:
                break
            per_trace.append(next(iter(values)))
        else:
            if len(set(per_trace)) > 1:
                stable.append(name)

    if not stable:
        raise NoStableParam()
    log.info(f"Inferred binding parameters {stable} from {len(test_traces)} test traces")
    return SliceConfig(tuple(stable), source="inferred from test traces")


def split_holdout(slices: Sequence[Slice], ratio: float, seed: int) -> Tuple[List[Slice], List[Slice]]:
    """Deterministic train/test partition; ratio is the test share, order preserved."""
    if not 0 <= ratio < 1:
        raise SliceConfigError(f"Holdout ratio must be in [0, 1), got {ratio}")
    indices = list(range(len(slices)))
    random.Random(seed).shuffle(indices)
    test_ids = set(indices[:int(round(len(slices) * ratio))])
    train = [s for i, s in enumerate(slices) if i not in test_ids]
    test = [s for i, s in enumerate(slices) if i in test_ids]
    return train, test


# Files

def slice_config_from_file(model: SliceConfigFile) -> SliceConfig:
    return SliceConfig(
        binding_params=tuple(model.binding_params),
        key_source=dict(model.key_source),
        session_start=tuple(model.session_start),
        drop_unbound=model.drop_unbound,
        source=model.source,
    )


def slice_config_to_file(cfg: SliceConfig) -> SliceConfigFile:
    return SliceConfigFile(
        binding_params=list(cfg.binding_params),
        key_source=dict(cfg.key_source),
        session_start=list(cfg.session_start),
        drop_unbound=cfg.drop_unbound,
        source=cfg.source,
    )


def load_slice_config(path: Union[str, Path]) -> SliceConfig:
    try:
        model = SliceConfigFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SliceConfigError(f"Invalid slice configuration {path}: {e}") from None
    return slice_config_from_file(model)


def slices_to_file(
    slices: Iterable[Slice],
    schema: ContractSchema,
    cfg: SliceConfig,
    manifest: Optional[str] = None
) -> SlicesFile:
    return SlicesFile(
        manifest=manifest,
        contract=schema_to_file(schema),
        config=slice_config_to_file(cfg),
        slices=[
            SliceEntry(key=dict(s.key), run=s.run, steps=[step_to_line(step) for step in s.steps])
            for s in slices
        ],
    )


def slices_from_file(model: SlicesFile) -> Tuple[ContractSchema, SliceConfig, List[Slice]]:
    schema = schema_from_file(model.contract)
    cfg = slice_config_from_file(model.config)
    slices = []
    for entry in model.slices:
        key = tuple((name, entry.key[name]) for name in cfg.binding_params if name in entry.key)
        steps = tuple(step_from_line(line, schema) for line in entry.steps)
        slices.append(Slice(key, steps, entry.run))
    return schema, cfg, slices


def load_slices(path: Union[str, Path]) -> Tuple[ContractSchema, SliceConfig, List[Slice]]:
    try:
        model = SlicesFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SliceConfigError(f"Invalid slices file {path}: {e}") from None
    return slices_from_file(model)
