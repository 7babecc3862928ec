"""Contract schemas, observation steps and JSONL histories."""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from core.errors import SpecMineError
from core.formats import FunctionEntry, ParamEntry, SchemaFile, TraceLine
from core.logger import log
from services.formula import Domain, Value, is_addr_literal, is_identifier, normalize_addr, zero_value


class TraceFormatError(SpecMineError):
    """A history line cannot be turned into an observation step."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        location = f"line {line_no}" if line_no is not None else None
        super().__init__(message, stage="trace", location=location)
        self.line_no = line_no


class MalformedLine(TraceFormatError):
    pass


class UnknownEvent(TraceFormatError):
    def __init__(self, name: str, line_no: Optional[int] = None):
        super().__init__(f"Unknown event: {name}", line_no)
        self.name = name


class MissingStateVar(TraceFormatError):
    def __init__(self, param: str, line_no: Optional[int] = None):
        super().__init__(f"State variable {param} is not bound", line_no)
        self.param = param


class SchemaError(SpecMineError):
    """The contract schema is inconsistent."""

    def __init__(self, message: str):
        super().__init__(message, stage="schema")


class ParamKind(str, Enum):
    INPUT = "input"
    STATE = "state"
    ENV = "env"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: ParamKind
    domain: Domain = Domain.INT
    unit: Optional[str] = None


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    inputs: Tuple[ParamSpec, ...] = ()


@dataclass(frozen=True)
class ContractSchema:
    """State variables, interface functions and environment symbols of a contract."""

    state_vars: Tuple[ParamSpec, ...]
    functions: Tuple[FunctionSpec, ...]
    env: Tuple[ParamSpec, ...] = ()

    def __post_init__(self):
        names = [fn.name for fn in self.functions]
        if len(set(names)) != len(names):
            raise SchemaError("Function names must be unique")
        seen: Dict[str, ParamSpec] = {}
        for spec in self.all_params():
            other = seen.setdefault(spec.name, spec)
            if other is spec:
                continue
            if other.kind != spec.kind or other.domain != spec.domain:
                raise SchemaError(f"Parameter {spec.name} is declared twice with different kinds or types")
        for spec in self.all_params():
            if is_addr_literal(spec.name):
                raise SchemaError(f"Parameter name {spec.name} looks like an address literal")
            if not is_identifier(spec.name):
                raise SchemaError(f"Parameter name {spec.name!r} cannot be written in a formula")

    def all_params(self) -> Iterable[ParamSpec]:
        yield from self.state_vars
        yield from self.env
        for fn in self.functions:
            yield from fn.inputs

    @property
    def state_names(self) -> Tuple[str, ...]:
        return tuple(spec.name for spec in self.state_vars)

    @property
    def function_names(self) -> Tuple[str, ...]:
        return tuple(fn.name for fn in self.functions)

    def function(self, name: str) -> Optional[FunctionSpec]:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def param(self, name: str) -> Optional[ParamSpec]:
        for spec in self.all_params():
            if spec.name == name:
                return spec
        return None

    def domains(self) -> Dict[str, Domain]:
        return {spec.name: spec.domain for spec in self.all_params()}

    def units(self) -> Dict[str, Optional[str]]:
        return {spec.name: spec.unit for spec in self.all_params()}

    def zero_state(self) -> Dict[str, Value]:
        """Genesis valuation: every state variable at its zero value."""
        return {spec.name: zero_value(spec.domain) for spec in self.state_vars}

    def argument_names(self, event: str) -> Tuple[str, ...]:
        """Inputs of the event followed by the environment symbols."""
        fn = self.function(event)
        inputs = tuple(spec.name for spec in fn.inputs) if fn else ()
        return inputs + tuple(spec.name for spec in self.env)


class StepStatus(str, Enum):
    SUCCESS = "success"
    REVERTED = "reverted"


@dataclass(frozen=True)
class ObservationStep:
    """One transaction: event, its argument binding and the state around it."""

    seq_no: int
    event: str
    args: Mapping[str, Value]
    pre_state: Mapping[str, Value]
    post_state: Mapping[str, Value]
    status: StepStatus = StepStatus.SUCCESS

    @property
    def succeeded(self) -> bool:
        return self.status is StepStatus.SUCCESS

    def pre_valuation(self) -> Dict[str, Value]:
        return {**self.pre_state, **self.args}

    def post_valuation(self) -> Dict[str, Value]:
        return {**self.post_state, **self.args}


@dataclass(frozen=True)
class Trace:
    steps: Tuple[ObservationStep, ...]
    schema: ContractSchema = field(compare=False)

    def __len__(self) -> int:
        return len(self.steps)


# Schema files

def _param(entry: ParamEntry, kind: ParamKind) -> ParamSpec:
    return ParamSpec(entry.name, kind, Domain(entry.type), entry.unit)


def schema_from_file(model: SchemaFile) -> ContractSchema:
    return ContractSchema(
        state_vars=tuple(_param(entry, ParamKind.STATE) for entry in model.state_vars),
        functions=tuple(
            FunctionSpec(fn.name, tuple(_param(entry, ParamKind.INPUT) for entry in fn.inputs))
            for fn in model.functions
        ),
        env=tuple(_param(entry, ParamKind.ENV) for entry in model.env),
    )


def schema_to_file(schema: ContractSchema) -> SchemaFile:
    def entry(spec: ParamSpec) -> ParamEntry:
        return ParamEntry(name=spec.name, type=spec.domain.value, unit=spec.unit)

    return SchemaFile(
        state_vars=[entry(spec) for spec in schema.state_vars],
        functions=[
            FunctionEntry(name=fn.name, inputs=[entry(spec) for spec in fn.inputs])
            for fn in schema.functions
        ],
        env=[entry(spec) for spec in schema.env],
    )


def load_schema(path: Union[str, Path]) -> ContractSchema:
    """Read and validate a schema JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        model = SchemaFile.model_validate_json(text)
    except ValidationError as e:
        raise SchemaError(f"Invalid schema file {path}: {e}") from None
    return schema_from_file(model)


# Histories

def _coerce(value: object, spec: ParamSpec, where: str, line_no: Optional[int]) -> Value:
    if isinstance(value, bool):
        value = int(value)
    if spec.domain is Domain.ADDR:
        if not is_addr_literal(value):
            raise MalformedLine(f"{where}: {spec.name} expects an address, got {value!r}", line_no)
        return normalize_addr(value)
    if not isinstance(value, int):
        raise MalformedLine(f"{where}: {spec.name} expects an integer, got {value!r}", line_no)
    if spec.domain is Domain.BOOL and value not in (0, 1):
        raise MalformedLine(f"{where}: {spec.name} expects 0 or 1, got {value!r}", line_no)
    return value


def step_from_line(line: TraceLine, schema: ContractSchema, line_no: Optional[int] = None) -> ObservationStep:
    """Check a parsed line against the schema and build the step."""
    fn = schema.function(line.event)
    if fn is None:
        raise UnknownEvent(line.event, line_no)

    allowed = {spec.name: spec for spec in fn.inputs}
    allowed.update({spec.name: spec for spec in schema.env})
    args = {}
    for name, value in line.args.items():
        spec = allowed.get(name)
        if spec is None:
            raise MalformedLine(f"Parameter {name} is not declared for {line.event}", line_no)
        args[name] = _coerce(value, spec, "args", line_no)

    states = []
    for where, raw in (("pre", line.pre), ("post", line.post)):
        state = {}
        for spec in schema.state_vars:
            if spec.name not in raw:
                raise MissingStateVar(spec.name, line_no)
            state[spec.name] = _coerce(raw[spec.name], spec, where, line_no)
        extra = set(raw) - set(state)
        if extra:
            raise MalformedLine(f"{where}: undeclared state variables {sorted(extra)}", line_no)
        states.append(state)

    status = StepStatus(line.status)
    if status is StepStatus.REVERTED and states[0] != states[1]:
        raise MalformedLine("Reverted step changes the state", line_no)

    return ObservationStep(line.seq, line.event, args, states[0], states[1], status)


def step_to_line(step: ObservationStep) -> TraceLine:
    return TraceLine(
        seq=step.seq_no,
        event=step.event,
        args=dict(step.args),
        pre=dict(step.pre_state),
        post=dict(step.post_state),
        status=step.status.value,
    )


def parse_history(lines: Iterable[str], schema: ContractSchema) -> Trace:
    """
    Materialise a JSONL history, one observation step per non-blank line.

    Line numbers in diagnostics are 1-based.
    """
    steps: List[ObservationStep] = []
    last_seq = -1
    for line_no, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            line = TraceLine.model_validate(json.loads(raw))
        except json.JSONDecodeError as e:
            raise MalformedLine(f"Invalid JSON: {e.msg}", line_no) from None
        except ValidationError as e:
            raise MalformedLine(f"Invalid step: {e.errors()[0]['msg']} at {e.errors()[0]['loc']}", line_no) from None

        step = step_from_line(line, schema, line_no)
        if step.seq_no <= last_seq:
            raise MalformedLine(f"Sequence number {step.seq_no} does not increase", line_no)
        last_seq = step.seq_no
        steps.append(step)

    log.debug(f"Parsed {len(steps)} steps")
    return Trace(tuple(steps), schema)


def load_history(path: Union[str, Path], schema: ContractSchema) -> Trace:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return parse_history(handle, schema)
        except TraceFormatError as e:
            e.location = f"{path}:{e.line_no}" if e.line_no is not None else str(path)
            raise


def serialize_history(trace: Union[Trace, Sequence[ObservationStep]]) -> str:
    """JSONL text of the steps, one line each."""
    steps = trace.steps if isinstance(trace, Trace) else trace
    return "".join(step_to_line(step).model_dump_json() + "\n" for step in steps)


def project_nonparametric(trace: Union[Trace, Sequence[ObservationStep]]) -> List[str]:
    """Event names of the successful steps, bindings dropped."""
    steps = trace.steps if isinstance(trace, Trace) else trace
    return [step.event for step in steps if step.succeeded]
