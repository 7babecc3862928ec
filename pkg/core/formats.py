"""Pydantic models for every file the toolkit reads or writes."""

from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

# JSON booleans are accepted and stored as 0/1 by the trace loader
JsonValue = Union[bool, int, str]


class ParamEntry(BaseModel):
    """One declared parameter: state variable, function input or environment symbol."""

    model_config = ConfigDict(extra="forbid")

    name: str
    type: Literal["int", "addr", "bool"] = "int"
    unit: Optional[str] = None


class FunctionEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    inputs: List[ParamEntry] = Field(default_factory=list)


class SchemaFile(BaseModel):
    """Contract schema file."""

    model_config = ConfigDict(extra="forbid")

    state_vars: List[ParamEntry]
    functions: List[FunctionEntry]
    env: List[ParamEntry] = Field(default_factory=list)


class SliceConfigFile(BaseModel):
    """Binding-parameter configuration for trace slicing."""

    model_config = ConfigDict(extra="forbid")

    binding_params: List[str] = Field(min_length=1)
    key_source: Dict[str, str] = Field(default_factory=dict)
    session_start: List[str] = Field(default_factory=list)
    drop_unbound: bool = True
    source: str = ""


class TraceLine(BaseModel):
    """One line of a JSONL history."""

    model_config = ConfigDict(extra="forbid")

    seq: int = Field(ge=0)
    event: str
    args: Dict[str, JsonValue] = Field(default_factory=dict)
    pre: Dict[str, JsonValue]
    post: Dict[str, JsonValue]
    status: Literal["success", "reverted"] = "success"


class SliceEntry(BaseModel):
    key: Dict[str, JsonValue]
    run: int = 0
    steps: List[TraceLine]


class SlicesFile(BaseModel):
    """Output of the slice stage, input of infer and mine."""

    manifest: Optional[str] = None
    contract: SchemaFile
    config: SliceConfigFile
    slices: List[SliceEntry]


class ConditionsEntry(BaseModel):
    pre: str
    post: str
    support: int = Field(ge=1)


class ConditionsFile(BaseModel):
    """Conditions report: inferred guard and update per event."""

    manifest: Optional[str] = None
    contract: SchemaFile
    split_on: List[str] = Field(default_factory=list)
    conditions: Dict[str, ConditionsEntry]
    pool: List[str] = Field(default_factory=list)


class StateEntry(BaseModel):
    id: int
    formula: Optional[str] = None
    label: Optional[str] = None
    initial: bool = False
    parent: Optional[int] = None
    origin: str = ""


class TransitionEntry(BaseModel):
    src: int
    event: str
    dst: int
    support: int = 0


class ModelFile(BaseModel):
    """
    A mined or reference automaton.

    kind "efsm" carries state formulas, per-event conditions and the contract
    schema; kind "fsm" is a plain event-labelled automaton.
    """

    kind: Literal["efsm", "fsm"]
    manifest: Optional[str] = None
    contract: Optional[SchemaFile] = None
    alphabet: List[str]
    states: List[StateEntry]
    transitions: List[TransitionEntry]
    conditions: Dict[str, ConditionsEntry] = Field(default_factory=dict)
    next_id: int = 0


class ActionEntry(BaseModel):
    kind: str
    state: Optional[int] = None
    event: Optional[str] = None
    detail: str = ""


class BudgetEntry(BaseModel):
    n_concrete_states: int
    n_slices: int
    n_functions: int
    n_hat: int
    actions_used: int
    bound: int


class MiningReportFile(BaseModel):
    manifest: Optional[str] = None
    actions: List[ActionEntry]
    rmpath_count: int
    budget: BudgetEntry
    states: List[StateEntry]
    transitions: List[TransitionEntry]
    support: Dict[str, int]
    n_concrete_states: int
    rejected_slices: List[str] = Field(default_factory=list)
    truncated: bool = False


class ScoreReportFile(BaseModel):
    manifest: Optional[str] = None
    precision: float
    recall: float
    f1: float
    acc: Optional[float] = None
    sentences_used: int
    exact: Dict[str, str] = Field(default_factory=dict)


class RunManifestFile(BaseModel):
    """Reproducibility record; the hash excludes paths and timings."""

    hash: str
    command: str
    version: str
    seed: int
    inputs: Dict[str, str] = Field(default_factory=dict)
    params: Dict[str, str] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
