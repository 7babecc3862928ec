"""
Executable reference contracts used to synthesise transaction histories.

Each contract keeps its storage as records of state-variable valuations
(one record per session object) plus a free-form context for bookkeeping
that is not part of the observed state, such as id counters or ownership
maps. Functions enumerate their candidate argument bindings, check a guard
on the addressed record and apply an effect when it holds.
"""

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from core.errors import SpecMineError
from services.efsm import Fsm
from services.formula import ADDR_ZERO, Domain, Value
from services.slicer import SliceConfig
from services.trace_model import ContractSchema, FunctionSpec, ParamKind, ParamSpec

SAMPLE_INTS = (0, 1, 2, 3, 1_000_000)
SERVER = "0x5e4"
USERS = ("0xa1", "0xb2", "0xc3")
ADDRESSES = USERS + (SERVER,)
TIME_BASE = 1_600_000_000

Record = Dict[str, Value]
Args = Mapping[str, Value]


class UnknownFixture(SpecMineError):
    def __init__(self, name: str):
        super().__init__(f"Unknown fixture {name!r}; see `gen --list`", stage="gen")


@dataclass
class Deployment:
    """One deployed instance: per-object records and hidden bookkeeping."""

    schema: ContractSchema
    records: Dict[int, Record] = field(default_factory=dict)
    context: Dict[str, Any] = field(default_factory=dict)
    now: int = TIME_BASE

    def record(self, target: int) -> Record:
        return dict(self.records.get(target) or self.schema.zero_state())


def _single_record(args: Args, dep: Deployment) -> int:
    return 0


def _no_commit(args: Args, dep: Deployment) -> None:
    return None


@dataclass(frozen=True)
class ReferenceFunction:
    name: str
    choices: Callable[[Deployment], List[Dict[str, Value]]]
    guard: Callable[[Record, Args, Deployment], bool]
    effect: Callable[[Record, Args, Deployment], Record]
    target: Callable[[Args, Deployment], int] = _single_record
    commit: Callable[[Args, Deployment], None] = _no_commit


@dataclass(frozen=True)
class ReferenceContract:
    """
    A contract with concrete semantics and its event-level ground truth.

    classify maps a record to the ground-truth state it belongs to.
    """

    name: str
    schema: ContractSchema
    functions: Dict[str, ReferenceFunction]
    ground_truth: Fsm
    slice_config: SliceConfig
    classify: Callable[[Record], int]
    description: str = ""

    def deploy(self) -> Deployment:
        return Deployment(self.schema)

    def call(self, dep: Deployment, event: str, args: Args) -> Tuple[Record, Record, bool]:
        """Execute one call; returns (pre, post, succeeded) and updates the deployment on success."""
        fn = self.functions[event]
        target = fn.target(args, dep)
        pre = dep.record(target)
        if not fn.guard(pre, args, dep):
            return pre, dict(pre), False
        post = {**pre, **fn.effect(pre, args, dep)}
        dep.records[target] = post
        fn.commit(args, dep)
        return pre, post, True


def _int(name: str, kind: ParamKind, unit: Optional[str] = None) -> ParamSpec:
    return ParamSpec(name, kind, Domain.INT, unit)


def _addr(name: str, kind: ParamKind) -> ParamSpec:
    return ParamSpec(name, kind, Domain.ADDR)


def _product(**columns) -> List[Dict[str, Value]]:
    rows: List[Dict[str, Value]] = [{}]
    for name, values in columns.items():
        rows = [{**row, name: value} for row in rows for value in values]
    return rows


INSTANCE = _int("instance", ParamKind.ENV, "instance")
SENDER = _addr("msg.sender", ParamKind.ENV)
VALUE = _int("msg.value", ParamKind.ENV, "wei")


# GameChannel

ENDED, ACTIVE, USER_INITIATED_END, SERVER_INITIATED_END = 0, 1, 2, 3


def gamechannel() -> ReferenceContract:
    """Casino game channel: a server and users racing to close games."""
    game_id = _int("gameId", ParamKind.INPUT, "id")
    round_arg = _int("_roundId", ParamKind.INPUT, "round")
    schema = ContractSchema(
        state_vars=(
            _int("status", ParamKind.STATE),
            _int("stake", ParamKind.STATE, "wei"),
            _int("roundId", ParamKind.STATE, "round"),
            _int("endInitiatedTime", ParamKind.STATE, "time"),
        ),
        functions=(
            FunctionSpec("createGame"),
            FunctionSpec("serverEndGame", (game_id,)),
            FunctionSpec("serverForceGameEnd", (game_id,)),
            FunctionSpec("userCancelActiveGame", (game_id,)),
            FunctionSpec("serverCancelActiveGame", (game_id,)),
            FunctionSpec("serverEndGameConflict", (round_arg, game_id)),
            FunctionSpec("userEndGameConflict", (round_arg, game_id)),
        ),
        env=(
            SENDER,
            VALUE,
            _int("block.timestamp", ParamKind.ENV, "time"),
            _addr("server", ParamKind.ENV),
            _int("gameIdCntr", ParamKind.ENV, "id"),
            INSTANCE,
        ),
    )

    def counter(dep: Deployment) -> int:
        return dep.context.setdefault("gameIdCntr", 0)

    def env(dep: Deployment) -> Dict[str, Value]:
        return {"block.timestamp": dep.now, "server": SERVER}

    def create_choices(dep: Deployment) -> List[Dict[str, Value]]:
        base = {**env(dep), "gameIdCntr": counter(dep)}
        return [{**base, **row} for row in _product(**{"msg.sender": ADDRESSES, "msg.value": SAMPLE_INTS})]

    def game_choices(dep: Deployment) -> List[Dict[str, Value]]:
        ids = range(counter(dep) + 1)
        return [{**env(dep), **row} for row in _product(**{"gameId": ids, "msg.sender": ADDRESSES})]

    def conflict_choices(dep: Deployment) -> List[Dict[str, Value]]:
        return [{**row, "_roundId": r} for row in game_choices(dep) for r in SAMPLE_INTS]

    def by_server(args: Args) -> bool:
        return args["msg.sender"] == args["server"]

    def by_owner(args: Args, dep: Deployment) -> bool:
        return dep.context.get("userGameId", {}).get(args["msg.sender"]) == args["gameId"]

    def create_commit(args: Args, dep: Deployment) -> None:
        dep.context["gameIdCntr"] = args["gameIdCntr"] + 1
        dep.context.setdefault("userGameId", {})[args["msg.sender"]] = args["gameIdCntr"]

    def addressed(args: Args, dep: Deployment) -> int:
        return args["gameId"]

    def cancel_guard(mine: int, other: int, check: Callable[[Args, Deployment], bool]):
        def guard(pre: Record, args: Args, dep: Deployment) -> bool:
            return check(args, dep) and (
                pre["status"] == ACTIVE or (pre["status"] == other and pre["roundId"] == 0)
            )

        def effect(pre: Record, args: Args, dep: Deployment) -> Record:
            if pre["status"] == ACTIVE:
                return {"status": mine, "endInitiatedTime": args["block.timestamp"]}
            return {"status": ENDED}

        return guard, effect

    def conflict_guard(mine: int, other: int, check: Callable[[Args, Deployment], bool]):
        def guard(pre: Record, args: Args, dep: Deployment) -> bool:
            r = args["_roundId"]
            return check(args, dep) and r > 0 and (
                (pre["status"] == other and pre["roundId"] <= r) or pre["status"] == ACTIVE
            )

        def effect(pre: Record, args: Args, dep: Deployment) -> Record:
            if pre["status"] == other and pre["roundId"] == args["_roundId"]:
                return {"status": ENDED}
            return {"status": mine, "endInitiatedTime": args["block.timestamp"], "roundId": args["_roundId"]}

        return guard, effect

    server_check = lambda args, dep: by_server(args)  # noqa: E731
    user_cancel = cancel_guard(USER_INITIATED_END, SERVER_INITIATED_END, by_owner)
    server_cancel = cancel_guard(SERVER_INITIATED_END, USER_INITIATED_END, server_check)
    user_conflict = conflict_guard(USER_INITIATED_END, SERVER_INITIATED_END, by_owner)
    server_conflict = conflict_guard(SERVER_INITIATED_END, USER_INITIATED_END, server_check)

    functions = {
        "createGame": ReferenceFunction(
            "createGame", create_choices,
            guard=lambda pre, args, dep: args["msg.value"] > 0,
            effect=lambda pre, args, dep: {"status": ACTIVE, "stake": args["msg.value"]},
            target=lambda args, dep: args["gameIdCntr"],
            commit=create_commit,
        ),
        "serverEndGame": ReferenceFunction(
            "serverEndGame", game_choices,
            guard=lambda pre, args, dep: by_server(args) and pre["status"] == ACTIVE,
            effect=lambda pre, args, dep: {"status": ENDED},
            target=addressed,
        ),
        "serverForceGameEnd": ReferenceFunction(
            "serverForceGameEnd", game_choices,
            guard=lambda pre, args, dep: by_server(args) and pre["status"] == SERVER_INITIATED_END,
            effect=lambda pre, args, dep: {"status": ENDED},
            target=addressed,
        ),
        "userCancelActiveGame": ReferenceFunction(
            "userCancelActiveGame", game_choices, *user_cancel, target=addressed
        ),
        "serverCancelActiveGame": ReferenceFunction(
            "serverCancelActiveGame", game_choices, *server_cancel, target=addressed
        ),
        "serverEndGameConflict": ReferenceFunction(
            "serverEndGameConflict", conflict_choices, *server_conflict, target=addressed
        ),
        "userEndGameConflict": ReferenceFunction(
            "userEndGameConflict", conflict_choices, *user_conflict, target=addressed
        ),
    }

    # q0 genesis, 1 active, 2/3 user/server-initiated end at round 0,
    # 4/5 the same after a conflict round, 6 ended
    edges = (
        (0, "createGame", 1),
        (1, "serverEndGame", 6),
        (3, "serverForceGameEnd", 6), (5, "serverForceGameEnd", 6),
        (1, "userCancelActiveGame", 2), (3, "userCancelActiveGame", 6),
        (1, "serverCancelActiveGame", 3), (2, "serverCancelActiveGame", 6),
        (4, "serverEndGameConflict", 6), (1, "serverEndGameConflict", 5),
        (2, "serverEndGameConflict", 5), (4, "serverEndGameConflict", 5),
        (5, "userEndGameConflict", 6), (1, "userEndGameConflict", 4),
        (3, "userEndGameConflict", 4), (5, "userEndGameConflict", 4),
    )
    labels = {
        0: "genesis", 1: "active", 2: "user-end r=0", 3: "server-end r=0",
        4: "user-end r>0", 5: "server-end r>0", 6: "ended",
    }

    def classify(record: Record) -> int:
        status = record["status"]
        if status == ENDED:
            return 6 if record["stake"] > 0 else 0
        if status == ACTIVE:
            return 1
        later = record["roundId"] > 0
        if status == USER_INITIATED_END:
            return 4 if later else 2
        return 5 if later else 3

    return ReferenceContract(
        name="gamechannel",
        schema=schema,
        functions=functions,
        ground_truth=Fsm(states=tuple(range(7)), initial=0, edges=edges, labels=labels),
        slice_config=SliceConfig(
            binding_params=("instance", "gameId"),
            key_source={"createGame": "gameIdCntr"},
            source="gamechannel fixture",
        ),
        classify=classify,
        description="Game channel with server/user initiated endings and conflict rounds (7 states, 16 transitions)",
    )


# Per-instance fixtures

def _per_instance(name: str) -> SliceConfig:
    return SliceConfig(binding_params=("instance",), source=f"{name} fixture")


def _senders(dep: Deployment) -> List[Dict[str, Value]]:
    return [{"msg.sender": a} for a in ADDRESSES]


def rps() -> ReferenceContract:
    """Rock-paper-scissors: create, join, two reveals; the creator may cancel before anyone joins."""
    move = _int("move", ParamKind.INPUT, "move")
    schema = ContractSchema(
        state_vars=(
            _int("stage", ParamKind.STATE),
            _int("bet", ParamKind.STATE, "wei"),
            _addr("player1", ParamKind.STATE),
            _addr("player2", ParamKind.STATE),
        ),
        functions=(
            FunctionSpec("createGame"),
            FunctionSpec("joinGame"),
            FunctionSpec("reveal", (move,)),
            FunctionSpec("cancelGame"),
        ),
        env=(SENDER, VALUE, INSTANCE),
    )
    reset = {"stage": 0, "bet": 0, "player1": ADDR_ZERO, "player2": ADDR_ZERO}

    def paying(dep: Deployment) -> List[Dict[str, Value]]:
        return _product(**{"msg.sender": ADDRESSES, "msg.value": SAMPLE_INTS})

    def moves(dep: Deployment) -> List[Dict[str, Value]]:
        return _product(**{"msg.sender": ADDRESSES, "move": SAMPLE_INTS})

    def can_reveal(pre: Record, args: Args) -> bool:
        if not 1 <= args["move"] <= 3:
            return False
        if pre["stage"] == 2:
            return args["msg.sender"] == pre["player1"]
        return pre["stage"] == 3 and args["msg.sender"] == pre["player2"]

    functions = {
        "createGame": ReferenceFunction(
            "createGame", paying,
            guard=lambda pre, args, dep: pre["stage"] == 0 and args["msg.value"] > 0,
            effect=lambda pre, args, dep: {"stage": 1, "bet": args["msg.value"], "player1": args["msg.sender"]},
        ),
        "joinGame": ReferenceFunction(
            "joinGame", paying,
            guard=lambda pre, args, dep: (
                pre["stage"] == 1 and args["msg.sender"] != pre["player1"] and args["msg.value"] == pre["bet"]
            ),
            effect=lambda pre, args, dep: {"stage": 2, "player2": args["msg.sender"]},
        ),
        "reveal": ReferenceFunction(
            "reveal", moves,
            guard=lambda pre, args, dep: can_reveal(pre, args),
            effect=lambda pre, args, dep: {"stage": 3} if pre["stage"] == 2 else dict(reset),
        ),
        "cancelGame": ReferenceFunction(
            "cancelGame", _senders,
            guard=lambda pre, args, dep: pre["stage"] == 1 and args["msg.sender"] == pre["player1"],
            effect=lambda pre, args, dep: dict(reset),
        ),
    }
    edges = (
        (0, "createGame", 1), (1, "joinGame", 2), (2, "reveal", 3), (3, "reveal", 0), (1, "cancelGame", 0),
    )
    return ReferenceContract(
        name="rps",
        schema=schema,
        functions=functions,
        ground_truth=Fsm(
            states=(0, 1, 2, 3), initial=0, edges=edges,
            labels={0: "idle", 1: "created", 2: "joined", 3: "revealed"},
        ),
        slice_config=_per_instance("rps"),
        classify=lambda record: record["stage"],
        description="Two-player commit/reveal game (4 states, 5 transitions)",
    )


def hello() -> ReferenceContract:
    """Request/response workflow."""
    message = _int("message", ParamKind.INPUT, "message")
    schema = ContractSchema(
        state_vars=(
            _int("state", ParamKind.STATE),
            _int("request", ParamKind.STATE, "message"),
            _int("response", ParamKind.STATE, "message"),
        ),
        functions=(FunctionSpec("sendRequest", (message,)), FunctionSpec("sendResponse", (message,))),
        env=(SENDER, INSTANCE),
    )

    def messages(dep: Deployment) -> List[Dict[str, Value]]:
        return _product(**{"msg.sender": ADDRESSES, "message": SAMPLE_INTS})

    functions = {
        "sendRequest": ReferenceFunction(
            "sendRequest", messages,
            guard=lambda pre, args, dep: pre["state"] != 1 and args["message"] > 0,
            effect=lambda pre, args, dep: {"state": 1, "request": args["message"]},
        ),
        "sendResponse": ReferenceFunction(
            "sendResponse", messages,
            guard=lambda pre, args, dep: pre["state"] == 1 and args["message"] > 0,
            effect=lambda pre, args, dep: {"state": 2, "response": args["message"]},
        ),
    }
    return ReferenceContract(
        name="hello",
        schema=schema,
        functions=functions,
        ground_truth=Fsm(
            states=(0, 1, 2), initial=0,
            edges=((0, "sendRequest", 1), (1, "sendResponse", 2), (2, "sendRequest", 1)),
            labels={0: "genesis", 1: "request", 2: "respond"},
        ),
        slice_config=_per_instance("hello"),
        classify=lambda record: record["state"],
        description="Request/response workflow (3 states, 3 transitions)",
    )


def marketplace() -> ReferenceContract:
    """Single-item marketplace: list, offer, then reject or accept."""
    price = _int("price", ParamKind.INPUT, "wei")
    offer = _int("offer", ParamKind.INPUT, "wei")
    schema = ContractSchema(
        state_vars=(
            _int("state", ParamKind.STATE),
            _int("askingPrice", ParamKind.STATE, "wei"),
            _int("offerPrice", ParamKind.STATE, "wei"),
            _addr("owner", ParamKind.STATE),
            _addr("buyer", ParamKind.STATE),
        ),
        functions=(
            FunctionSpec("listItem", (price,)),
            FunctionSpec("makeOffer", (offer,)),
            FunctionSpec("rejectOffer"),
            FunctionSpec("acceptOffer"),
        ),
        env=(SENDER, INSTANCE),
    )

    def priced(name: str) -> Callable[[Deployment], List[Dict[str, Value]]]:
        return lambda dep: _product(**{"msg.sender": ADDRESSES, name: SAMPLE_INTS})

    def owner_acts(state: int) -> Callable[[Record, Args, Deployment], bool]:
        return lambda pre, args, dep: pre["state"] == state and args["msg.sender"] == pre["owner"]

    functions = {
        "listItem": ReferenceFunction(
            "listItem", priced("price"),
            guard=lambda pre, args, dep: pre["state"] == 0 and args["price"] > 0,
            effect=lambda pre, args, dep: {"state": 1, "askingPrice": args["price"], "owner": args["msg.sender"]},
        ),
        "makeOffer": ReferenceFunction(
            "makeOffer", priced("offer"),
            guard=lambda pre, args, dep: (
                pre["state"] == 1 and args["offer"] > 0 and args["msg.sender"] != pre["owner"]
            ),
            effect=lambda pre, args, dep: {"state": 2, "offerPrice": args["offer"], "buyer": args["msg.sender"]},
        ),
        "rejectOffer": ReferenceFunction(
            "rejectOffer", _senders,
            guard=owner_acts(2),
            effect=lambda pre, args, dep: {"state": 1, "offerPrice": 0, "buyer": ADDR_ZERO},
        ),
        "acceptOffer": ReferenceFunction(
            "acceptOffer", _senders,
            guard=owner_acts(2),
            effect=lambda pre, args, dep: {"state": 3},
        ),
    }
    return ReferenceContract(
        name="marketplace",
        schema=schema,
        functions=functions,
        ground_truth=Fsm(
            states=(0, 1, 2, 3), initial=0,
            edges=((0, "listItem", 1), (1, "makeOffer", 2), (2, "rejectOffer", 1), (2, "acceptOffer", 3)),
            labels={0: "genesis", 1: "available", 2: "offer placed", 3: "accepted"},
        ),
        slice_config=_per_instance("marketplace"),
        classify=lambda record: record["state"],
        description="Offer/reject/accept marketplace (4 states, 4 transitions)",
    )


def phase_machine(seed: int, max_phases: int = 5, max_events: int = 4) -> ReferenceContract:
    """
    Random phase machine: each event moves between phases on a random subset
    of them and records itself in `last`.
    """
    rng = random.Random(seed)
    n_phases = rng.randint(2, max_phases)
    n_events = rng.randint(1, max_events)
    events = [f"f{index}" for index in range(n_events)]

    moves: Dict[str, Dict[int, int]] = {}
    for index, event in enumerate(events):
        sources = [p for p in range(n_phases) if rng.random() < 0.5]
        if index == 0 and 0 not in sources:
            sources.append(0)
        moves[event] = {p: rng.randrange(n_phases) for p in sorted(sources)}

    reachable = {0}
    frontier = [0]
    while frontier:
        phase = frontier.pop()
        for event in events:
            target = moves[event].get(phase)
            if target is not None and target not in reachable:
                reachable.add(target)
                frontier.append(target)
    edges = tuple(
        (phase, event, moves[event][phase])
        for phase in sorted(reachable) for event in events if phase in moves[event]
    )

    schema = ContractSchema(
        state_vars=(_int("phase", ParamKind.STATE), _int("last", ParamKind.STATE, "event")),
        functions=tuple(FunctionSpec(event) for event in events),
        env=(INSTANCE,),
    )

    def make(index: int, event: str) -> ReferenceFunction:
        table = moves[event]
        return ReferenceFunction(
            event,
            choices=lambda dep: [{}],
            guard=lambda pre, args, dep: pre["phase"] in table,
            effect=lambda pre, args, dep: {"phase": table[pre["phase"]], "last": index + 1},
        )

    return ReferenceContract(
        name=f"random:{seed}",
        schema=schema,
        functions={event: make(index, event) for index, event in enumerate(events)},
        ground_truth=Fsm(states=tuple(sorted(reachable)), initial=0, edges=edges),
        slice_config=_per_instance(f"random:{seed}"),
        classify=lambda record: record["phase"],
        description=f"Random phase machine ({len(reachable)} phases, {n_events} events)",
    )


_BUILDERS: Dict[str, Callable[[], ReferenceContract]] = {
    "gamechannel": gamechannel,
    "rps": rps,
    "hello": hello,
    "marketplace": marketplace,
}


def builtin_fixtures() -> Dict[str, ReferenceContract]:
    """Named reference contracts, freshly built."""
    return {name: build() for name, build in _BUILDERS.items()}


def get_fixture(name: str) -> ReferenceContract:
    """Fixture by name; `random:<seed>` builds a random phase machine."""
    if name.startswith("random:"):
        try:
            seed = int(name.split(":", 1)[1])
        except ValueError:
            raise UnknownFixture(name) from None
        return phase_machine(seed)
    build = _BUILDERS.get(name)
    if build is None:
        raise UnknownFixture(name)
    return build()


def fixture_names() -> List[str]:
    return sorted(_BUILDERS) + ["random:<seed>"]
