"""
Synthetic transaction histories from reference contracts.

Every deployment instance starts from the all-zero state and receives a
stream of random calls; calls whose guard fails are recorded as reverted.
Instances draw from their own generator seeded from the master seed, so a
history is reproducible instance by instance.
"""

import random
from dataclasses import dataclass
from typing import Dict, List, Tuple

from core.errors import SpecMineError
from core.logger import log
from services.formula import Value, is_addr_literal, normalize_addr
from services.reference_contracts import (
    TIME_BASE,
    Deployment,
    ReferenceContract,
    UnknownFixture,
    builtin_fixtures,
    fixture_names,
    get_fixture,
)
from services.trace_model import ObservationStep, StepStatus, Trace

__all__ = [
    "GenProtocol",
    "ReferenceContract",
    "UnknownFixture",
    "builtin_fixtures",
    "enumerate_sessions",
    "fixture_names",
    "get_fixture",
    "simulate",
    "splitmix64",
]

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class GenProtocol:
    instances: int = 100
    txs_per_instance: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.instances < 1 or self.txs_per_instance < 1:
            raise SpecMineError("instances and txs_per_instance must be positive", stage="gen")


def splitmix64(value: int) -> int:
    """One splitmix64 output for the given state."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def instance_seed(master: int, instance: int) -> int:
    return splitmix64((master & _MASK) ^ splitmix64(instance))


def _normalized(args: Dict[str, Value]) -> Dict[str, Value]:
    return {name: normalize_addr(v) if is_addr_literal(v) else v for name, v in args.items()}


def _run_instance(rc: ReferenceContract, instance: int, txs: int, seed: int, first_seq: int) -> List[ObservationStep]:
    rng = random.Random(seed)
    dep = rc.deploy()
    events = sorted(rc.functions)
    steps = []
    for tx in range(txs):
        dep.now = TIME_BASE + tx + 1
        event = rng.choice(events)
        choices = rc.functions[event].choices(dep)
        args = _normalized({**rng.choice(choices), "instance": instance})
        pre, post, ok = rc.call(dep, event, args)
        status = StepStatus.SUCCESS if ok else StepStatus.REVERTED
        steps.append(ObservationStep(first_seq + tx, event, args, pre, post, status))
    return steps


def simulate(rc: ReferenceContract, proto: GenProtocol) -> Trace:
    """Random black-box testing of every instance, concatenated in instance order."""
    steps: List[ObservationStep] = []
    for instance in range(proto.instances):
        seed = instance_seed(proto.seed, instance)
        steps.extend(_run_instance(rc, instance, proto.txs_per_instance, seed, len(steps)))
    succeeded = sum(step.succeeded for step in steps)
    log.info(
        f"Simulated {rc.name}: {proto.instances} instances, {len(steps)} calls, "
        f"{succeeded} succeeded, {len(steps) - succeeded} reverted"
    )
    return Trace(tuple(steps), rc.schema)


def enumerate_sessions(rc: ReferenceContract, max_len: int) -> Trace:
    """
    Every maximal session of successful calls up to max_len, one instance each.

    A session ends when it reaches max_len calls or no candidate call
    succeeds. Only contracts sliced by instance alone are supported.
    """
    if tuple(rc.slice_config.binding_params) != ("instance",):
        raise SpecMineError(
            f"Exhaustive sessions need a contract sliced by instance, {rc.name} is sliced by "
            f"{list(rc.slice_config.binding_params)}",
            stage="gen",
        )

    sessions: List[List[Tuple[str, Dict[str, Value], Dict[str, Value], Dict[str, Value]]]] = []

    def explore(calls: List[Tuple[str, Dict[str, Value]]]) -> None:
        if len(calls) < max_len:
            extended = False
            for event in sorted(rc.functions):
                dep = _replay(rc, calls)
                for choice in rc.functions[event].choices(dep):
                    probe = _replay(rc, calls)
                    probe.now = TIME_BASE + len(calls) + 1
                    _, _, ok = rc.call(probe, event, _normalized(choice))
                    if ok:
                        extended = True
                        explore(calls + [(event, _normalized(choice))])
            if extended:
                return
        dep = rc.deploy()
        session = []
        for index, (event, args) in enumerate(calls):
            dep.now = TIME_BASE + index + 1
            pre, post, _ = rc.call(dep, event, args)
            session.append((event, args, pre, post))
        sessions.append(session)

    explore([])

    steps: List[ObservationStep] = []
    for instance, session in enumerate(sessions):
        for event, args, pre, post in session:
            steps.append(ObservationStep(len(steps), event, {**args, "instance": instance}, pre, post))
    log.info(f"Enumerated {len(sessions)} sessions of {rc.name} up to length {max_len}")
    return Trace(tuple(steps), rc.schema)


def _replay(rc: ReferenceContract, calls: List[Tuple[str, Dict[str, Value]]]) -> Deployment:
    dep = rc.deploy()
    for index, (event, args) in enumerate(calls):
        dep.now = TIME_BASE + index + 1
        rc.call(dep, event, args)
    return dep
