"""
Passive automata learning baselines over plain event words.

k-tail starts from the prefix-tree acceptor of the training words and merges
states whose accepted futures of length at most k coincide, folding the
successors of merged states so the machine stays deterministic.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Sequence, Set, Tuple

from core.errors import SpecMineError
from core.logger import log
from services.efsm import Fsm

Word = Tuple[str, ...]


@dataclass
class Pta:
    """Trie of the training words; node 0 is the root, accepting nodes end a word."""

    children: Dict[int, Dict[str, int]] = field(default_factory=lambda: {0: {}})
    accepting: Set[int] = field(default_factory=set)
    root: int = 0

    @property
    def nodes(self) -> List[int]:
        return sorted(self.children)

    def __len__(self) -> int:
        return len(self.children)

    def to_fsm(self) -> Fsm:
        return _canonical(self.root, self.children)


def build_pta(words: Sequence[Sequence[str]]) -> Pta:
    pta = Pta()
    for word in words:
        node = pta.root
        for event in word:
            nxt = pta.children[node].get(event)
            if nxt is None:
                nxt = len(pta.children)
                pta.children[node][event] = nxt
                pta.children[nxt] = {}
            node = nxt
        pta.accepting.add(node)
    return pta


def _bfs_order(root: int, delta: Dict[int, Dict[str, int]]) -> List[int]:
    order = [root]
    seen = {root}
    queue = deque([root])
    while queue:
        state = queue.popleft()
        for event in sorted(delta[state]):
            nxt = delta[state][event]
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return order


def _canonical(root: int, delta: Dict[int, Dict[str, int]]) -> Fsm:
    """Renumber states 0..n-1 in BFS order over sorted labels."""
    order = _bfs_order(root, delta)
    ids = {state: index for index, state in enumerate(order)}
    edges = tuple(
        (ids[state], event, ids[nxt])
        for state in order
        for event, nxt in delta[state].items()
    )
    return Fsm(states=tuple(range(len(order))), initial=0, edges=edges)


class _Machine:
    """Deterministic machine under merging; merged states are folded away."""

    def __init__(self, pta: Pta):
        self.root = pta.root
        self.delta = {state: dict(edges) for state, edges in pta.children.items()}
        self.accepting = set(pta.accepting)
        self.parent: Dict[int, int] = {}

    def find(self, state: int) -> int:
        while state in self.parent:
            state = self.parent[state]
        return state

    def tail(self, state: int, k: int) -> FrozenSet[Word]:
        """Accepted strings of length at most k read from state."""
        found = set()
        frontier = [(state, ())]
        for depth in range(k + 1):
            nxt = []
            for current, prefix in frontier:
                if current in self.accepting:
                    found.add(prefix)
                if depth < k:
                    for event, target in self.delta[current].items():
                        nxt.append((target, prefix + (event,)))
            frontier = nxt
        return frozenset(found)

    def merge(self, keep: int, drop: int) -> None:
        pending = [(keep, drop)]
        while pending:
            left, right = (self.find(s) for s in pending.pop())
            if left == right:
                continue
            if right == self.root:
                left, right = right, left
            self.parent[right] = left
            if right in self.accepting:
                self.accepting.add(left)
            for event, target in self.delta.pop(right).items():
                existing = self.delta[left].get(event)
                if existing is None:
                    self.delta[left][event] = target
                else:
                    pending.append((existing, target))
        for edges in self.delta.values():
            for event, target in edges.items():
                edges[event] = self.find(target)
        self.accepting = {state for state in self.accepting if state in self.delta}


def ktail(words: Sequence[Sequence[str]], k: int) -> Fsm:
    """
    Iterated k-tail merging to fixpoint.

    At each round states are visited in BFS order; the first state whose tail
    equals that of an earlier state is merged into the earliest such state.
    Tails are recomputed on the partially merged machine after every merge.

    Args:
        words: Training words
        k: Tail length, at least 1

    Returns:
        Deterministic automaton with canonical state numbering
    """
    if k < 1:
        raise SpecMineError(f"k-tail needs k >= 1, got {k}", stage="ktail")
    pta = build_pta(words)
    machine = _Machine(pta)
    merges = 0
    while True:
        first_seen: Dict[FrozenSet[Word], int] = {}
        pair = None
        for state in _bfs_order(machine.root, machine.delta):
            tail = machine.tail(state, k)
            if tail in first_seen:
                pair = (first_seen[tail], state)
                break
            first_seen[tail] = state
        if pair is None:
            break
        machine.merge(*pair)
        merges += 1

    fsm = _canonical(machine.root, machine.delta)
    log.info(f"{k}-tail: {len(pta)} PTA nodes merged into {len(fsm.states)} states ({merges} merges)")
    return fsm
