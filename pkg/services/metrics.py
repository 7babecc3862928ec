"""
Model comparison by sentence generation, and acceptance of held-out sessions.
"""

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from core.config import settings
from core.errors import SpecMineError
from core.formats import ScoreReportFile
from core.logger import log
from services.efsm import Automaton, Fsm, accepts_word, as_fsm
from services.slicer import Slice

Sentence = Tuple[str, ...]


class EmptyTestSet(SpecMineError):
    def __init__(self):
        super().__init__("Accuracy needs at least one test session", stage="eval")


@dataclass(frozen=True)
class GenPolicy:
    max_sentences: int = field(default_factory=lambda: settings.SPECMINE_MAX_SENTENCES)
    min_transition_coverage: int = field(default_factory=lambda: settings.SPECMINE_MIN_COVERAGE)
    max_len_factor: int = field(default_factory=lambda: settings.SPECMINE_MAX_LEN_FACTOR)
    seed: int = field(default_factory=lambda: settings.SPECMINE_SEED)

    def __post_init__(self):
        for name in ("max_sentences", "min_transition_coverage", "max_len_factor"):
            if getattr(self, name) < 1:
                raise SpecMineError(f"{name} must be positive, got {getattr(self, name)}", stage="eval")


@dataclass(frozen=True)
class Score:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    acc: Optional[Fraction] = None
    sentences_used: int = 0

    def to_file(self, manifest: Optional[str] = None) -> ScoreReportFile:
        exact: Dict[str, str] = {
            "precision": str(self.precision),
            "recall": str(self.recall),
            "f1": str(self.f1),
        }
        if self.acc is not None:
            exact["acc"] = str(self.acc)
        return ScoreReportFile(
            manifest=manifest,
            precision=float(self.precision),
            recall=float(self.recall),
            f1=float(self.f1),
            acc=None if self.acc is None else float(self.acc),
            sentences_used=self.sentences_used,
            exact=exact,
        )


def f1_score(precision: Fraction, recall: Fraction) -> Fraction:
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def generate_sentences(model: Automaton, pol: GenPolicy, ground_truth_T: int) -> List[Sentence]:
    """
    Seeded random walks from the initial state.

    Every walk stops with probability 1/(average out-degree + 1) before each
    step, at a state without successors, or at max_len_factor * ground_truth_T
    events. Walking continues until pol.max_sentences walks were made or every
    reachable edge appears in at least pol.min_transition_coverage of them.
    Duplicates are kept.
    """
    fsm = as_fsm(model)
    if not fsm.states:
        raise SpecMineError("Cannot generate sentences from an empty model", stage="eval")
    rng = random.Random(pol.seed)
    max_len = pol.max_len_factor * ground_truth_T
    stop = 1 / (len(fsm.edges) / len(fsm.states) + 1)

    reachable = fsm.reachable_edges()
    unreachable = set(fsm.edges) - reachable
    if unreachable:
        log.warning(f"CoverageUnreachable: {len(unreachable)} edges cannot be reached from the initial state")

    outgoing = {state: fsm.outgoing(state) for state in fsm.states}
    coverage = {edge: 0 for edge in reachable}
    uncovered = {edge for edge, count in coverage.items() if count < pol.min_transition_coverage}
    sentences: List[Sentence] = []

    while len(sentences) < pol.max_sentences and (not sentences or uncovered):
        state = fsm.initial
        word: List[str] = []
        used: Set[Tuple[int, str, int]] = set()
        while len(word) < max_len and outgoing[state]:
            if rng.random() < stop:
                break
            edge = rng.choice(outgoing[state])
            used.add(edge)
            word.append(edge[1])
            state = edge[2]
        for edge in used:
            coverage[edge] += 1
            if coverage[edge] >= pol.min_transition_coverage:
                uncovered.discard(edge)
        sentences.append(tuple(word))

    if uncovered:
        log.warning(f"Stopped at {len(sentences)} sentences with {len(uncovered)} edges under-covered")
    else:
        log.debug(f"Generated {len(sentences)} sentences covering every reachable edge")
    return sentences


def all_sentences(model: Automaton, max_len: int) -> List[Sentence]:
    """Every word of length at most max_len the model accepts, in length-lexicographic order."""
    fsm = as_fsm(model)
    by_source: Dict[Tuple[int, str], List[int]] = {}
    for src, event, dst in fsm.edges:
        by_source.setdefault((src, event), []).append(dst)
    alphabet = fsm.alphabet

    words: List[Sentence] = [()]
    frontier: List[Tuple[Sentence, frozenset]] = [((), frozenset((fsm.initial,)))]
    for _ in range(max_len):
        nxt = []
        for word, current in frontier:
            for event in alphabet:
                reached = frozenset(dst for state in current for dst in by_source.get((state, event), ()))
                if reached:
                    nxt.append((word + (event,), reached))
        words.extend(word for word, _ in nxt)
        frontier = nxt
    return words


def _accepted_share(sentences: Sequence[Sentence], judge: Fsm) -> Fraction:
    if not sentences:
        return Fraction(0)
    verdicts: Dict[Sentence, bool] = {}
    hits = 0
    for sentence in sentences:
        if sentence not in verdicts:
            verdicts[sentence] = accepts_word(judge, sentence)
        hits += verdicts[sentence]
    return Fraction(hits, len(sentences))


def score(
    mined: Automaton,
    truth: Automaton,
    pol: Optional[GenPolicy] = None,
    exhaustive: bool = False,
    dedup: bool = False,
    ground_truth_T: Optional[int] = None
) -> Score:
    """
    Precision, recall and F1 of a mined model against a reference model.

    Precision is the share of sentences generated by the mined model that the
    reference accepts; recall is the converse. With exhaustive the sampled
    sentences are replaced by every word up to the length bound.
    """
    pol = pol or GenPolicy()
    mined_fsm, truth_fsm = as_fsm(mined), as_fsm(truth)
    bound = len(truth_fsm.edges) if ground_truth_T is None else ground_truth_T

    if exhaustive:
        from_mined = all_sentences(mined_fsm, pol.max_len_factor * bound)
        from_truth = all_sentences(truth_fsm, pol.max_len_factor * bound)
    else:
        from_mined = generate_sentences(mined_fsm, pol, bound)
        from_truth = generate_sentences(truth_fsm, replace(pol, seed=pol.seed + 1), bound)
        if dedup:
            from_mined = sorted(set(from_mined))
            from_truth = sorted(set(from_truth))

    precision = _accepted_share(from_mined, truth_fsm)
    recall = _accepted_share(from_truth, mined_fsm)
    result = Score(precision, recall, f1_score(precision, recall), sentences_used=len(from_mined) + len(from_truth))
    log.info(f"Scored on {result.sentences_used} sentences: p={float(precision):.4f} r={float(recall):.4f}")
    return result


def accuracy(mined: Automaton, test_slices: Sequence[Slice]) -> Fraction:
    """Share of test sessions whose event sequence the model accepts."""
    if not test_slices:
        raise EmptyTestSet()
    fsm = as_fsm(mined)
    accepted = sum(accepts_word(fsm, slice_.events()) for slice_ in test_slices)
    return Fraction(accepted, len(test_slices))
