"""Tests for automata, abstraction and replay."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import InvariantBroken
from core.formats import ModelFile
from services.efsm import (
    AmbiguousAbstraction,
    Efsm,
    Fsm,
    ModelFormatError,
    RejectReason,
    abstract,
    accepts_word,
    enumerate_paths,
    export,
    model_from_file,
    model_to_file,
    replay,
    replay_all,
)
from services.formula import TRUE, Atom, Op
from services.formula_syntax import parse_formula
from services.invariants import FunctionConditions, infer_conditions
from services.miner import init_model
from services.trace_model import ContractSchema, FunctionSpec, ParamKind, ParamSpec
from utils.formatters import display_formula

PHASES = ContractSchema(
    state_vars=(ParamSpec("phase", ParamKind.STATE),),
    functions=(FunctionSpec("a"), FunctionSpec("b"), FunctionSpec("c")),
)

edge_lists = st.lists(
    st.tuples(st.integers(0, 2), st.sampled_from("abc"), st.integers(0, 2)), max_size=6, unique=True
)


def _phase_model(edges, n_states=3):
    """States phase == i for i below n_states, q0 initial, every event unconstrained."""
    conditions = {event: FunctionConditions(event, TRUE, TRUE, 1) for event in "abc"}
    model = Efsm(schema=PHASES, conditions=conditions)
    for index in range(n_states):
        model.add_state(Atom("phase", Op.EQ, index), is_initial=index == 0)
    for src, event, dst in edges:
        model.add_transition(src, event, dst)
    return model


def _paths_by_search(model):
    found = set()

    def walk(states, used):
        found.add((states, used))
        for transition in model.outgoing(states[-1]):
            if transition.key not in used:
                walk(states + (transition.dst,), used + (transition.key,))

    walk((model.initial.id,), ())
    return found


@pytest.fixture
def two_state(gc_slices, gc_schema):
    """q0 is the zero record, q1 everything else; created games go 0->1, the rest loop on 1."""
    model = init_model(infer_conditions(gc_slices, gc_schema), gc_schema)
    model.add_transition(0, "createGame", 1)
    for event in model.alphabet:
        if event != "createGame":
            model.add_transition(1, event, 1)
    return model


class TestFsm:

    def test_edges_are_sorted_and_unique(self):
        fsm = Fsm((0, 1), 0, ((1, "b", 0), (0, "a", 1), (0, "a", 1)))
        assert fsm.edges == ((0, "a", 1), (1, "b", 0))
        assert fsm.alphabet == ["a", "b"]

    def test_unknown_states_are_rejected(self):
        with pytest.raises(ModelFormatError):
            Fsm((0,), 0, ((0, "a", 1),))
        with pytest.raises(ModelFormatError):
            Fsm((0,), 3)

    def test_reachable_edges(self):
        fsm = Fsm((0, 1, 2), 0, ((0, "a", 1), (2, "b", 1)))
        assert fsm.reachable_edges() == {(0, "a", 1)}

    def test_acceptance_is_prefix_closed(self):
        fsm = Fsm((0, 1), 0, ((0, "a", 1), (1, "b", 0)))
        assert accepts_word(fsm, [])
        assert accepts_word(fsm, ["a", "b", "a"])
        assert not accepts_word(fsm, ["b"])
        assert not accepts_word(fsm, ["a", "b", "a"], loop_once=True)

    def test_nondeterministic_acceptance(self):
        fsm = Fsm((0, 1, 2), 0, ((0, "a", 1), (0, "a", 2), (2, "c", 2)))
        assert accepts_word(fsm, ["a", "c", "c"])


class TestEfsm:

    def test_initial_model(self, two_state):
        assert two_state.initial.id == 0
        assert len(two_state.states) == 2
        two_state.check_states()

    def test_abstraction(self, two_state, gc_schema):
        assert abstract(gc_schema.zero_state(), two_state) == 0
        assert abstract({**gc_schema.zero_state(), "status": 1}, two_state) == 1

    def test_overlapping_states(self, two_state):
        two_state.add_state(parse_formula("status == 1"))
        with pytest.raises(AmbiguousAbstraction) as err:
            abstract({"status": 1, "stake": 0, "roundId": 0, "endInitiatedTime": 0}, two_state)
        assert err.value.ids == [1, 2]
        with pytest.raises(InvariantBroken):
            two_state.check_states()

    def test_remove_state_drops_its_transitions(self, two_state):
        two_state.add_state(parse_formula("status == 9"))
        two_state.add_transition(2, "serverEndGame", 1)
        two_state.remove_state(2)
        assert all(2 not in (t.src, t.dst) for t in two_state.transitions.values())

    def test_transitions_carry_the_event_conditions(self, two_state):
        t = two_state.transitions[(0, "createGame", 1)]
        assert t.guard == two_state.guard("createGame")
        assert t.update == two_state.update("createGame")

    def test_single_initial_state(self, two_state):
        two_state.states[1] = replace(two_state.states[1], is_initial=True)
        with pytest.raises(InvariantBroken):
            two_state.initial


class TestReplay:

    def test_sessions_replay_and_count_support(self, two_state, gc_slices):
        assert replay_all(gc_slices, two_state) == []
        assert two_state.support[(0, "createGame", 1)] == 6
        assert two_state.support[(1, "serverEndGameConflict", 1)] == 3

    def test_path_of_an_accepted_session(self, two_state, gc_slices):
        result = replay(gc_slices[0], two_state, count_support=False)
        assert result.accepted
        assert result.path == (0, 1, 1)
        assert two_state.support == {}

    def test_missing_transition(self, two_state, gc_slices):
        two_state.remove_transition(two_state.transitions[(1, "serverEndGame", 1)])
        result = replay(gc_slices[0], two_state)
        assert not result.accepted
        assert result.reason is RejectReason.NO_TRANSITION
        assert result.step_index == 1

    def test_false_guard(self, two_state, gc_slices):
        cond = two_state.conditions["createGame"]
        two_state.conditions["createGame"] = replace(cond, pre=parse_formula("status == 7"))
        two_state.add_transition(0, "createGame", 1)
        result = replay(gc_slices[0], two_state)
        assert result.reason is RejectReason.GUARD_FALSE
        assert result.step_index == 0

    def test_rejected_sessions_do_not_count(self, two_state, gc_slices):
        two_state.remove_transition(two_state.transitions[(1, "serverForceGameEnd", 1)])
        rejected = replay_all(gc_slices, two_state)
        assert [s.binding["gameId"] for s, _ in rejected] == [5]
        assert two_state.support[(0, "createGame", 1)] == 5

    def test_steps_must_continue_where_the_last_ended(self, two_state, gc_slices):
        first, second = gc_slices[0].steps[:2]
        restarted = replace(second, pre_state=first.pre_state)
        session = replace(gc_slices[0], steps=(first, restarted))
        result = replay(session, two_state)
        assert not result.accepted
        assert result.reason is RejectReason.DISCONTINUOUS
        assert result.step_index == 1
        assert result.path == (0, 1)
        assert two_state.support == {}


class TestPaths:

    def test_shortest_first(self, two_state):
        paths = list(enumerate_paths(two_state))
        assert paths[0].states == (0,)
        lengths = [len(p) for p in paths]
        assert lengths == sorted(lengths)

    def test_loop_once_paths_do_not_repeat_transitions(self, two_state):
        for path in enumerate_paths(two_state):
            assert len(set(path.transitions)) == len(path.transitions)

    def test_path_text(self, two_state):
        path = list(enumerate_paths(two_state))[1]
        assert str(path) == "q0-createGame-q1"
        assert path.word() == ["createGame"]


    def test_triangle_is_walked_once(self):
        model = _phase_model([(0, "a", 1), (1, "b", 2), (2, "c", 0)])
        paths = list(enumerate_paths(model))
        assert [len(p) for p in paths] == [0, 1, 2, 3]
        assert paths[-1].word() == ["a", "b", "c"]
        assert paths[-1].states == (0, 1, 2, 0)

    @given(edge_lists)
    def test_loop_once_paths_match_exhaustive_search(self, edges):
        model = _phase_model(edges)
        paths = [(p.states, tuple(t.key for t in p.transitions)) for p in enumerate_paths(model)]
        assert len(paths) == len(set(paths))
        assert set(paths) == _paths_by_search(model)

class TestModelFiles:

    def test_efsm_file_loads_back(self, two_state, gc_slices):
        replay_all(gc_slices, two_state)
        again = model_from_file(model_to_file(two_state, manifest="m"))
        assert again.states == two_state.states
        assert set(again.transitions) == set(two_state.transitions)
        assert again.support == two_state.support
        assert again.to_fsm().edges == two_state.to_fsm().edges

    def test_fsm_file_loads_back(self):
        fsm = Fsm((0, 1), 0, ((0, "a", 1),), labels={0: "idle"})
        assert model_from_file(model_to_file(fsm)) == fsm

    def test_transition_to_unknown_state(self, two_state):
        data = model_to_file(two_state)
        data.transitions[0].dst = 42
        with pytest.raises(ModelFormatError):
            model_from_file(data)

    def test_dot_export(self, two_state):
        text = export(two_state, "dot")
        assert text.startswith("digraph efsm")
        assert "createGame" in text
        assert "doublecircle" in text

    def test_unknown_format(self, two_state):
        with pytest.raises(ModelFormatError):
            export(two_state, "svg")

    def test_display_drops_implied_conjuncts(self, solver):
        f = parse_formula("stake > 1 && stake > 0 && status == 1")
        assert display_formula(f, solver) == "stake > 1 && status == 1"
        assert display_formula(Atom("x", Op.EQ, 1)) == "x == 1"

    @given(edge_lists, st.dictionaries(st.integers(0, 2), st.sampled_from(["idle", "open", "done"])))
    def test_random_fsm_loads_back(self, edges, labels):
        fsm = Fsm((0, 1, 2), 0, tuple(edges), labels=labels)
        data = ModelFile.model_validate_json(model_to_file(fsm).model_dump_json())
        assert model_from_file(data) == fsm

    @given(edge_lists, st.data())
    @settings(max_examples=50)
    def test_random_efsm_loads_back(self, edges, data):
        model = _phase_model(edges)
        for key in model.transitions:
            count = data.draw(st.integers(0, 5))
            if count:
                model.support[key] = count
        again = model_from_file(ModelFile.model_validate_json(model_to_file(model).model_dump_json()))
        assert again.states == model.states
        assert set(again.transitions) == set(model.transitions)
        assert again.support == model.support
        assert again.conditions == model.conditions
        assert again.next_id == model.next_id
