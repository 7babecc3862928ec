"""Tests for the refinement loop."""

import pytest

from core.config import settings
from core.errors import InvariantBroken, SpecMineError
from services.efsm import abstract, accepts_word, replay_all
from services.formula import TRUE, evaluate
from services.formula_syntax import parse_formula
from services.invariants import FunctionConditions, infer_conditions
from services.metrics import GenPolicy, score
from services.miner import (
    BudgetExceeded,
    CorpusTooDiverse,
    DegenerateSchema,
    History,
    MinerConfig,
    NonZeroGenesis,
    abstraction_atoms,
    construct,
    find_spurious,
    init_model,
    mine,
    split_remove,
)
from services.simgen import GenProtocol, enumerate_sessions, get_fixture, simulate
from services.slicer import Slice, slice_trace
from services.trace_model import ContractSchema, FunctionSpec, ObservationStep, ParamKind, ParamSpec

COUNTER = ContractSchema(
    state_vars=(ParamSpec("x", ParamKind.STATE), ParamSpec("y", ParamKind.STATE)),
    functions=(FunctionSpec("a"), FunctionSpec("b"), FunctionSpec("c")),
    env=(ParamSpec("instance", ParamKind.ENV),),
)
OPEN = {event: FunctionConditions(event, TRUE, TRUE, 1) for event in ("a", "b", "c")}


def _session(instance, *moves):
    steps = tuple(
        ObservationStep(seq, event, {"instance": instance}, dict(zip("xy", src)), dict(zip("xy", dst)))
        for seq, (event, src, dst) in enumerate(moves)
    )
    return Slice((("instance", instance),), steps)


@pytest.fixture
def counter_slices():
    """Both sessions end at y == 1, where nothing further was ever seen."""
    return [
        _session(0, ("a", (0, 0), (1, 0)), ("c", (1, 0), (1, 1))),
        _session(1, ("a", (0, 0), (1, 0)), ("b", (1, 0), (1, 1))),
    ]


@pytest.fixture
def gc_conditions(gc_slices, gc_schema):
    return infer_conditions(gc_slices, gc_schema)


class TestHistory:

    def test_states_with_equal_signatures_join(self):
        slices = [_session(0, ("a", (0, 0), (1, 0))), _session(1, ("a", (0, 0), (2, 0)))]
        history = History(slices, COUNTER, abstraction_atoms(OPEN, COUNTER))
        assert len(history.concrete) == 3
        assert len(history.states) == 2
        assert history.successors == {(history.genesis, "a"): {history.signature({"x": 1, "y": 0})}}

    def test_condition_atoms_separate_signatures(self):
        guarded = {**OPEN, "b": FunctionConditions("b", parse_formula("x > 1"), TRUE, 1)}
        slices = [_session(0, ("a", (0, 0), (1, 0))), _session(1, ("a", (0, 0), (2, 0)))]
        history = History(slices, COUNTER, abstraction_atoms(guarded, COUNTER))
        assert len(history.states) == 3

    def test_description_separates_members(self):
        history = History([], COUNTER, abstraction_atoms(OPEN, COUNTER))
        inside = history.signature({"x": 1, "y": 1})
        outside = history.signature({"x": 1, "y": 0})
        formula = history.describe([inside], [outside])
        assert evaluate(formula, {"x": 5, "y": 3})
        assert not evaluate(formula, {"x": 5, "y": 0})

    def test_identical_signatures_cannot_be_separated(self):
        history = History([], COUNTER, abstraction_atoms(OPEN, COUNTER))
        sig = history.signature({"x": 1, "y": 1})
        with pytest.raises(InvariantBroken):
            history.describe([sig], [sig])


class TestInitAndConstruct:

    def test_two_initial_states(self, gc_conditions, gc_schema):
        model = init_model(gc_conditions, gc_schema)
        assert sorted(model.states) == [0, 1]
        assert model.initial.id == 0
        assert abstract(gc_schema.zero_state(), model) == 0

    def test_schema_without_state(self):
        schema = ContractSchema(state_vars=(), functions=(FunctionSpec("a"),))
        with pytest.raises(DegenerateSchema):
            init_model({"a": OPEN["a"]}, schema)

    def test_construct_follows_feasibility(self, gc_conditions, gc_schema):
        model = construct(init_model(gc_conditions, gc_schema))
        assert (0, "createGame", 1) in model.transitions
        assert all(src != 0 or event == "createGame" for src, event, _ in model.transitions)
        assert all(dst != 0 for _, _, dst in model.transitions)

    def test_construct_without_loops(self, gc_conditions, gc_schema):
        model = construct(init_model(gc_conditions, gc_schema), allow_loops=False)
        assert all(src != dst for src, _, dst in model.transitions)

    def test_removed_transitions_stay_out(self, gc_conditions, gc_schema):
        model = construct(init_model(gc_conditions, gc_schema), removed=[(0, "createGame", 1)])
        assert (0, "createGame", 1) not in model.transitions


class TestRefinementSteps:

    def test_find_spurious_on_the_constructed_model(self, gc_conditions, gc_schema, gc_slices):
        model = construct(init_model(gc_conditions, gc_schema))
        spurious = find_spurious(model, gc_slices)
        assert spurious is not None
        assert spurious.path.states[0] == model.initial.id
        assert spurious.path.last == spurious.transition.src
        assert spurious.transition.key in model.transitions

    def test_split_remove_keeps_states_disjoint(self, gc_conditions, gc_schema, gc_slices):
        model = construct(init_model(gc_conditions, gc_schema))
        action = split_remove(model, find_spurious(model, gc_slices), gc_slices)
        assert action.kind in ("split_guard", "remove", "split_states")
        model.check_states()

    def test_stepwise_refinement_reaches_a_sound_model(self, counter_slices):
        model = construct(init_model(OPEN, COUNTER))
        removed = set()
        for _ in range(1000):
            spurious = find_spurious(model, counter_slices)
            if spurious is None:
                break
            action = split_remove(model, spurious, counter_slices)
            if action.kind == "remove":
                removed.add(spurious.transition.key)
            else:
                construct(model, removed=removed)
        else:
            pytest.fail("refinement did not converge")
        assert replay_all(counter_slices, model) == []


class TestMine:

    def test_game_channel_sessions_replay(self, gc_slices, gc_conditions, gc_schema):
        model, report = mine(gc_slices, gc_conditions, gc_schema)
        assert report.rejected == []
        assert replay_all(gc_slices, model) == []
        model.check_states()
        assert abstract(gc_schema.zero_state(), model) == model.initial.id

    def test_reachable_transitions_are_supported(self, gc_slices, gc_conditions, gc_schema):
        model, _ = mine(gc_slices, gc_conditions, gc_schema)
        for edge in model.to_fsm().reachable_edges():
            assert model.support.get(edge, 0) > 0

    def test_budget_is_respected(self, gc_slices, gc_conditions, gc_schema):
        model, report = mine(gc_slices, gc_conditions, gc_schema)
        assert report.budget.actions_used == report.rmpath_count
        assert report.budget.actions_used <= report.budget.bound
        data = report.to_file(model, manifest="m")
        assert data.budget.bound == report.budget.bound
        assert data.n_concrete_states == report.n_concrete_states

    def test_budget_override(self, gc_slices, gc_conditions, gc_schema):
        with pytest.raises(BudgetExceeded):
            mine(gc_slices, gc_conditions, gc_schema, MinerConfig(max_rmpath_actions=1))

    def test_without_loops(self, gc_slices, gc_conditions, gc_schema):
        model, _ = mine(gc_slices, gc_conditions, gc_schema, MinerConfig(allow_loops=False))
        assert all(t.src != t.dst for t in model.transitions.values())

    def test_state_split_by_observed_points(self, counter_slices):
        model, report = mine(counter_slices, OPEN, COUNTER)
        assert report.rejected == []
        assert any(action.kind == "split_states" for action in report.actions)
        assert all(action.kind != "split_guard" for action in report.actions)
        assert any(state.origin.startswith("states") for state in model.states.values())

    def test_guard_split_needs_members_on_both_sides(self, counter_slices):
        guarded = {**OPEN, **{e: FunctionConditions(e, parse_formula("y == 0"), TRUE, 1) for e in "bc"}}
        model, report = mine(counter_slices, guarded, COUNTER)
        assert report.rejected == []
        assert any(action.kind == "split_guard" for action in report.actions)
        assert abstract({"x": 1, "y": 0}, model) != abstract({"x": 1, "y": 1}, model)

    def test_too_many_points(self, counter_slices, monkeypatch):
        monkeypatch.setattr(settings, "SPECMINE_MAX_PRED_DISJUNCTS", 0)
        with pytest.raises(CorpusTooDiverse):
            mine(counter_slices, OPEN, COUNTER)

    def test_session_must_start_from_zero(self, gc_slices, gc_conditions, gc_schema):
        late = Slice(gc_slices[0].key, gc_slices[0].steps[1:])
        with pytest.raises(NonZeroGenesis):
            mine([late], gc_conditions, gc_schema)

    def test_every_observed_event_needs_conditions(self, gc_slices, gc_conditions, gc_schema):
        partial = {e: c for e, c in gc_conditions.items() if e != "serverEndGame"}
        with pytest.raises(SpecMineError):
            mine(gc_slices, partial, gc_schema)

    def test_empty_corpus(self, gc_conditions, gc_schema):
        with pytest.raises(SpecMineError):
            mine([], gc_conditions, gc_schema)


def _check_random_machine(seed):
    rc = get_fixture(f"random:{seed}")
    slices = slice_trace(enumerate_sessions(rc, 4), rc.slice_config)
    model, report = mine(slices, infer_conditions(slices, rc.schema), rc.schema)
    assert report.rejected == []
    assert all(accepts_word(model, s.events()) for s in slices)
    assert find_spurious(model, slices) is None
    assert report.budget.actions_used <= report.budget.bound
    assert abstract(rc.schema.zero_state(), model) == model.initial.id


@pytest.mark.parametrize("seed", range(6))
def test_mined_model_accepts_every_enumerated_session(seed):
    _check_random_machine(seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(6, 200))
def test_soundness_on_many_random_machines(seed):
    _check_random_machine(seed)


def _mine_simulated(instances, txs):
    rc = get_fixture("gamechannel")
    slices = slice_trace(simulate(rc, GenProtocol(instances, txs, 7)), rc.slice_config)
    model, report = mine(slices, infer_conditions(slices, rc.schema), rc.schema)
    return rc, slices, model, report


def test_simulated_game_channel_replays():
    _, slices, model, report = _mine_simulated(10, 60)
    assert report.rejected == []
    assert replay_all(slices, model) == []
    model.check_states()


@pytest.mark.slow
def test_game_channel_recovered_from_simulation():
    rc, _, model, report = _mine_simulated(100, 100)
    assert report.rejected == []
    assert len(model.states) == 7
    assert len(model.transitions) == 16
    result = score(model, rc.ground_truth, GenPolicy(max_len_factor=1), exhaustive=True, ground_truth_T=8)
    assert result.f1 == 1
