"""Tests for guard and update inference."""

import pytest

from core.errors import SpecMineError
from services.formula import TRUE, Atom, Op, Or, evaluate, is_param_ref, iter_atoms
from services.formula_syntax import parse_formula
from services.invariants import (
    EmptyPool,
    FunctionConditions,
    build_predicate_pool,
    comparable,
    conditions_to_file,
    corpus_constants,
    infer_conditions,
    load_conditions,
    observations_by_event,
    prune_implied,
    session_params,
)
from services.sat import Solver
from services.simgen import GenProtocol, get_fixture, simulate
from services.slicer import slice_trace


@pytest.fixture
def gc_conditions(gc_slices, gc_schema):
    return infer_conditions(gc_slices, gc_schema)


@pytest.fixture(scope="module")
def simulated():
    rc = get_fixture("gamechannel")
    slices = slice_trace(simulate(rc, GenProtocol(30, 100, 7)), rc.slice_config)
    return rc, infer_conditions(slices, rc.schema)


class TestInferConditions:

    def test_every_event_is_covered(self, gc_conditions, gc_schema):
        assert set(gc_conditions) == set(gc_schema.function_names)
        assert gc_conditions["createGame"].support == 6

    def test_create_game_update(self, gc_conditions, solver):
        expected = parse_formula(
            "status == 1 && roundId == 0 && endInitiatedTime == 0 && stake > 0 && stake == msg.value"
        )
        post = gc_conditions["createGame"].post
        assert solver.implies(post, expected)
        assert solver.is_sat(post)

    def test_create_game_guard_needs_the_zero_record(self, gc_conditions, solver):
        pre = gc_conditions["createGame"].pre
        assert solver.implies(pre, parse_formula("status == 0 && stake == 0 && roundId == 0"))

    def test_server_calls_are_from_the_server(self, gc_conditions, solver):
        for event in ("serverEndGame", "serverForceGameEnd", "serverCancelActiveGame"):
            assert solver.implies(gc_conditions[event].pre, parse_formula("msg.sender == server"))

    def test_observations_satisfy_their_conditions(self, gc_conditions, gc_slices):
        for event, steps in observations_by_event(gc_slices).items():
            for step in steps:
                assert evaluate(gc_conditions[event].pre, step.pre_valuation())
                assert evaluate(gc_conditions[event].post, step.post_valuation())

    def test_case_split(self, gc_slices, gc_schema):
        conditions = infer_conditions(gc_slices, gc_schema, split_on=["status"])
        pre = conditions["serverEndGameConflict"].pre
        assert isinstance(pre, Or)
        assert len(pre.children) == 2
        assert evaluate(pre.children[0], {**gc_slices[4].steps[1].pre_valuation()})

    def test_min_support_leaves_rare_events_open(self, gc_slices, gc_schema):
        conditions = infer_conditions(gc_slices, gc_schema, min_support=4)
        assert conditions["serverEndGame"] == FunctionConditions("serverEndGame", TRUE, TRUE, 1)
        assert conditions["createGame"].pre != TRUE

    def test_rejects_unknown_split_variable(self, gc_slices, gc_schema):
        with pytest.raises(SpecMineError):
            infer_conditions(gc_slices, gc_schema, split_on=["balance"])

    def test_rejects_empty_corpus(self, gc_schema):
        with pytest.raises(SpecMineError):
            infer_conditions([], gc_schema)


class TestTemplates:

    def test_constants_start_from_zero_and_one(self, gc_slices, gc_schema):
        constants = corpus_constants(observations_by_event(gc_slices), gc_schema)
        assert constants["status"][:2] == (0, 1)
        assert {2, 3} <= set(constants["status"])
        assert "0x0" in constants["msg.sender"]

    def test_quantities_only_get_base_constants(self, gc_slices, gc_schema):
        constants = corpus_constants(observations_by_event(gc_slices), gc_schema)
        for name in ("stake", "roundId", "endInitiatedTime", "block.timestamp", "msg.value"):
            assert constants[name] == (0, 1)

    def test_wide_enum_falls_back_to_base_constants(self, gc_slices, gc_schema):
        constants = corpus_constants(observations_by_event(gc_slices), gc_schema, limit=2)
        assert constants["status"] == (0, 1)

    def test_session_parameters(self, gc_slices, gc_schema):
        assert session_params(gc_slices, gc_schema) == {"instance", "gameId", "gameIdCntr"}

    def test_session_parameters_stay_out_of_conditions(self, gc_conditions):
        for cond in gc_conditions.values():
            for item in (*iter_atoms(cond.pre), *iter_atoms(cond.post)):
                assert not item.params() & {"instance", "gameId", "gameIdCntr"}

    def test_comparability_follows_units(self, gc_schema):
        assert comparable("stake", "msg.value", gc_schema)
        assert not comparable("stake", "roundId", gc_schema)
        assert comparable("msg.sender", "server", gc_schema)

    def test_weaker_atoms_are_pruned(self):
        atoms = [Atom("x", Op.NE, 0), Atom("x", Op.GE, 1), Atom("x", Op.GT, 0), Atom("y", Op.GE, 1)]
        assert prune_implied(atoms, Solver()) == [Atom("x", Op.GT, 0), Atom("y", Op.GE, 1)]


class TestPredicatePool:

    def test_pool_ranges_over_state_variables(self, gc_conditions, gc_schema, solver):
        pool = build_predicate_pool(gc_conditions, gc_schema)
        assert len(pool) > 0
        assert all(item.params() <= set(gc_schema.state_names) for item in pool)
        assert any(solver.equivalent(item, Atom("status", Op.EQ, 1)) for item in pool)

    def test_pool_has_no_equivalent_pair(self, gc_conditions, gc_schema, solver):
        items = list(build_predicate_pool(gc_conditions, gc_schema))
        for index, left in enumerate(items):
            for right in items[index + 1:]:
                assert not solver.equivalent(left, right)

    def test_empty_pool(self, gc_schema):
        with pytest.raises(EmptyPool):
            build_predicate_pool({"createGame": FunctionConditions("createGame", TRUE, TRUE, 1)}, gc_schema)


class TestConditionsFile:

    def test_file_loads_back(self, gc_conditions, gc_schema, tmp_path):
        path = tmp_path / "conds.json"
        path.write_text(conditions_to_file(gc_conditions, gc_schema).model_dump_json(), encoding="utf-8")
        schema, loaded = load_conditions(path)
        assert schema == gc_schema
        for event, cond in gc_conditions.items():
            assert loaded[event].pre == cond.pre
            assert loaded[event].post == cond.post

    def test_invalid_file(self, tmp_path):
        path = tmp_path / "conds.json"
        path.write_text('{"conditions": {}}', encoding="utf-8")
        with pytest.raises(SpecMineError):
            load_conditions(path)


class TestSimulatedCorpus:

    def test_create_game_update(self, simulated):
        rc, conditions = simulated
        expected = parse_formula(
            "status == 1 && stake == msg.value && stake > 0 && roundId == 0 && endInitiatedTime == 0"
        )
        solver = Solver(rc.schema.domains())
        assert solver.implies(conditions["createGame"].post, expected)
        assert solver.is_sat(conditions["createGame"].post)

    def test_no_timestamp_constants(self, simulated):
        _, conditions = simulated
        for cond in conditions.values():
            for item in (*iter_atoms(cond.pre), *iter_atoms(cond.post)):
                if item.params() & {"block.timestamp", "endInitiatedTime"}:
                    assert is_param_ref(item.rhs) or item.rhs in (0, 1)
