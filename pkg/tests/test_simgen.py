"""Tests for reference contracts and history synthesis."""

import pytest

from core.errors import SpecMineError
from services.simgen import (
    GenProtocol,
    UnknownFixture,
    enumerate_sessions,
    fixture_names,
    get_fixture,
    instance_seed,
    simulate,
    splitmix64,
)
from services.slicer import slice_trace
from services.trace_model import StepStatus

NAMES = ["gamechannel", "rps", "hello", "marketplace", "random:0", "random:7"]


class TestFixtures:

    def test_names(self):
        assert fixture_names() == ["gamechannel", "hello", "marketplace", "rps", "random:<seed>"]

    @pytest.mark.parametrize("name", ["nope", "random:x"])
    def test_unknown_fixture(self, name):
        with pytest.raises(UnknownFixture):
            get_fixture(name)

    def test_ground_truth_sizes(self):
        truth = get_fixture("gamechannel").ground_truth
        assert len(truth.states) == 7
        assert len(truth.edges) == 16
        assert len(get_fixture("rps").ground_truth.edges) == 5

    def test_random_machines_are_reproducible(self):
        assert get_fixture("random:3").ground_truth == get_fixture("random:3").ground_truth

    @pytest.mark.parametrize("name", NAMES)
    def test_every_state_in_truth_is_reachable(self, name):
        truth = get_fixture(name).ground_truth
        targets = {dst for _, _, dst in truth.reachable_edges()} | {truth.initial}
        assert targets == set(truth.states)


class TestSimulate:

    @pytest.mark.parametrize("name", NAMES)
    def test_successful_calls_follow_ground_truth(self, name):
        rc = get_fixture(name)
        trace = simulate(rc, GenProtocol(instances=4, txs_per_instance=40, seed=1))
        edges = set(rc.ground_truth.edges)
        for step in trace.steps:
            if step.succeeded:
                assert (rc.classify(step.pre_state), step.event, rc.classify(step.post_state)) in edges

    def test_reverted_calls_keep_the_state(self):
        trace = simulate(get_fixture("rps"), GenProtocol(instances=2, txs_per_instance=30))
        reverted = [step for step in trace.steps if step.status is StepStatus.REVERTED]
        assert reverted
        assert all(step.pre_state == step.post_state for step in reverted)

    def test_shape_of_the_history(self):
        trace = simulate(get_fixture("hello"), GenProtocol(instances=3, txs_per_instance=5))
        assert [step.seq_no for step in trace.steps] == list(range(15))
        assert [step.args["instance"] for step in trace.steps] == [0] * 5 + [1] * 5 + [2] * 5

    def test_same_seed_same_history(self):
        rc = get_fixture("marketplace")
        proto = GenProtocol(instances=3, txs_per_instance=20, seed=42)
        assert simulate(rc, proto).steps == simulate(rc, proto).steps
        assert simulate(rc, proto).steps != simulate(rc, GenProtocol(3, 20, seed=43)).steps

    def test_instances_do_not_depend_on_each_other(self):
        rc = get_fixture("rps")
        small = simulate(rc, GenProtocol(instances=1, txs_per_instance=10, seed=5))
        large = simulate(rc, GenProtocol(instances=3, txs_per_instance=10, seed=5))
        assert small.steps == large.steps[:10]

    def test_game_channel_slices_start_from_genesis(self):
        rc = get_fixture("gamechannel")
        trace = simulate(rc, GenProtocol(instances=2, txs_per_instance=60, seed=2))
        for sl in slice_trace(trace, rc.slice_config):
            assert sl.steps[0].event == "createGame"
            assert rc.classify(sl.steps[0].pre_state) == 0

    @pytest.mark.parametrize("instances, txs", [(0, 10), (10, 0)])
    def test_protocol_must_be_positive(self, instances, txs):
        with pytest.raises(SpecMineError):
            GenProtocol(instances=instances, txs_per_instance=txs)


class TestSeeds:

    def test_splitmix_reference_values(self):
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_instance_seeds_differ(self):
        seeds = {instance_seed(0, i) for i in range(100)}
        assert len(seeds) == 100
        assert instance_seed(1, 0) != instance_seed(0, 0)


class TestEnumerate:

    def test_every_session_is_maximal_or_full_length(self):
        rc = get_fixture("hello")
        slices = slice_trace(enumerate_sessions(rc, 2), rc.slice_config)
        words = {tuple(sl.events()) for sl in slices}
        assert words == {("sendRequest", "sendResponse")}
        assert all(step.succeeded for sl in slices for step in sl.steps)

    def test_sessions_follow_ground_truth(self):
        rc = get_fixture("rps")
        trace = enumerate_sessions(rc, 3)
        edges = set(rc.ground_truth.edges)
        for step in trace.steps:
            assert (rc.classify(step.pre_state), step.event, rc.classify(step.post_state)) in edges

    def test_needs_instance_slicing(self):
        with pytest.raises(SpecMineError):
            enumerate_sessions(get_fixture("gamechannel"), 2)
