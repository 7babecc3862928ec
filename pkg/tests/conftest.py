"""Shared fixtures."""

from pathlib import Path

import pytest

from core.logger import log
from services.sat import Solver
from services.slicer import load_slice_config, slice_trace
from services.trace_model import load_history, load_schema

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def gc_schema():
    return load_schema(FIXTURES / "gamechannel_schema.json")


@pytest.fixture
def gc_config():
    return load_slice_config(FIXTURES / "gamechannel_slice_config.json")


@pytest.fixture
def gc_trace(gc_schema):
    return load_history(FIXTURES / "gamechannel_interleaved.jsonl", gc_schema)


@pytest.fixture
def gc_slices(gc_trace, gc_config):
    return slice_trace(gc_trace, gc_config)


@pytest.fixture
def solver(gc_schema):
    return Solver(gc_schema.domains())


@pytest.fixture
def log_messages():
    """Messages logged while the test runs."""
    messages = []
    handler_id = log.add(lambda message: messages.append(message.record["message"]), level="DEBUG")
    yield messages
    log.remove(handler_id)
