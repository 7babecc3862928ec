"""Tests for run manifests and the run ledger."""

import pytest

from database.database import get_session, init_db, make_engine
from database.repositories import RunRepository
from services.pipeline_service import PipelineRun, file_digest, manifest_hash


@pytest.fixture
def ledger_url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs' / 'ledger.db'}"


@pytest.fixture
def session(ledger_url):
    factory = init_db(make_engine(ledger_url))
    for s in get_session(factory):
        yield s


class TestManifestHash:

    def test_inputs_are_hashed_by_content(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        a.write_text("{}", encoding="utf-8")
        b.write_text("{}", encoding="utf-8")
        assert PipelineRun("mine", 0, {"slices": a}).hash == PipelineRun("mine", 0, {"slices": b}).hash
        b.write_text("[]", encoding="utf-8")
        assert PipelineRun("mine", 0, {"slices": a}).hash != PipelineRun("mine", 0, {"slices": b}).hash

    def test_everything_else_counts(self):
        base = manifest_hash("mine", 0, {}, {"k": "1"})
        assert manifest_hash("mine", 1, {}, {"k": "1"}) != base
        assert manifest_hash("ktail", 0, {}, {"k": "1"}) != base
        assert manifest_hash("mine", 0, {}, {"k": "2"}) != base
        assert manifest_hash("mine", 0, {}, {"k": "1"}, version="0.0.0") != base

    def test_parameter_order_does_not_matter(self):
        assert manifest_hash("m", 0, {"x": "1", "y": "2"}, {}) == manifest_hash("m", 0, {"y": "2", "x": "1"}, {})

    def test_unset_parameters_are_left_out(self):
        assert PipelineRun("mine", 0, params={"max_paths": None}).hash == PipelineRun("mine", 0).hash

    def test_file_digest(self, tmp_path):
        path = tmp_path / "empty"
        path.write_bytes(b"")
        assert file_digest(path) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


class TestStages:

    def test_stage_timings_accumulate(self):
        run = PipelineRun("mine", 0)
        with run.stage("infer"):
            pass
        with run.stage("infer"):
            pass
        assert set(run.timings) == {"infer"}
        assert run.manifest.timings["infer"] >= 0

    def test_failed_stage_is_still_timed(self):
        run = PipelineRun("mine", 0)
        with pytest.raises(RuntimeError):
            with run.stage("mine"):
                raise RuntimeError("boom")
        assert "mine" in run.timings

    def test_manifest_file(self, tmp_path):
        run = PipelineRun("ktail", 4, params={"k": 2})
        path = tmp_path / "manifest.json"
        run.write_manifest(path)
        text = path.read_text(encoding="utf-8")
        assert run.hash in text
        assert '"k": "2"' in text


class TestRepository:

    def test_start_and_finish(self, session):
        repo = RunRepository(session)
        run = repo.start("ab" * 32, "mine", 7, "1.0.0", {"slices": "train.json"})
        assert run.status == "running"

        repo.finish(run.id, {"infer": 0.5, "mine": 1.25})
        stored = repo.get_by_id(run.id)
        assert stored.status == "ok"
        assert [(t.stage, t.seconds) for t in stored.timings] == [("infer", 0.5), ("mine", 1.25)]
        assert RunRepository.inputs_of(stored) == {"slices": "train.json"}

    def test_failed_run_keeps_its_error(self, session):
        repo = RunRepository(session)
        run = repo.start("cd" * 32, "eval", 0, "1.0.0", {})
        repo.finish(run.id, {}, "failed", "bad model")
        stored = repo.get_by_id(run.id)
        assert (stored.status, stored.error) == ("failed", "bad model")

    def test_finish_unknown_run(self, session):
        assert RunRepository(session).finish(999, {}) is None

    def test_lookup_by_hash(self, session):
        repo = RunRepository(session)
        first = repo.start("ee" * 32, "mine", 0, "1.0.0", {})
        repo.start("ff" * 32, "mine", 0, "1.0.0", {})
        second = repo.start("ee" * 32, "mine", 0, "1.0.0", {})
        assert [r.id for r in repo.get_by_hash("ee" * 32)] == [first.id, second.id]

    def test_recent_runs_newest_first(self, session):
        repo = RunRepository(session)
        ids = [repo.start(f"{i:064x}", "gen", i, "1.0.0", {}).id for i in range(5)]
        assert [r.id for r in repo.get_recent(3)] == ids[:1:-1]


class TestPipelineLedger:

    def test_run_is_recorded(self, ledger_url, session):
        run = PipelineRun("ktail", 3, params={"k": 1}, ledger_url=ledger_url)
        run.open_ledger()
        with run.stage("ktail"):
            pass
        run.close_ledger()

        [record] = RunRepository(session).get_by_hash(run.hash)
        assert record.command == "ktail"
        assert record.seed == 3
        assert record.status == "ok"

    def test_without_a_ledger_nothing_happens(self):
        run = PipelineRun("gen", 0, ledger_url="")
        run.open_ledger()
        run.close_ledger("failed", "ignored")

    def test_missing_url(self, monkeypatch):
        from core.config import settings

        monkeypatch.setattr(settings, "SPECMINE_LEDGER_URL", None)
        with pytest.raises(ValueError):
            make_engine()
