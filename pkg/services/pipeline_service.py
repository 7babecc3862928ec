"""Run manifests, stage timing and the optional run ledger."""

import hashlib
import json
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Union

from core import __version__
from core.config import settings
from core.formats import RunManifestFile
from core.logger import log
from utils.formatters import format_seconds


def file_digest(path: Union[str, Path]) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_hash(
    command: str,
    seed: int,
    input_digests: Mapping[str, str],
    params: Mapping[str, str],
    version: str = __version__
) -> str:
    """Hash of everything that determines a run's outputs; paths and timings are left out."""
    payload = json.dumps(
        {
            "command": command,
            "version": version,
            "seed": seed,
            "inputs": dict(sorted(input_digests.items())),
            "params": dict(sorted(params.items())),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class PipelineRun:
    """
    One subcommand invocation.

    Collects input digests and parameters into a manifest whose hash every
    output artifact carries, times the stages and, when a ledger URL is
    configured, records the run.
    """

    def __init__(
        self,
        command: str,
        seed: int,
        inputs: Optional[Mapping[str, Optional[str]]] = None,
        params: Optional[Mapping[str, object]] = None,
        ledger_url: Optional[str] = None
    ):
        self.command = command
        self.seed = seed
        self.inputs = {name: str(path) for name, path in (inputs or {}).items() if path}
        self.params = {name: str(value) for name, value in (params or {}).items() if value is not None}
        self.timings: Dict[str, float] = {}
        self.hash = manifest_hash(
            command, seed, {name: file_digest(path) for name, path in self.inputs.items()}, self.params
        )
        self.ledger_url = ledger_url if ledger_url is not None else settings.SPECMINE_LEDGER_URL
        self._ledger = None
        self._run_id: Optional[int] = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        log.info(f"Stage {name} started")
        started = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - started
            self.timings[name] = self.timings.get(name, 0.0) + elapsed
            log.info(f"Stage {name} finished in {format_seconds(elapsed)}")

    @property
    def manifest(self) -> RunManifestFile:
        return RunManifestFile(
            hash=self.hash,
            command=self.command,
            version=__version__,
            seed=self.seed,
            inputs=self.inputs,
            params=self.params,
            timings=dict(self.timings),
        )

    def write_manifest(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

    # Ledger

    def open_ledger(self) -> None:
        if not self.ledger_url:
            return
        from database.database import init_db, make_engine
        from database.repositories import RunRepository

        factory = init_db(make_engine(self.ledger_url))
        self._ledger = factory()
        run = RunRepository(self._ledger).start(self.hash, self.command, self.seed, __version__, self.inputs)
        self._run_id = run.id

    def close_ledger(self, status: str = "ok", error: Optional[str] = None) -> None:
        if self._ledger is None:
            return
        from database.repositories import RunRepository

        try:
            RunRepository(self._ledger).finish(self._run_id, self.timings, status, error)
        finally:
            self._ledger.close()
            self._ledger = None
