"""Repository classes for ledger operations."""

import json
from typing import Dict, List, Mapping, Optional

from sqlalchemy import select
from sqlalchemy.orm import Session, selectinload

from core.logger import log
from database.models import RunRecord, StageTiming


class RunRepository:
    """Repository for RunRecord and StageTiming operations."""

    def __init__(self, session: Session):
        self.session = session

    def start(
        self,
        manifest_hash: str,
        command: str,
        seed: int,
        tool_version: str,
        inputs: Mapping[str, str]
    ) -> RunRecord:
        """Record a run that has just started."""
        run = RunRecord(
            manifest_hash=manifest_hash,
            command=command,
            seed=seed,
            tool_version=tool_version,
            inputs=json.dumps(dict(inputs), sort_keys=True),
        )
        self.session.add(run)
        self.session.commit()
        self.session.refresh(run)
        log.debug(f"Ledger run {run.id} started: {command} {manifest_hash[:12]}")
        return run

    def finish(
        self,
        run_id: int,
        timings: Mapping[str, float],
        status: str = "ok",
        error: Optional[str] = None
    ) -> Optional[RunRecord]:
        """Store stage timings and the final status."""
        run = self.get_by_id(run_id)
        if run is None:
            log.warning(f"Ledger run {run_id} not found")
            return None
        for stage, seconds in timings.items():
            run.timings.append(StageTiming(stage=stage, seconds=seconds))
        run.status = status
        run.error = error
        self.session.commit()
        log.debug(f"Ledger run {run_id} finished with status {status}")
        return run

    def get_by_id(self, run_id: int) -> Optional[RunRecord]:
        result = self.session.execute(
            select(RunRecord).options(selectinload(RunRecord.timings)).where(RunRecord.id == run_id)
        )
        return result.scalar_one_or_none()

    def get_by_hash(self, manifest_hash: str) -> List[RunRecord]:
        """All runs of one manifest, oldest first."""
        result = self.session.execute(
            select(RunRecord).where(RunRecord.manifest_hash == manifest_hash).order_by(RunRecord.id)
        )
        return list(result.scalars().all())

    def get_recent(self, limit: int = 20) -> List[RunRecord]:
        result = self.session.execute(
            select(RunRecord).options(selectinload(RunRecord.timings)).order_by(RunRecord.id.desc()).limit(limit)
        )
        return list(result.scalars().all())

    @staticmethod
    def inputs_of(run: RunRecord) -> Dict[str, str]:
        return json.loads(run.inputs)
