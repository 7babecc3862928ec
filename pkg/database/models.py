"""SQLAlchemy models for the run ledger."""

from datetime import datetime
from typing import Optional

from sqlalchemy import DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    """Base class for all models."""
    pass


class RunRecord(Base):
    """One invocation of a pipeline subcommand."""

    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    manifest_hash: Mapped[str] = mapped_column(String(64), index=True, nullable=False)
    command: Mapped[str] = mapped_column(String(32), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, default=0, nullable=False)
    tool_version: Mapped[str] = mapped_column(String(32), nullable=False)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, nullable=False)
    inputs: Mapped[str] = mapped_column(Text, default="{}", nullable=False)  # JSON object
    status: Mapped[str] = mapped_column(String(16), default="running", nullable=False)  # running, ok, failed
    error: Mapped[Optional[str]] = mapped_column(Text, nullable=True)

    timings: Mapped[list["StageTiming"]] = relationship(
        "StageTiming",
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="StageTiming.id"
    )

    def __repr__(self) -> str:
        return f"<RunRecord(id={self.id}, command={self.command}, hash={self.manifest_hash[:12]}, status={self.status})>"


class StageTiming(Base):
    __tablename__ = "stage_timings"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.id"), nullable=False)
    stage: Mapped[str] = mapped_column(String(32), nullable=False)
    seconds: Mapped[float] = mapped_column(Float, nullable=False)

    run: Mapped["RunRecord"] = relationship("RunRecord", back_populates="timings")

    def __repr__(self) -> str:
        return f"<StageTiming(run_id={self.run_id}, stage={self.stage}, seconds={self.seconds:.3f})>"
