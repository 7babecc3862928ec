"""Ledger engine and session management."""

from pathlib import Path
from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from core.config import settings
from core.logger import log
from database.models import Base


def _ensure_sqlite_dir(url: str) -> None:
    if url.startswith("sqlite:///") and ":memory:" not in url:
        Path(url.replace("sqlite:///", "", 1)).parent.mkdir(parents=True, exist_ok=True)


def make_engine(url: Optional[str] = None) -> Engine:
    """Engine for the ledger URL (argument, then SPECMINE_LEDGER_URL)."""
    url = url or settings.SPECMINE_LEDGER_URL
    if not url:
        raise ValueError("No ledger URL configured")
    _ensure_sqlite_dir(url)
    return create_engine(url, echo=False, future=True)


def init_db(engine: Engine) -> sessionmaker:
    """Create all tables and return a session factory bound to the engine."""
    try:
        Base.metadata.create_all(engine)
        log.debug(f"Ledger initialized at {engine.url}")
    except Exception as e:
        log.error(f"Failed to initialize ledger: {e}")
        raise
    return sessionmaker(engine, class_=Session, expire_on_commit=False)


def get_session(factory: sessionmaker) -> Iterator[Session]:
    """Yield a session that is closed afterwards."""
    session = factory()
    try:
        yield session
    finally:
        session.close()
