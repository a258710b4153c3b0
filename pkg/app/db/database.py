from functools import lru_cache
from typing import Iterator

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from app.core.config import get_settings


@lru_cache
def get_engine() -> Engine:
    """Engine for the run ledger, created on first use."""
    settings = get_settings()
    return create_engine(settings.run_audit_database_url, echo=settings.debug)


def init_db() -> None:
    """Create the ledger tables if they do not exist."""
    SQLModel.metadata.create_all(get_engine())


def get_session() -> Iterator[Session]:
    with Session(get_engine()) as session:
        yield session
