from sqlmodel import SQLModel, Field
from datetime import datetime
from typing import Optional
import uuid


class RunLog(SQLModel, table=True):
    """Ledger entry for one CLI invocation."""

    __tablename__ = "run_logs"

    id: str = Field(
        default_factory=lambda: str(uuid.uuid4()),
        primary_key=True,
        description="Unique identifier for the run",
    )
    command: str = Field(
        ...,
        index=True,
        description="Subcommand (predict-eval, group-eval, novelty-eval, recommend, split)",
    )
    preset: Optional[str] = Field(
        default=None,
        index=True,
        description="Preset name when the config came from a shipped preset",
    )
    config_hash: str = Field(
        ...,
        index=True,
        description="SHA256 of the canonical JSON of the resolved experiment config",
    )
    seed: Optional[int] = Field(
        default=None,
        description="Split seed of the run",
    )
    workers: int = Field(
        default=1,
        description="Worker threads used",
    )
    output_path: Optional[str] = Field(
        default=None,
        description="Report file, or None when written to stdout",
    )
    rows_written: Optional[int] = Field(
        default=None,
        description="Data rows in the emitted report",
    )
    duration_ms: Optional[int] = Field(
        default=None,
        description="Wall time of the command in milliseconds",
    )
    status: str = Field(
        default="success",
        description="Status of the run (success, error)",
    )
    error_message: Optional[str] = Field(
        default=None,
        description="Error message if the run failed",
    )
    created_at: datetime = Field(
        default_factory=datetime.utcnow,
        description="Timestamp of the run",
    )
