import json
import hashlib
import logging
from datetime import datetime
from typing import Optional

from sqlmodel import Session

from app.db.models import RunLog

logger = logging.getLogger(__name__)


def compute_config_hash(config_data: dict) -> str:
    """SHA256 of the canonical JSON of a config mapping (key order does not matter)."""
    canonical_json = json.dumps(config_data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical_json.encode("utf-8")).hexdigest()


def log_run(
    session: Session,
    command: str,
    config_data: dict,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    workers: int = 1,
    output_path: Optional[str] = None,
    rows_written: Optional[int] = None,
    duration_ms: Optional[int] = None,
    status: str = "success",
    error_message: Optional[str] = None,
) -> RunLog:
    """
    Record one CLI invocation in the run ledger.

    Args:
        session: Ledger session
        command: Subcommand name
        config_data: Resolved experiment config as a JSON-compatible mapping
        preset: Preset name, if any
        seed: Split seed
        workers: Worker threads used
        output_path: Report path (None for stdout)
        rows_written: Data rows in the report
        duration_ms: Wall time in milliseconds
        status: "success" or "error"
        error_message: Failure message for error runs

    Returns:
        The stored RunLog entry
    """
    entry = RunLog(
        command=command,
        preset=preset,
        config_hash=compute_config_hash(config_data),
        seed=seed,
        workers=workers,
        output_path=output_path,
        rows_written=rows_written,
        duration_ms=duration_ms,
        status=status,
        error_message=error_message,
        created_at=datetime.utcnow(),
    )
    session.add(entry)
    session.commit()
    session.refresh(entry)
    logger.debug(f"Logged {command} run {entry.id} ({status})")
    return entry
