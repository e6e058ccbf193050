"""Append-only audit log of everything that crosses the remote boundary."""

import logging
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict

from src.base.jsonl import JsonlWriter
from src.privacy.payload import ScanResult, ScanStatus

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    TO_REMOTE = "TO_REMOTE"
    TO_LOCAL = "TO_LOCAL"


class AuditEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: str
    direction: Direction
    stage: str
    payload_digest: str
    scan_result: ScanStatus
    detail: Optional[str] = None
    response_digest: Optional[str] = None
    error: Optional[str] = None
    config_digest: Optional[str] = None


class AuditWriter:
    """Single writer for the audit log; one entry per remote call, written under a lock."""

    def __init__(self, path: Optional[Path] = None, config_digest: Optional[str] = None):
        self.config_digest = config_digest
        self._writer = JsonlWriter(path) if path else None
        self.entries: List[AuditEntry] = []

    def record(self, direction: Direction, stage: str, payload_digest: str, scan: ScanResult,
               response_digest: Optional[str] = None, error: Optional[str] = None) -> AuditEntry:
        entry = AuditEntry(
            timestamp=datetime.now(timezone.utc).isoformat(),
            direction=direction,
            stage=stage,
            payload_digest=payload_digest,
            scan_result=scan.status,
            detail=scan.detail,
            response_digest=response_digest,
            error=error,
            config_digest=self.config_digest,
        )
        if self._writer is not None:
            self._writer.append(entry.model_dump(mode="json"))
        self.entries.append(entry)
        if scan.status is ScanStatus.VIOLATION:
            logger.error(f"🚫 Outbound scan violation on {stage}: {scan.detail}")
        return entry

    @property
    def count(self) -> int:
        return len(self.entries)
