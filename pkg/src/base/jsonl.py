"""
JSON-lines helpers shared by every artifact writer (bench, traces, audit, wire log).
"""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Iterable, Iterator, List

from src.base.errors import IngestionError

logger = logging.getLogger(__name__)


def canonical_json(data: Any) -> str:
    """Stable rendering used for digests and byte-identical artifacts."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(data: Any) -> str:
    if isinstance(data, bytes):
        raw = data
    elif isinstance(data, str):
        raw = data.encode("utf-8")
    else:
        raw = canonical_json(data).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()


def read_jsonl(path: Path) -> Iterator[dict]:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestionError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e


def write_jsonl(path: Path, rows: Iterable[Any]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(canonical_json(row) + "\n")
            count += 1
    return count


class JsonlWriter:
    """
    Append-only JSON-lines writer, safe to share between worker threads.
    All writes go through one lock so lines never interleave.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._count = 0

    def append(self, row: Any) -> None:
        line = canonical_json(row) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
            self._count += 1

    @property
    def count(self) -> int:
        return self._count

    def read_all(self) -> List[dict]:
        if not self.path.exists():
            return []
        return list(read_jsonl(self.path))
