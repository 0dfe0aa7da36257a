"""Append-only response cache keyed by prompt hash.

Record-lines (JSONL) so every exchange with the model stays auditable;
re-running a pipeline against a warm cache performs zero provider calls.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from typing import Optional


def prompt_hash(model_id: str, prompt: str, temperature: float) -> str:
    """Stable digest of (model, prompt text, temperature)."""
    payload = f"{model_id}\x1f{temperature!r}\x1f{prompt}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RawResponse:
    provider_id: str
    model_id: str
    prompt_hash: str
    response_text: str
    timestamp: str
    from_cache: bool = False

    def as_cached(self) -> "RawResponse":
        return dataclasses.replace(self, from_cache=True)


class ResponseCache:
    """JSONL-backed cache; writes are serialized through a single lock."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._lock = threading.Lock()
        self._records: dict[str, RawResponse] = {}
        if os.path.exists(self.path):
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{self.path}:{lineno}: corrupt cache record: {exc}") from exc
                self._records[rec["prompt_hash"]] = RawResponse(
                    provider_id=rec["provider_id"],
                    model_id=rec["model_id"],
                    prompt_hash=rec["prompt_hash"],
                    response_text=rec["response_text"],
                    timestamp=rec["timestamp"],
                    from_cache=False,
                )

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> Optional[RawResponse]:
        with self._lock:
            rec = self._records.get(key)
        return rec.as_cached() if rec is not None else None

    def put(self, response: RawResponse) -> None:
        record = {
            "provider_id": response.provider_id,
            "model_id": response.model_id,
            "prompt_hash": response.prompt_hash,
            "response_text": response.response_text,
            "timestamp": response.timestamp,
        }
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._records[response.prompt_hash] = dataclasses.replace(
                response, from_cache=False
            )
