"""LLM providers: a chat-completion HTTP client and the offline mock.

The mock resolves responses from fixture files keyed by item id (parsed
from the ``Item ID:`` line every packaged template emits) and can fall
back to seeded pseudo-random but contract-valid answers for synthetic
items.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from typing import Mapping, Optional

import numpy as np
import requests

from .schema import FeatureSchema, OVERALL_HI, OVERALL_LO, builtin_schema
from .templates import FEATURE_PROMPT_MARKER


class ProviderError(Exception):
    """Base class for provider failures."""


class TransportError(ProviderError):
    """Network-level failure (connection, timeout, 5xx); retryable."""


class RateLimitError(ProviderError):
    """Provider rate limiting (HTTP 429); retryable."""


class ProviderPayloadError(ProviderError):
    """Provider answered but the payload is unusable; not retryable."""


class HttpProvider:
    """Chat-completion-style endpoint client.

    The API key is read from the named environment variable at call time
    and never appears in configuration files.
    """

    provider_id = "http"

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "ITEMDIFF_API_KEY",
        timeout: float = 120.0,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, prompt: str, model_id: str, temperature: float) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimitError("provider returned HTTP 429 (rate limited)")
        if resp.status_code >= 500:
            raise TransportError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderPayloadError(
                f"provider returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderPayloadError(f"malformed completion payload: {exc}") from exc
        if not isinstance(content, str):
            raise ProviderPayloadError("completion content is not text")
        return content


_ITEM_ID_RE = re.compile(r"^Item ID:\s*(\S+)\s*$", re.MULTILINE)
_SUBJECT_RE = re.compile(r"^Subject:\s*(\S+)\s*$", re.MULTILINE)


class MockProvider:
    """Offline deterministic provider for tests and dry runs.

    ``fixtures`` maps item id -> {"direct": text, "features": text}; it can
    be given inline or as a path to a JSON file.  With ``fallback_seed``
    set, items absent from the fixtures get seeded pseudo-random answers
    that satisfy the answer contract of the packaged templates.
    """

    provider_id = "mock"

    def __init__(
        self,
        fixtures: Mapping[str, Mapping[str, str]] | str | os.PathLike | None = None,
        fallback_seed: Optional[int] = None,
        schemas: Optional[Mapping[str, FeatureSchema]] = None,
    ):
        if fixtures is None:
            self.fixtures: dict = {}
        elif isinstance(fixtures, (str, os.PathLike)):
            with open(fixtures, encoding="utf-8") as fh:
                self.fixtures = json.load(fh)
        else:
            self.fixtures = {k: dict(v) for k, v in fixtures.items()}
        self.fallback_seed = fallback_seed
        self._schemas = dict(schemas) if schemas is not None else None
        self.calls = 0

    def _schema(self, subject: str) -> FeatureSchema:
        if self._schemas is None:
            self._schemas = {}
        if subject not in self._schemas:
            self._schemas[subject] = builtin_schema(subject)
        return self._schemas[subject]

    def complete(self, prompt: str, model_id: str, temperature: float) -> str:
        self.calls += 1
        id_match = _ITEM_ID_RE.search(prompt)
        if not id_match:
            raise ProviderPayloadError("mock provider: no 'Item ID:' line in prompt")
        item_id = id_match.group(1)
        kind = "features" if FEATURE_PROMPT_MARKER in prompt else "direct"
        entry = self.fixtures.get(item_id, {})
        if kind in entry:
            return entry[kind]
        if self.fallback_seed is None:
            raise ProviderPayloadError(
                f"mock provider: no {kind!r} fixture for item {item_id!r}"
            )
        subject_match = _SUBJECT_RE.search(prompt)
        if not subject_match:
            raise ProviderPayloadError("mock provider: no 'Subject:' line in prompt")
        return self._fallback(item_id, kind, subject_match.group(1))

    def _fallback(self, item_id: str, kind: str, subject: str) -> str:
        digest = hashlib.sha256(
            f"{self.fallback_seed}\x1f{item_id}\x1f{kind}".encode("utf-8")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        rating = int(rng.integers(OVERALL_LO, OVERALL_HI + 1))
        if kind == "direct":
            return f"Mock analysis for item {item_id}.\nRATING: {rating}"
        lines = []
        for q in self._schema(subject).questions:
            if q.kind == "binary":
                value = "Y" if rng.integers(0, 2) else "N"
            else:
                value = str(int(rng.integers(q.lo, q.hi + 1)))
            lines.append(f"{q.key}: {value}")
        lines.append(f"RATING: {rating}")
        return "\n".join(lines)
