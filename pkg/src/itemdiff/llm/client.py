"""Deterministic request layer: caching, bounded retries, batch extraction."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Mapping, Optional

from .cache import RawResponse, ResponseCache, prompt_hash
from .provider import RateLimitError, TransportError

DEFAULT_RETRIES = 3


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def request(
    provider,
    prompt: str,
    *,
    model_id: str,
    temperature: float = 0.0,
    cache: Optional[ResponseCache] = None,
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 0.5,
) -> RawResponse:
    """One provider call with cache lookup and bounded exponential backoff.

    Only transport and rate-limit errors are retried; after ``retries``
    attempts the last error is re-raised with the attempt count.  A cache
    hit returns the stored text byte-identically with ``from_cache=True``.
    """
    key = prompt_hash(model_id, prompt, temperature)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit

    last: Exception | None = None
    for attempt in range(retries):
        try:
            text = provider.complete(prompt, model_id, temperature)
            break
        except (TransportError, RateLimitError) as exc:
            last = exc
            if attempt + 1 < retries and backoff_base > 0:
                time.sleep(backoff_base * (2 ** attempt))
    else:
        assert last is not None
        kind = type(last)
        raise kind(f"{last} (after {retries} attempts)") from last

    response = RawResponse(
        provider_id=provider.provider_id,
        model_id=model_id,
        prompt_hash=key,
        response_text=text,
        timestamp=_now_iso(),
        from_cache=False,
    )
    if cache is not None:
        cache.put(response)
    return response


def run_requests(
    prompts: Mapping[str, str],
    provider,
    *,
    model_id: str,
    temperature: float = 0.0,
    cache: Optional[ResponseCache] = None,
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 0.5,
    concurrency: int = 1,
) -> tuple[dict[str, RawResponse], list[tuple[str, str]]]:
    """Request every prompt (keyed by item id); collect per-item failures.

    Returns (responses by item id, [(item id, error message), ...]).
    Provider calls may run concurrently up to ``concurrency``; cache writes
    stay serialized inside the cache, and results are collected in input
    order regardless of completion order.
    """
    item_ids = list(prompts)

    def one(item_id: str):
        return request(
            provider,
            prompts[item_id],
            model_id=model_id,
            temperature=temperature,
            cache=cache,
            retries=retries,
            backoff_base=backoff_base,
        )

    responses: dict[str, RawResponse] = {}
    errors: list[tuple[str, str]] = []
    if concurrency <= 1:
        outcomes = []
        for item_id in item_ids:
            try:
                outcomes.append((item_id, one(item_id), None))
            except Exception as exc:
                outcomes.append((item_id, None, f"{type(exc).__name__}: {exc}"))
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {item_id: pool.submit(one, item_id) for item_id in item_ids}
        outcomes = []
        for item_id in item_ids:
            try:
                outcomes.append((item_id, futures[item_id].result(), None))
            except Exception as exc:
                outcomes.append((item_id, None, f"{type(exc).__name__}: {exc}"))
    for item_id, response, error in outcomes:
        if error is None:
            responses[item_id] = response
        else:
            errors.append((item_id, error))
    return responses, errors
