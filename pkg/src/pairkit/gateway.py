"""Enrichment of response pools with logprobs and rewards over HTTP.

Scoring is separated from pair selection so a corpus can be enriched once
and re-paired many times under different strategies. Two request
templates are built in; both POST JSON to the configured URL:

``completion_logprobs``
    request  ``{"model": str, "prompt": str, "completion": str}``
    response ``{"token_logprobs": [float, ...], "tokens": [...]?}``
    The stored logprob is the sum of ``token_logprobs``. When the echoed
    ``tokens`` disagree in count with the locally held tokens, a warning
    is logged; the fetch still succeeds.

``scalar_reward``
    request  ``{"model": str, "prompt": str, "response": str}``
    response ``{"score": float}``

Custom endpoints are mapped with ``request_template="custom"``: the
request body is ``custom_request`` with ``$prompt``/``$response``/
``$model`` placeholders substituted, and the value is pulled from the
response with the dotted-path selector ``custom_response_path`` (for
example ``"choices.0.logprobs.token_logprobs"``). A list-valued
extraction is summed; a number is stored as-is.

Fixture mode replaces the network entirely: a JSON file with
``{"logprobs": {<response text>: [floats] | float},
"rewards": {<response text>: float}}`` serves the values, which keeps
the full pipeline testable offline.

Fetched values are cached in a content-addressed on-disk directory keyed
by (prompt, response text, model name); repeated runs over the same
corpus touch the network zero times. Requests within a pool run under a
bounded thread pool and are joined back by response index, so output
order never depends on concurrency.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import requests

from .data import Response, ResponsePool

__all__ = [
    "RetryPolicy",
    "EndpointConfig",
    "GatewayError",
    "cache_key",
    "fetch_logprobs",
    "fetch_rewards",
    "post_json",
    "extract_path",
    "substitute_template",
]

logger = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    """A fetch failed permanently; the message names the response."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    def delay(self, attempt: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt - 1, len(self.backoff) - 1)]


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to fetch scores; fixture mode bypasses the network."""

    base_url: str = ""
    auth_token: str | None = None
    model_name: str = "default"
    request_template: str = ""  # empty: use the operation's default
    max_concurrency: int = 4
    timeout: float = 30.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    fixture_path: str | None = None
    cache_dir: str | None = None
    custom_request: dict[str, Any] | None = None
    custom_response_path: str | None = None

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if not self.base_url and self.fixture_path is None:
            raise ValueError("EndpointConfig needs a base_url or a fixture_path")


def cache_key(prompt: str, response_text: str, model_name: str) -> str:
    """Deterministic collision-resistant digest of the scoring inputs."""
    payload = json.dumps([prompt, response_text, model_name], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def extract_path(obj: Any, path: str) -> Any:
    """Follow a dotted path through nested dicts and lists."""
    cur = obj
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, dict):
            cur = cur[part]
        else:
            raise KeyError(path)
    return cur


def substitute_template(template: Any, values: dict[str, str]) -> Any:
    """Fill ``$name`` placeholders in a JSON-shaped request template."""
    if isinstance(template, str):
        out = template
        for name, val in values.items():
            if out == name:
                return val  # whole-field substitution keeps non-str payloads intact
            out = out.replace(name, val)
        return out
    if isinstance(template, dict):
        return {k: substitute_template(v, values) for k, v in template.items()}
    if isinstance(template, list):
        return [substitute_template(v, values) for v in template]
    return template


class _DiskCache:
    """Content-addressed key-value directory; concurrent readers are safe."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, kind: str, key: str) -> Path:
        return self.root / kind / key[:2] / f"{key}.json"

    def get(self, kind: str, key: str) -> Any | None:
        path = self._path(kind, key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["value"]
        except FileNotFoundError:
            return None

    def put(self, kind: str, key: str, value: Any) -> None:
        path = self._path(kind, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump({"value": value}, fh)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _load_fixture(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def post_json(url: str, body: dict[str, Any], config: EndpointConfig, *, context: str) -> Any:
    """POST a JSON body with the configured retries; returns the parsed reply.

    Server errors (5xx) and transport failures are retried per the retry
    policy; client errors and malformed JSON fail immediately.
    """
    headers = {"Content-Type": "application/json"}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"
    attempts = config.retry.max_attempts
    for attempt in range(1, attempts + 1):
        try:
            reply = requests.post(url, json=body, headers=headers, timeout=config.timeout)
        except requests.RequestException as exc:
            if attempt == attempts:
                raise GatewayError(f"{context}: transport failure after {attempts} attempts: {exc}") from exc
            logger.warning("%s: transport error (attempt %d/%d), retrying: %s", context, attempt, attempts, exc)
            time.sleep(config.retry.delay(attempt))
            continue
        if reply.status_code >= 500:
            if attempt == attempts:
                raise GatewayError(f"{context}: server error {reply.status_code} after {attempts} attempts")
            logger.warning("%s: server error %d (attempt %d/%d), retrying", context, reply.status_code, attempt, attempts)
            time.sleep(config.retry.delay(attempt))
            continue
        if reply.status_code >= 400:
            raise GatewayError(f"{context}: client error {reply.status_code}")
        try:
            return reply.json()
        except ValueError as exc:
            raise GatewayError(f"{context}: malformed endpoint JSON") from exc
    raise GatewayError(f"{context}: no attempts made")  # pragma: no cover


def _fetch_logprob_value(pool: ResponsePool, resp: Response, config: EndpointConfig) -> float:
    context = f"logprobs for response {resp.id!r}"
    if config.fixture_path is not None:
        table = _load_fixture(config.fixture_path).get("logprobs", {})
        if resp.text not in table:
            raise GatewayError(f"{context}: fixture has no entry for this response text")
        value = table[resp.text]
        return float(sum(value)) if isinstance(value, list) else float(value)
    template = config.request_template or "completion_logprobs"
    if template == "completion_logprobs":
        body: dict[str, Any] = {
            "model": config.model_name,
            "prompt": pool.prompt,
            "completion": resp.text,
        }
        reply = post_json(config.base_url, body, config, context=context)
        if not isinstance(reply, dict) or "token_logprobs" not in reply:
            raise GatewayError(f"{context}: endpoint reply lacks 'token_logprobs'")
        per_token = reply["token_logprobs"]
        echoed = reply.get("tokens")
        if echoed is not None and len(echoed) != len(resp.tokens):
            logger.warning(
                "%s: endpoint echoed %d tokens but the pool holds %d",
                context, len(echoed), len(resp.tokens),
            )
        return float(sum(per_token))
    if template == "custom":
        return _fetch_custom(pool, resp, config, context, sum_lists=True)
    raise GatewayError(f"{context}: unknown request template {template!r}")


def _fetch_reward_value(pool: ResponsePool, resp: Response, config: EndpointConfig) -> float:
    context = f"reward for response {resp.id!r}"
    if config.fixture_path is not None:
        table = _load_fixture(config.fixture_path).get("rewards", {})
        if resp.text not in table:
            raise GatewayError(f"{context}: fixture has no entry for this response text")
        return float(table[resp.text])
    template = config.request_template or "scalar_reward"
    if template == "scalar_reward":
        body: dict[str, Any] = {
            "model": config.model_name,
            "prompt": pool.prompt,
            "response": resp.text,
        }
        reply = post_json(config.base_url, body, config, context=context)
        if not isinstance(reply, dict) or "score" not in reply:
            raise GatewayError(f"{context}: endpoint reply lacks 'score'")
        return float(reply["score"])
    if template == "custom":
        return _fetch_custom(pool, resp, config, context, sum_lists=False)
    raise GatewayError(f"{context}: unknown request template {template!r}")


def _fetch_custom(
    pool: ResponsePool,
    resp: Response,
    config: EndpointConfig,
    context: str,
    sum_lists: bool,
) -> float:
    if config.custom_request is None or config.custom_response_path is None:
        raise GatewayError(f"{context}: custom template needs custom_request and custom_response_path")
    body = substitute_template(
        config.custom_request,
        {"$prompt": pool.prompt, "$response": resp.text, "$model": config.model_name},
    )
    reply = post_json(config.base_url, body, config, context=context)
    try:
        value = extract_path(reply, config.custom_response_path)
    except (KeyError, IndexError, ValueError) as exc:
        raise GatewayError(f"{context}: selector {config.custom_response_path!r} not found in reply") from exc
    if isinstance(value, list):
        if not sum_lists:
            raise GatewayError(f"{context}: expected a number, got a list")
        return float(sum(value))
    return float(value)


def _enrich(
    pool: ResponsePool,
    config: EndpointConfig,
    kind: str,
    have: Callable[[Response], bool],
    fetch: Callable[[ResponsePool, Response, EndpointConfig], float],
    apply: Callable[[Response, float], Response],
) -> ResponsePool:
    todo = [i for i, resp in enumerate(pool.responses) if not have(resp)]
    if not todo:
        return pool
    cache = _DiskCache(config.cache_dir) if config.cache_dir else None

    def resolve(idx: int) -> float:
        resp = pool.responses[idx]
        key = cache_key(pool.prompt, resp.text, config.model_name)
        if cache is not None:
            hit = cache.get(kind, key)
            if hit is not None:
                return float(hit)
        value = fetch(pool, resp, config)
        if cache is not None:
            cache.put(kind, key, value)
        return value

    if config.max_concurrency > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool_exec:
            values = list(pool_exec.map(resolve, todo))
    else:
        values = [resolve(i) for i in todo]
    updated = list(pool.responses)
    for idx, value in zip(todo, values):
        updated[idx] = apply(updated[idx], value)
    return dataclasses.replace(pool, responses=tuple(updated))


def fetch_logprobs(pool: ResponsePool, config: EndpointConfig) -> ResponsePool:
    """Fill missing logprobs; already-present values are kept untouched."""
    return _enrich(
        pool,
        config,
        kind="logprobs",
        have=lambda r: r.logprob is not None,
        fetch=_fetch_logprob_value,
        apply=lambda r, v: dataclasses.replace(r, logprob=v),
    )


def fetch_rewards(pool: ResponsePool, config: EndpointConfig) -> ResponsePool:
    """Fill missing rewards; already-present values are kept untouched."""
    return _enrich(
        pool,
        config,
        kind="rewards",
        have=lambda r: r.reward is not None,
        fetch=_fetch_reward_value,
        apply=lambda r, v: dataclasses.replace(r, reward=v),
    )
