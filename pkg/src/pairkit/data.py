"""Data model for prompts, response pools, and preference pairs.

Pools are read and written as JSON Lines, one pool per line:

    {"prompt_id": str, "prompt": str,
     "responses": [{"id": str, "source": str, "text": str,
                    "tokens": [int|str]?, "logprob": float?, "reward": float?}]}

Selected pairs are written one per line with a fixed field order:

    {"prompt_id": str, "strategy": str, "chosen": <response>,
     "rejected": <response>,
     "metrics": {"e_delta": int, "p_delta": float, "r_delta": float,
                 "dcrm": float}}

Tokens are opaque symbols compared only by equality; they may arrive as
integers or strings. Records without a ``tokens`` field fall back to
whitespace-splitting ``text``. All types are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

Token = int | str

__all__ = [
    "Token",
    "Response",
    "ResponsePool",
    "PreferencePair",
    "Violation",
    "PoolFormatError",
    "tokenize_whitespace",
    "parse_pool_file",
    "parse_pairs_file",
    "validate_pool",
    "write_pools",
    "write_pairs",
    "pair_to_dict",
    "pool_to_dict",
]


class PoolFormatError(ValueError):
    """A pool file line could not be turned into a valid ResponsePool."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def tokenize_whitespace(text: str) -> tuple[str, ...]:
    """Fallback tokenizer: split on whitespace runs.

    Idempotent under re-joining with single spaces.
    """
    return tuple(text.split())


@dataclass(frozen=True)
class Response:
    """One candidate response with optional reference-model and reward scores.

    ``logprob`` is the raw sum of per-token conditional log-probabilities
    under the reference model (no length normalization). Both scores are
    absent until an enrichment stage fills them.
    """

    id: str
    source: str
    text: str
    tokens: tuple[Token, ...]
    logprob: float | None = None
    reward: float | None = None

    @property
    def scored(self) -> bool:
        return self.logprob is not None and self.reward is not None


@dataclass(frozen=True)
class ResponsePool:
    """A prompt plus its candidate responses, in ingestion order.

    Response order is preserved exactly as ingested; downstream
    tie-breaking depends on it.
    """

    prompt_id: str
    prompt: str
    responses: tuple[Response, ...]


@dataclass(frozen=True)
class PreferencePair:
    """A chosen/rejected response pair with its metrics and provenance."""

    prompt_id: str
    chosen: Response
    rejected: Response
    metrics: "Any"  # PairMetrics; typed loosely to avoid a circular import
    strategy: str

    def __post_init__(self) -> None:
        if self.chosen.id == self.rejected.id:
            raise ValueError(
                f"pair for prompt {self.prompt_id!r} selects response "
                f"{self.chosen.id!r} on both sides"
            )


@dataclass(frozen=True)
class Violation:
    """One data-invariant breach found by validation."""

    prompt_id: str
    message: str
    response_id: str | None = None

    def __str__(self) -> str:
        where = self.prompt_id if self.response_id is None else f"{self.prompt_id}/{self.response_id}"
        return f"{where}: {self.message}"


def _parse_response(obj: Any, line_no: int, idx: int) -> Response:
    if not isinstance(obj, dict):
        raise PoolFormatError(line_no, f"responses[{idx}] is not an object")
    for key in ("id", "source", "text"):
        if key not in obj:
            raise PoolFormatError(line_no, f"responses[{idx}] missing field {key!r}")
        if not isinstance(obj[key], str):
            raise PoolFormatError(line_no, f"responses[{idx}].{key} is not a string")
    raw_tokens = obj.get("tokens")
    if raw_tokens is None:
        tokens: tuple[Token, ...] = tokenize_whitespace(obj["text"])
    elif isinstance(raw_tokens, list) and all(isinstance(t, (int, str)) for t in raw_tokens):
        tokens = tuple(raw_tokens)
    else:
        raise PoolFormatError(line_no, f"responses[{idx}].tokens must be a list of ints or strings")
    for key in ("logprob", "reward"):
        val = obj.get(key)
        if val is not None and not isinstance(val, (int, float)):
            raise PoolFormatError(line_no, f"responses[{idx}].{key} is not a number")
    logprob = obj.get("logprob")
    reward = obj.get("reward")
    return Response(
        id=obj["id"],
        source=obj["source"],
        text=obj["text"],
        tokens=tokens,
        logprob=float(logprob) if logprob is not None else None,
        reward=float(reward) if reward is not None else None,
    )


def _parse_pool_line(line: str, line_no: int) -> ResponsePool:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise PoolFormatError(line_no, f"malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise PoolFormatError(line_no, "line is not a JSON object")
    for key in ("prompt_id", "prompt"):
        if key not in obj or not isinstance(obj[key], str):
            raise PoolFormatError(line_no, f"missing or non-string field {key!r}")
    if "responses" not in obj:
        raise PoolFormatError(line_no, "missing field 'responses'")
    if not isinstance(obj["responses"], list):
        raise PoolFormatError(line_no, "'responses' is not a list")
    responses = tuple(
        _parse_response(r, line_no, i) for i, r in enumerate(obj["responses"])
    )
    return ResponsePool(prompt_id=obj["prompt_id"], prompt=obj["prompt"], responses=responses)


def parse_pool_file(path: str | Path, strict: bool = True) -> list[ResponsePool]:
    """Parse a JSONL pool file, preserving file order.

    Structural problems (bad JSON, missing fields, wrong types) always
    raise :class:`PoolFormatError` naming the offending line. With
    ``strict`` (the default), pool-level invariant breaches (fewer than 2
    responses, duplicate response ids) also raise; with ``strict=False``
    such pools are returned as-is so :func:`validate_pool` can report them
    as violations instead.
    """
    pools: list[ResponsePool] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            pool = _parse_pool_line(line, line_no)
            if strict:
                if len(pool.responses) < 2:
                    raise PoolFormatError(line_no, f"pool {pool.prompt_id!r} has fewer than 2 responses")
                seen: set[str] = set()
                for resp in pool.responses:
                    if resp.id in seen:
                        raise PoolFormatError(line_no, f"pool {pool.prompt_id!r} has duplicate response id {resp.id!r}")
                    seen.add(resp.id)
            pools.append(pool)
    return pools


def parse_pairs_file(path: str | Path) -> list[PreferencePair]:
    """Parse a pair JSONL file written by :func:`write_pairs`."""
    from .metrics import PairMetrics  # deferred: metrics imports this module

    pairs: list[PreferencePair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PoolFormatError(line_no, f"malformed JSON ({exc.msg})") from exc
            try:
                metrics_obj = obj["metrics"]
                metrics = PairMetrics(
                    e_delta=int(metrics_obj["e_delta"]),
                    p_delta=float(metrics_obj["p_delta"]),
                    r_delta=float(metrics_obj["r_delta"]),
                    dcrm=float(metrics_obj["dcrm"]),
                )
                pair = PreferencePair(
                    prompt_id=obj["prompt_id"],
                    chosen=_parse_response(obj["chosen"], line_no, 0),
                    rejected=_parse_response(obj["rejected"], line_no, 1),
                    metrics=metrics,
                    strategy=obj["strategy"],
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise PoolFormatError(line_no, f"bad pair record: {exc}") from exc
            pairs.append(pair)
    return pairs


def validate_pool(pool: ResponsePool, require_scores: bool = False) -> list[Violation]:
    """Check a pool against the type invariants; violations are data, not errors.

    With ``require_scores``, every response must carry both ``logprob``
    and ``reward`` (one violation per missing field).
    """
    out: list[Violation] = []
    if len(pool.responses) < 2:
        out.append(Violation(pool.prompt_id, f"pool has {len(pool.responses)} responses, need at least 2"))
    seen: set[str] = set()
    for resp in pool.responses:
        if resp.id in seen:
            out.append(Violation(pool.prompt_id, f"duplicate response id {resp.id!r}", resp.id))
        seen.add(resp.id)
        if resp.text and not resp.tokens:
            out.append(Violation(pool.prompt_id, "nonempty text but empty tokens", resp.id))
        if resp.logprob is not None and resp.logprob > 0:
            out.append(Violation(pool.prompt_id, f"logprob {resp.logprob} is positive", resp.id))
        if require_scores:
            if resp.logprob is None:
                out.append(Violation(pool.prompt_id, "missing logprob", resp.id))
            if resp.reward is None:
                out.append(Violation(pool.prompt_id, "missing reward", resp.id))
    return out


def _response_to_dict(resp: Response) -> dict[str, Any]:
    out: dict[str, Any] = {
        "id": resp.id,
        "source": resp.source,
        "text": resp.text,
        "tokens": list(resp.tokens),
    }
    if resp.logprob is not None:
        out["logprob"] = resp.logprob
    if resp.reward is not None:
        out["reward"] = resp.reward
    return out


def pool_to_dict(pool: ResponsePool) -> dict[str, Any]:
    return {
        "prompt_id": pool.prompt_id,
        "prompt": pool.prompt,
        "responses": [_response_to_dict(r) for r in pool.responses],
    }


def pair_to_dict(pair: PreferencePair) -> dict[str, Any]:
    """Pair record with the documented fixed field order."""
    return {
        "prompt_id": pair.prompt_id,
        "strategy": pair.strategy,
        "chosen": _response_to_dict(pair.chosen),
        "rejected": _response_to_dict(pair.rejected),
        "metrics": {
            "e_delta": pair.metrics.e_delta,
            "p_delta": pair.metrics.p_delta,
            "r_delta": pair.metrics.r_delta,
            "dcrm": pair.metrics.dcrm,
        },
    }


def _dump_jsonl(records: Iterable[dict[str, Any]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def write_pools(pools: Sequence[ResponsePool], path: str | Path) -> None:
    """Serialize pools back to JSONL; output is byte-stable for equal input."""
    _dump_jsonl((pool_to_dict(p) for p in pools), path)


def write_pairs(pairs: Sequence[PreferencePair], path: str | Path) -> None:
    """Write pairs as JSONL in input order; byte-identical across runs."""
    _dump_jsonl((pair_to_dict(p) for p in pairs), path)
