"""Best-of-N^2 pair selection over response pools.

For each pool the engine scores ordered response pairs (i, j), i != j,
under the configured objective and returns the maximizer as the
(chosen, rejected) pair:

* ``dcrm_bon2``     - maximize the distance-calibrated reward margin
* ``r_only_bon2``   - maximize the raw reward margin
* ``distance_only`` - maximize 1/(distance + epsilon), reward ignored
* ``max_margin``    - the conventional baseline: chosen is the response
  with the highest reward, rejected the one with the lowest

Ties are broken toward the lexicographically smallest (i, j) of pool
positions, so runs are reproducible. ``cross_source`` restricts the
enumerating strategies to pairs whose members come from different
sources; the max-margin baseline is defined without that filter and
ignores it. Distances are symmetric, so the engine computes them once
per unordered pair; this is unobservable next to full ordered
enumeration.

Pools are processed independently and may be handled by a worker pool;
output is identical to sequential processing for any worker count.

Pool size N is whatever the pool holds; there is no hard cap. Selection
costs O(N^2 * L^2 / w) per pool for responses of L tokens and machine
word width w (the bit-parallel edit-distance path), which is small next
to the upstream cost of sampling and reward-scoring the responses.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import PreferencePair, ResponsePool
from .metrics import (
    FULL_DCRM,
    DcrmVariant,
    PairMetrics,
    dcrm,
    edit_distance,
    logprob_diff,
    reward_margin,
)

__all__ = [
    "Strategy",
    "PairingConfig",
    "SelectionSkip",
    "SelectionReport",
    "PairingError",
    "select_pair",
    "select_all",
]


class Strategy(str, enum.Enum):
    DCRM_BON2 = "dcrm_bon2"
    MAX_MARGIN = "max_margin"
    R_ONLY_BON2 = "r_only_bon2"
    DISTANCE_ONLY = "distance_only"


class PairingError(RuntimeError):
    """Selection failed for a pool; the message names the pool."""


@dataclass(frozen=True)
class PairingConfig:
    strategy: Strategy = Strategy.DCRM_BON2
    variant: DcrmVariant = FULL_DCRM
    cross_source: bool = False
    epsilon: float = 1.0
    min_margin: float | None = None

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.strategy is Strategy.DISTANCE_ONLY and self.variant.use_r:
            raise ValueError("distance_only requires a variant without the reward term")


@dataclass(frozen=True)
class SelectionSkip:
    """Marker for a pool where no candidate pair satisfied the constraints."""

    prompt_id: str
    reason: str


def _require_scored(pool: ResponsePool) -> None:
    missing = [r.id for r in pool.responses if not r.scored]
    if missing:
        raise PairingError(
            f"pool {pool.prompt_id}: unscored responses: {', '.join(missing)}"
        )


def _select_max_margin(pool: ResponsePool, config: PairingConfig) -> PreferencePair | SelectionSkip:
    rewards = [r.reward for r in pool.responses]
    best = rewards.index(max(rewards))
    worst = rewards.index(min(rewards))
    if worst == best:
        # All rewards equal; the first max and first min coincide, so take
        # the earliest distinct partner, matching the (0, 1) tie-break.
        worst = 0 if best != 0 else 1
    chosen, rejected = pool.responses[best], pool.responses[worst]
    e = edit_distance(chosen.tokens, rejected.tokens)
    p = logprob_diff(chosen.logprob, rejected.logprob)
    r = reward_margin(chosen.reward, rejected.reward)
    if config.min_margin is not None and r < config.min_margin:
        return SelectionSkip(pool.prompt_id, f"reward margin {r} below min_margin {config.min_margin}")
    metrics = PairMetrics(
        e_delta=e,
        p_delta=p,
        r_delta=r,
        dcrm=dcrm(r, e, p, config.epsilon, config.variant),
        epsilon=config.epsilon,
    )
    return PreferencePair(pool.prompt_id, chosen, rejected, metrics, config.strategy.value)


def select_pair(pool: ResponsePool, config: PairingConfig) -> PreferencePair | SelectionSkip:
    """Select one (chosen, rejected) pair from a fully scored pool.

    Returns a :class:`SelectionSkip` instead of a pair when the source
    constraint leaves no candidate or ``min_margin`` excludes every pair.
    """
    if len(pool.responses) < 2:
        raise PairingError(f"pool {pool.prompt_id}: needs at least 2 responses")
    _require_scored(pool)
    if config.strategy is Strategy.MAX_MARGIN:
        return _select_max_margin(pool, config)

    responses = pool.responses
    n = len(responses)
    # Distances are symmetric; compute once per unordered pair, lazily so
    # source-filtered pairs cost nothing.
    dist_cache: dict[tuple[int, int], tuple[int, float]] = {}

    def distances(i: int, j: int) -> tuple[int, float]:
        key = (i, j) if i < j else (j, i)
        got = dist_cache.get(key)
        if got is None:
            a, b = responses[key[0]], responses[key[1]]
            got = (
                edit_distance(a.tokens, b.tokens),
                logprob_diff(a.logprob, b.logprob),
            )
            dist_cache[key] = got
        return got

    best_obj: float | None = None
    best_pair: tuple[int, int] | None = None
    best_metrics: PairMetrics | None = None
    any_candidate = False
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ci, cj = responses[i], responses[j]
            if config.cross_source and ci.source == cj.source:
                continue
            any_candidate = True
            r = reward_margin(ci.reward, cj.reward)
            if config.min_margin is not None and r < config.min_margin:
                continue
            e, p = distances(i, j)
            if config.strategy is Strategy.R_ONLY_BON2:
                obj = r
            else:
                obj = dcrm(r, e, p, config.epsilon, config.variant)
            if best_obj is None or obj > best_obj:
                best_obj = obj
                best_pair = (i, j)
                best_metrics = PairMetrics(
                    e_delta=e,
                    p_delta=p,
                    r_delta=r,
                    dcrm=dcrm(r, e, p, config.epsilon, config.variant),
                    epsilon=config.epsilon,
                )
    if best_pair is None:
        if not any_candidate:
            reason = "no candidate pair"
            if config.cross_source:
                reason += " (all responses share one source)"
        else:
            reason = f"min_margin {config.min_margin} excludes all pairs"
        return SelectionSkip(pool.prompt_id, reason)
    i, j = best_pair
    return PreferencePair(
        pool.prompt_id, responses[i], responses[j], best_metrics, config.strategy.value
    )


def _safe_select(pool: ResponsePool, config: PairingConfig) -> PreferencePair | SelectionSkip:
    try:
        return select_pair(pool, config)
    except PairingError:
        raise
    except ValueError as exc:
        raise PairingError(f"pool {pool.prompt_id}: {exc}") from exc


def _select_worker(args: tuple[ResponsePool, PairingConfig]) -> PreferencePair | SelectionSkip:
    pool, config = args
    return _safe_select(pool, config)


@dataclass
class SelectionReport:
    """Pairs in input-pool order plus the skipped pools with reasons."""

    pairs: list[PreferencePair] = field(default_factory=list)
    skips: list[SelectionSkip] = field(default_factory=list)
    pools_processed: int = 0


def select_all(
    pools: Sequence[ResponsePool],
    config: PairingConfig,
    workers: int = 1,
) -> SelectionReport:
    """Apply :func:`select_pair` to every pool, preserving input order.

    With ``workers > 1`` pools are distributed over a process pool; the
    result is byte-for-byte identical to the sequential run.
    """
    report = SelectionReport()

    def consume(results: Iterable[PreferencePair | SelectionSkip]) -> None:
        for outcome in results:
            report.pools_processed += 1
            if isinstance(outcome, SelectionSkip):
                report.skips.append(outcome)
            else:
                report.pairs.append(outcome)

    if workers <= 1 or len(pools) <= 1:
        consume(_safe_select(pool, config) for pool in pools)
    else:
        chunksize = max(1, len(pools) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            consume(
                executor.map(
                    _select_worker,
                    ((pool, config) for pool in pools),
                    chunksize=chunksize,
                )
            )
    return report
