"""Dataset-level statistics and corpus analyses.

Covers the summary table over selected pairs (means of the four pair
metrics), Pearson correlation between labeled dataset columns, KL
divergence between categorical distributions, and the length-normalized
bag-of-words token-frequency comparison between two corpora.

Stored statistics are always raw per-pair means; display scaling (reward
margin x100, dcrm x1000 by default) is applied only when rendering the
text table and is printed in the header. Reductions use compensated
summation so results are order-independent to well below 1e-12.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .data import PreferencePair, Token

__all__ = [
    "DatasetStats",
    "TokenFrequencyReport",
    "dataset_statistics",
    "pearson",
    "kl_divergence",
    "bow_normalized",
    "token_frequency_diff",
]


@dataclass(frozen=True)
class DatasetStats:
    """Arithmetic means of the pair metrics over a dataset of pairs."""

    n_pairs: int
    mean_e_delta: float
    mean_p_delta: float
    mean_r_delta: float
    mean_dcrm: float
    display_scale_r: float = 100.0
    display_scale_dcrm: float = 1000.0


@dataclass(frozen=True)
class TokenFrequencyReport:
    """Top-k tokens by mean normalized-frequency difference, descending.

    ``delta == freq_in_a - freq_in_b`` for every entry; ties are ordered
    by the token's string form.
    """

    entries: tuple[tuple[Token, float, float, float], ...]
    k: int


def dataset_statistics(
    pairs: Sequence[PreferencePair],
    display_scale_r: float = 100.0,
    display_scale_dcrm: float = 1000.0,
) -> DatasetStats:
    """Means of e_delta, p_delta, r_delta, and dcrm across pairs.

    Means are taken over per-pair values, never by re-evaluating the
    metric formula at averaged inputs.
    """
    if not pairs:
        raise ValueError("dataset_statistics needs at least one pair")
    n = len(pairs)
    return DatasetStats(
        n_pairs=n,
        mean_e_delta=math.fsum(p.metrics.e_delta for p in pairs) / n,
        mean_p_delta=math.fsum(p.metrics.p_delta for p in pairs) / n,
        mean_r_delta=math.fsum(p.metrics.r_delta for p in pairs) / n,
        mean_dcrm=math.fsum(p.metrics.dcrm for p in pairs) / n,
        display_scale_r=display_scale_r,
        display_scale_dcrm=display_scale_dcrm,
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient of two equal-length columns."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("pearson needs at least 2 points")
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = math.fsum(d * d for d in dx)
    var_y = math.fsum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        raise ValueError("pearson is undefined for a zero-variance column")
    cov = math.fsum(a * b for a, b in zip(dx, dy))
    r = cov / math.sqrt(var_x * var_y)
    # Guard against rounding pushing an exactly-linear column past +/-1.
    return max(-1.0, min(1.0, r))


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p || q) in nats for categorical distributions on the same support."""
    if len(p) != len(q):
        raise ValueError(f"support mismatch: {len(p)} vs {len(q)}")
    for name, dist in (("p", p), ("q", q)):
        if any(v < 0 for v in dist):
            raise ValueError(f"{name} has a negative entry")
        total = math.fsum(dist)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {total}, not 1")
    acc = 0.0
    for pi, qi in zip(p, q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise ValueError("q assigns zero mass where p does not")
        acc += pi * math.log(pi / qi)
    return acc


def bow_normalized(y: Sequence[Token]) -> dict[Token, float]:
    """Length-normalized bag of words: token count divided by sequence length."""
    if not y:
        raise ValueError("bow_normalized needs a nonempty sequence")
    n = len(y)
    return {tok: count / n for tok, count in Counter(y).items()}


def _corpus_mean_bow(corpus: Sequence[Sequence[Token]]) -> dict[Token, float]:
    # Tokens absent from a sequence contribute 0 to that sequence's value,
    # so the corpus mean is the per-sequence sum divided by corpus size.
    sums: dict[Token, float] = {}
    for seq in corpus:
        for tok, freq in bow_normalized(seq).items():
            sums[tok] = sums.get(tok, 0.0) + freq
    n = len(corpus)
    return {tok: s / n for tok, s in sums.items()}


def token_frequency_diff(
    corpus_a: Sequence[Sequence[Token]],
    corpus_b: Sequence[Sequence[Token]],
    k: int,
) -> TokenFrequencyReport:
    """Top-k tokens whose mean normalized frequency grows most from b to a.

    Each corpus is a sequence of token sequences; per-sequence normalized
    frequencies are averaged across the corpus before differencing. When
    k exceeds the joint vocabulary the full vocabulary is returned.
    """
    if not corpus_a or not corpus_b:
        raise ValueError("both corpora must be nonempty")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    mean_a = _corpus_mean_bow(corpus_a)
    mean_b = _corpus_mean_bow(corpus_b)
    vocab = set(mean_a) | set(mean_b)
    rows = [
        (tok, mean_a.get(tok, 0.0), mean_b.get(tok, 0.0))
        for tok in vocab
    ]
    rows.sort(key=lambda row: (-(row[1] - row[2]), str(row[0])))
    top = rows[: min(k, len(rows))]
    entries = tuple((tok, fa, fb, fa - fb) for tok, fa, fb in top)
    return TokenFrequencyReport(entries=entries, k=len(entries))
