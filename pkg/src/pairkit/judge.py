"""LLM-judge client for feature-difference analysis of response pairs.

A judge is asked to name the three most prominent features in which two
responses differ and, where a direction makes sense, which response is
better. Each pair is judged twice with the response order swapped to
cancel position bias; the two verdicts are averaged.

Feature names are checked against a fixed catalog of task-relevant
features (the qualities a preference-tuned model should improve) and
task-irrelevant ones (style and tone axes); names outside the catalog
fall into the "other" bucket. From the verdicts two fractions are
computed per pair: the share of identified differences that are relevant
(``f_rel``) and the share that are relevant and point at the preferred
response (``f_des``). ``f_des <= f_rel`` always holds.

Verdicts arrive as JSON, possibly wrapped in markdown fences or prose;
parsing extracts the first balanced JSON object. Fixture mode maps
digests of (query, y1, y2) to canned verdict payloads so corpus scoring
runs offline; the ``"*"`` key serves as a catch-all.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
import re
from dataclasses import dataclass
from typing import Any, Sequence

from .gateway import (
    EndpointConfig,
    GatewayError,
    extract_path,
    post_json,
    substitute_template,
)

__all__ = [
    "Better",
    "FeatureCatalog",
    "FeatureEntry",
    "FeatureVerdict",
    "FeatureScore",
    "CorpusFeatureReport",
    "JudgeParseError",
    "JudgeError",
    "DEFAULT_CATALOG",
    "render_judge_prompt",
    "parse_verdict",
    "score_pair",
    "score_corpus",
    "judge_fixture_key",
]

RELEVANT_FEATURES = (
    "helpfulness",
    "correctness",
    "factuality",
    "coherence",
    "verbosity",
    "instruction following",
    "truthfulness",
    "honesty",
    "harmlessness",
    "code complexity",
    "code readability",
)

IRRELEVANT_FEATURES = (
    "writing style",
    "tone",
    "politeness",
    "friendliness",
    "caring or not",
    "intimacy",
    "empathy",
    "language type",
    "casual or formal",
    "authoritative or not",
    "creativity",
    "certainty",
    "humor",
    "passive or active",
    "pessimistic or optimistic",
    "explicit or implicit",
    "sarcastic or not",
    "passion",
    "repetitiveness",
    "word usage diversity",
    "structure of presentation",
    "other",
)

# Order in which the prompt lists the candidate features; "other" is the
# fallback bucket and is not offered to the judge.
PROMPT_FEATURE_ORDER = (
    "explicit or implicit",
    "instruction following",
    "code readability",
    "caring or not",
    "pessimistic or optimistic",
    "writing style",
    "certainty",
    "truthfulness",
    "casual or formal",
    "tone",
    "intimacy",
    "code complexity",
    "passion",
    "friendliness",
    "passive or active",
    "authoritative or not",
    "word usage diversity",
    "correctness",
    "politeness",
    "language type",
    "factuality",
    "empathy",
    "creativity",
    "coherence",
    "repetitiveness",
    "verbosity",
    "sarcastic or not",
    "structure of presentation",
    "harmlessness",
    "humor",
    "helpfulness",
    "honesty",
)

FEATURES_PER_VERDICT = 3


class Better(enum.Enum):
    FIRST = "first"
    SECOND = "second"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class FeatureCatalog:
    """Disjoint sets of task-relevant and task-irrelevant feature names."""

    relevant: frozenset[str]
    irrelevant: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.relevant & self.irrelevant
        if overlap:
            raise ValueError(f"features in both sets: {sorted(overlap)}")

    def all_names(self) -> frozenset[str]:
        return self.relevant | self.irrelevant


DEFAULT_CATALOG = FeatureCatalog(
    relevant=frozenset(RELEVANT_FEATURES),
    irrelevant=frozenset(IRRELEVANT_FEATURES),
)


@dataclass(frozen=True)
class FeatureEntry:
    name: str
    justification: str
    better: Better


@dataclass(frozen=True)
class FeatureVerdict:
    """One judge reply: exactly three feature differences plus the order flag.

    ``order_swapped`` records whether y1 in the judged prompt was the
    preferred/trained response (False) or the other one (True);
    directions are un-swapped at scoring time using this flag.
    """

    features: tuple[FeatureEntry, ...]
    order_swapped: bool

    def __post_init__(self) -> None:
        if len(self.features) != FEATURES_PER_VERDICT:
            raise ValueError(f"a verdict carries exactly {FEATURES_PER_VERDICT} features")


@dataclass(frozen=True)
class FeatureScore:
    """Fractions of relevant / correctly-directed feature differences."""

    f_rel: float
    f_des: float
    n_pairs: int


@dataclass(frozen=True)
class CorpusFeatureReport:
    score: FeatureScore
    # feature -> direction -> count, directions after un-swapping:
    # preferred_better / other_better / not_applicable
    distribution: dict[str, dict[str, int]]
    sampled: tuple[int, ...]
    failures: tuple[tuple[int, str], ...]


class JudgeParseError(ValueError):
    """The judge reply could not be turned into a verdict."""

    def __init__(self, reason: str, raw: str):
        super().__init__(f"{reason} (raw payload attached)")
        self.reason = reason
        self.raw = raw


class JudgeError(RuntimeError):
    """Corpus scoring failed (for example, too many per-pair failures)."""


_PROMPT_TEMPLATE = """Given 2 responses y1 and y2 to a query x, identify the top 3 most prominent features in which y1 and y2 differ. Provide a justification for each feature that you identified. The features that you identified should only come from the following set of potential features:

{{feature_set}}

Note that the features "code complexity" and "code readability" are only applicable for programming or coding tasks. Do not indicate these for non programming or coding tasks.

If you think none of the feature listed above can explain the differences between y1 and y2, propose new features that can explain the differences. Again, provide a justification for each proposed new feature.

Additionally, for any feature where it makes sense to say y1 is "better" or "worse" than y2 in terms of that feature (e.g., helpfulness, where more helpful is better; verbosity, where less verbose is better), identify which response is better. You should put "y1" or "y2". For other features where differences do not imply "better" or "worse" (writing style, tone, formal or casual, language type, etc.), put "Not applicable".

Give your response in the following JSON format:

{
    feature 1: {
        "justification": justification 1,
        "better response": "y1" or "y2" or "Not applicable"
    },
    ...
    feature 3: {
        "justification": justification 3,
        "better response": "y1" or "y2" or "Not applicable"
    }
}

Query x: {x}


Response y1: {y1}


Response y2: {y2}


Answer:"""


def render_judge_prompt(x: str, y1: str, y2: str) -> str:
    """Fill the judge prompt with the query and the two responses.

    The candidate feature list is generated from the catalog, so prompt
    and catalog cannot drift apart. Substitution happens in one pass, so
    placeholder-like text inside the inputs is never re-substituted.
    """
    feature_set = "{" + ", ".join(PROMPT_FEATURE_ORDER) + "}"
    filled = _PROMPT_TEMPLATE.replace("{{feature_set}}", feature_set)
    slots = {"x": x, "y1": y1, "y2": y2}
    return re.sub(r"\{(x|y1|y2)\}", lambda m: slots[m.group(1)], filled)


def _extract_json_object(text: str) -> str | None:
    # First balanced top-level {...}, tracking string state so braces
    # inside quoted values do not confuse the depth counter.
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _normalize_name(name: str, catalog: FeatureCatalog) -> str:
    cleaned = " ".join(name.strip().lower().split())
    return cleaned if cleaned in catalog.all_names() else "other"


def _normalize_better(value: Any) -> Better:
    if value is None:
        return Better.NOT_APPLICABLE
    text = str(value).strip().lower()
    if text == "y1":
        return Better.FIRST
    if text == "y2":
        return Better.SECOND
    return Better.NOT_APPLICABLE


def parse_verdict(
    raw: str,
    order_swapped: bool,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
) -> FeatureVerdict:
    """Extract a verdict from a possibly fenced or prose-wrapped judge reply.

    Feature names are matched case-insensitively against the catalog;
    unknown names become "other". The first three features are kept in
    their emitted order; fewer than three is an error.
    """
    payload = _extract_json_object(raw)
    if payload is None:
        raise JudgeParseError("no JSON object found in judge reply", raw)
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"unparseable JSON in judge reply: {exc.msg}", raw) from exc
    if not isinstance(obj, dict):
        raise JudgeParseError("judge reply is not a JSON object", raw)
    entries: list[FeatureEntry] = []
    for key, val in obj.items():
        if not isinstance(val, dict):
            continue
        name = val.get("feature", key)
        entries.append(
            FeatureEntry(
                name=_normalize_name(str(name), catalog),
                justification=str(val.get("justification", "")),
                better=_normalize_better(val.get("better response", val.get("better_response"))),
            )
        )
        if len(entries) == FEATURES_PER_VERDICT:
            break
    if len(entries) < FEATURES_PER_VERDICT:
        raise JudgeParseError(
            f"judge reply names {len(entries)} features, need {FEATURES_PER_VERDICT}", raw
        )
    return FeatureVerdict(features=tuple(entries), order_swapped=order_swapped)


def _points_at_preferred(entry: FeatureEntry, order_swapped: bool) -> bool:
    if entry.better is Better.NOT_APPLICABLE:
        return False
    if order_swapped:
        return entry.better is Better.SECOND
    return entry.better is Better.FIRST


def _verdict_fractions(verdict: FeatureVerdict, catalog: FeatureCatalog) -> tuple[float, float]:
    rel = sum(1 for e in verdict.features if e.name in catalog.relevant)
    des = sum(
        1
        for e in verdict.features
        if e.name in catalog.relevant and _points_at_preferred(e, verdict.order_swapped)
    )
    n = FEATURES_PER_VERDICT
    return rel / n, des / n


def score_pair(
    verdict_forward: FeatureVerdict,
    verdict_swapped: FeatureVerdict,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
) -> FeatureScore:
    """Average the two order-swapped verdicts of one response pair."""
    if verdict_forward.order_swapped or not verdict_swapped.order_swapped:
        raise ValueError("verdicts passed with wrong order_swapped flags")
    rel_f, des_f = _verdict_fractions(verdict_forward, catalog)
    rel_s, des_s = _verdict_fractions(verdict_swapped, catalog)
    return FeatureScore(f_rel=(rel_f + rel_s) / 2, f_des=(des_f + des_s) / 2, n_pairs=1)


def judge_fixture_key(x: str, y1: str, y2: str) -> str:
    """Digest identifying one judged (query, y1, y2) triple in fixtures."""
    payload = json.dumps([x, y1, y2], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _judge_raw_reply(x: str, y1: str, y2: str, config: EndpointConfig) -> str:
    prompt = render_judge_prompt(x, y1, y2)
    if config.fixture_path is not None:
        with open(config.fixture_path, encoding="utf-8") as fh:
            table = json.load(fh).get("verdicts", {})
        entry = table.get(judge_fixture_key(x, y1, y2), table.get("*"))
        if entry is None:
            raise GatewayError("judge fixture has no entry for this pair")
        return entry if isinstance(entry, str) else json.dumps(entry)
    if config.request_template == "custom" and config.custom_request is not None:
        body = substitute_template(
            config.custom_request, {"$prompt": prompt, "$model": config.model_name}
        )
    else:
        body = {"model": config.model_name, "prompt": prompt}
    reply = post_json(config.base_url, body, config, context="judge reply")
    path = config.custom_response_path or "text"
    try:
        return str(extract_path(reply, path))
    except (KeyError, IndexError, ValueError) as exc:
        raise GatewayError(f"judge reply lacks field {path!r}") from exc


def _tally(distribution: dict[str, dict[str, int]], verdict: FeatureVerdict) -> None:
    for entry in verdict.features:
        if entry.better is Better.NOT_APPLICABLE:
            direction = "not_applicable"
        elif _points_at_preferred(entry, verdict.order_swapped):
            direction = "preferred_better"
        else:
            direction = "other_better"
        per_feature = distribution.setdefault(entry.name, {})
        per_feature[direction] = per_feature.get(direction, 0) + 1


def score_corpus(
    pairs: Sequence[tuple[str, str, str]],
    endpoint: EndpointConfig,
    sample_size: int,
    seed: int,
    catalog: FeatureCatalog = DEFAULT_CATALOG,
    max_failure_rate: float = 0.1,
) -> CorpusFeatureReport:
    """Judge a seeded sample of (query, preferred, other) triples.

    Every sampled pair is judged in both response orders. Pairs whose
    judgment fails are excluded and reported; scoring aborts when more
    than ``max_failure_rate`` of the sample fails.
    """
    if not pairs:
        raise ValueError("score_corpus needs a nonempty corpus")
    rng = random.Random(seed)
    take = min(sample_size, len(pairs))
    sampled = rng.sample(range(len(pairs)), take)
    rel_values: list[float] = []
    des_values: list[float] = []
    distribution: dict[str, dict[str, int]] = {}
    failures: list[tuple[int, str]] = []
    for idx in sampled:
        x, y_pref, y_other = pairs[idx]
        try:
            fwd = parse_verdict(_judge_raw_reply(x, y_pref, y_other, endpoint), False, catalog)
            swp = parse_verdict(_judge_raw_reply(x, y_other, y_pref, endpoint), True, catalog)
        except (GatewayError, JudgeParseError) as exc:
            failures.append((idx, str(exc)))
            continue
        pair_score = score_pair(fwd, swp, catalog)
        rel_values.append(pair_score.f_rel)
        des_values.append(pair_score.f_des)
        _tally(distribution, fwd)
        _tally(distribution, swp)
    if len(failures) > max_failure_rate * take:
        raise JudgeError(
            f"{len(failures)} of {take} sampled pairs failed judging "
            f"(limit {max_failure_rate:.0%})"
        )
    n_ok = len(rel_values)
    if n_ok == 0:
        raise JudgeError("no pair was judged successfully")
    score = FeatureScore(
        f_rel=math.fsum(rel_values) / n_ok,
        f_des=math.fsum(des_values) / n_ok,
        n_pairs=n_ok,
    )
    return CorpusFeatureReport(
        score=score,
        distribution=distribution,
        sampled=tuple(sampled),
        failures=tuple(failures),
    )
