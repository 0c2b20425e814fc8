from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairkit.data import (
    PoolFormatError,
    PreferencePair,
    Response,
    ResponsePool,
    parse_pairs_file,
    parse_pool_file,
    tokenize_whitespace,
    validate_pool,
    write_pairs,
    write_pools,
)
from pairkit.metrics import PairMetrics

from synth import random_pool


def pool_record(prompt_id="p1", n=2, **extra):
    responses = [
        {
            "id": f"r{i}",
            "source": "alpha",
            "text": f"answer number {i}",
            "tokens": ["answer", "number", str(i)],
            "logprob": -10.0 - i,
            "reward": 0.5 + 0.1 * i,
        }
        for i in range(n)
    ]
    rec = {"prompt_id": prompt_id, "prompt": "a question", "responses": responses}
    rec.update(extra)
    return rec


def write_lines(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_parse_two_valid_lines_keeps_order(tmp_path):
    path = tmp_path / "pools.jsonl"
    write_lines(path, [pool_record("p1"), pool_record("p2")])
    pools = parse_pool_file(path)
    assert [p.prompt_id for p in pools] == ["p1", "p2"]


def test_parse_error_names_line_number(tmp_path):
    path = tmp_path / "pools.jsonl"
    rec = pool_record("p1")
    del rec["responses"]
    write_lines(path, [rec])
    with pytest.raises(PoolFormatError) as err:
        parse_pool_file(path)
    assert err.value.line_no == 1
    assert "responses" in str(err.value)


def test_parse_malformed_json_names_line(tmp_path):
    path = tmp_path / "pools.jsonl"
    path.write_text(json.dumps(pool_record("p1")) + "\n{not json\n")
    with pytest.raises(PoolFormatError) as err:
        parse_pool_file(path)
    assert err.value.line_no == 2


def test_whitespace_fallback_when_tokens_missing(tmp_path):
    rec = pool_record("p1")
    rec["responses"][0]["text"] = "a b a"
    del rec["responses"][0]["tokens"]
    path = tmp_path / "pools.jsonl"
    write_lines(path, [rec])
    pools = parse_pool_file(path)
    assert pools[0].responses[0].tokens == ("a", "b", "a")


def test_strict_parse_rejects_duplicate_ids(tmp_path):
    rec = pool_record("p1")
    rec["responses"][1]["id"] = "r0"
    path = tmp_path / "pools.jsonl"
    write_lines(path, [rec])
    with pytest.raises(PoolFormatError, match="duplicate"):
        parse_pool_file(path)
    pools = parse_pool_file(path, strict=False)
    assert len(pools) == 1  # lenient mode hands the pool to validate_pool


def test_strict_parse_rejects_single_response_pool(tmp_path):
    path = tmp_path / "pools.jsonl"
    write_lines(path, [pool_record("p1", n=1)])
    with pytest.raises(PoolFormatError, match="fewer than 2"):
        parse_pool_file(path)


def test_integer_tokens_are_preserved(tmp_path):
    rec = pool_record("p1")
    rec["responses"][0]["tokens"] = [5, 17, 5]
    path = tmp_path / "pools.jsonl"
    write_lines(path, [rec])
    pools = parse_pool_file(path)
    assert pools[0].responses[0].tokens == (5, 17, 5)


def test_validate_fully_scored_pool_is_clean():
    pool = random_pool(random.Random(0), "p1")
    assert validate_pool(pool, require_scores=True) == []


def test_validate_reports_duplicate_id():
    rng = random.Random(1)
    pool = random_pool(rng, "p1", n=3)
    dup = Response(id="r1", source="alpha", text="x", tokens=("x",), logprob=-1.0, reward=0.1)
    pool = ResponsePool(pool.prompt_id, pool.prompt, pool.responses + (dup,))
    violations = validate_pool(pool)
    assert any("r1" in str(v) and "duplicate" in str(v) for v in violations)


def test_validate_unscored_pool_one_violation_per_missing_field():
    resp = Response(id="r0", source="alpha", text="x", tokens=("x",))
    other = Response(id="r1", source="alpha", text="y", tokens=("y",))
    pool = ResponsePool("p1", "q", (resp, other))
    violations = validate_pool(pool, require_scores=True)
    missing = [v for v in violations if "missing" in v.message]
    assert len(missing) == 4  # 2 responses x (logprob, reward)


def test_validate_flags_positive_logprob():
    resp = Response(id="r0", source="alpha", text="x", tokens=("x",), logprob=1.5, reward=0.1)
    other = Response(id="r1", source="alpha", text="y", tokens=("y",), logprob=-1.0, reward=0.2)
    pool = ResponsePool("p1", "q", (resp, other))
    assert any("positive" in v.message for v in validate_pool(pool))


def test_validate_flags_text_without_tokens():
    resp = Response(id="r0", source="alpha", text="hello", tokens=())
    other = Response(id="r1", source="alpha", text="y", tokens=("y",))
    pool = ResponsePool("p1", "q", (resp, other))
    assert any("empty tokens" in v.message for v in validate_pool(pool))


def test_pool_roundtrip_through_serialization(tmp_path):
    rng = random.Random(2)
    pools = [random_pool(rng, f"p{i}") for i in range(5)]
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    write_pools(pools, first)
    reparsed = parse_pool_file(first)
    assert reparsed == pools
    write_pools(reparsed, second)
    assert first.read_bytes() == second.read_bytes()


def make_pair(rng, prompt_id="p1"):
    pool = random_pool(rng, prompt_id, n=2)
    chosen, rejected = pool.responses
    metrics = PairMetrics(e_delta=3, p_delta=1.5, r_delta=0.25, dcrm=0.01)
    return PreferencePair(prompt_id, chosen, rejected, metrics, "dcrm_bon2")


def test_write_pairs_empty_gives_empty_file(tmp_path):
    path = tmp_path / "pairs.jsonl"
    write_pairs([], path)
    assert path.read_bytes() == b""


def test_write_pairs_preserves_order_and_roundtrips(tmp_path):
    rng = random.Random(3)
    pairs = [make_pair(rng, f"p{i}") for i in range(3)]
    path = tmp_path / "pairs.jsonl"
    write_pairs(pairs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert [json.loads(line)["prompt_id"] for line in lines] == [f"p{i}" for i in range(3)]
    back = parse_pairs_file(path)
    assert [p.prompt_id for p in back] == [p.prompt_id for p in pairs]
    assert back[0].chosen == pairs[0].chosen
    assert back[0].metrics.e_delta == pairs[0].metrics.e_delta


def test_write_pairs_is_byte_deterministic(tmp_path):
    rng = random.Random(4)
    pairs = [make_pair(rng, f"p{i}") for i in range(3)]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_pairs(pairs, a)
    write_pairs(pairs, b)
    assert a.read_bytes() == b.read_bytes()


def test_pair_record_field_order(tmp_path):
    rng = random.Random(5)
    path = tmp_path / "pairs.jsonl"
    write_pairs([make_pair(rng)], path)
    rec = json.loads(path.read_text())
    assert list(rec) == ["prompt_id", "strategy", "chosen", "rejected", "metrics"]
    assert list(rec["metrics"]) == ["e_delta", "p_delta", "r_delta", "dcrm"]


def test_pair_with_identical_sides_is_rejected():
    rng = random.Random(6)
    pool = random_pool(rng, "p1", n=2)
    metrics = PairMetrics(0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PreferencePair("p1", pool.responses[0], pool.responses[0], metrics, "dcrm_bon2")


@given(st.lists(st.text(alphabet=st.characters(blacklist_categories=("Zs", "Cc")), min_size=1), max_size=20))
def test_tokenizer_idempotent_on_token_joins(tokens):
    joined = " ".join(tokens)
    once = tokenize_whitespace(joined)
    assert tokenize_whitespace(" ".join(once)) == once


def test_tokenizer_splits_whitespace_runs():
    assert tokenize_whitespace("a  b\t c\n") == ("a", "b", "c")
