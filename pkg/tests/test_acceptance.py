"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints one `ACCEPTANCE <name>: PASS/FAIL` line (visible under
`pytest -s` or in the captured output of a failing run).
"""

from __future__ import annotations

import contextlib
import json
import math
import random
import time

from pairkit.cli import main
from pairkit.data import PreferencePair, Response, ResponsePool, write_pools
from pairkit.gateway import EndpointConfig, RetryPolicy, fetch_logprobs, fetch_rewards
from pairkit.judge import (
    Better,
    EndpointConfig as JudgeEndpointConfig,
    FeatureEntry,
    FeatureVerdict,
    judge_fixture_key,
    parse_verdict,
    score_corpus,
    score_pair,
)
from pairkit.metrics import (
    DcrmVariant,
    PairMetrics,
    dcrm,
    edit_distance,
    edit_distance_reference,
)
from pairkit.pairing import PairingConfig, SelectionSkip, Strategy, select_all, select_pair
from pairkit.stats import bow_normalized, dataset_statistics, pearson, token_frequency_diff

from mock_server import MockServer, scoring_reply
from oracles import oracle_select, variants_for
from synth import bon_style_pool, random_pool


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_dcrm_property_suite():
    with criterion("dcrm-property-suite"):
        rng = random.Random(1001)
        start = time.perf_counter()
        for _ in range(1000):
            e = rng.randint(0, 800)
            p = rng.uniform(0.0, 400.0)
            r = rng.uniform(-6.0, 6.0)

            # Property 1a: at fixed distance, strictly increasing in the margin.
            r_lo, r_hi = sorted((r, rng.uniform(-6.0, 6.0)))
            if r_lo != r_hi:
                assert dcrm(r_lo, e, p, 1.0) < dcrm(r_hi, e, p, 1.0)

            # Property 1b: at fixed nonzero margin, magnitude strictly
            # shrinks as the distance grows (either term).
            bigger_e = e + rng.randint(1, 200)
            bigger_p = p + rng.uniform(0.5, 100.0)
            pos = abs(r) + 0.01
            assert dcrm(pos, e, p, 1.0) > dcrm(pos, bigger_e, p, 1.0)
            assert dcrm(pos, e, p, 1.0) > dcrm(pos, e, bigger_p, 1.0)
            assert dcrm(-pos, e, p, 1.0) < dcrm(-pos, bigger_e, p, 1.0)
            assert dcrm(-pos, e, p, 1.0) < dcrm(-pos, e, bigger_p, 1.0)

            # Property 2: the sign of the metric is the sign of the margin,
            # and every zero-margin pair scores exactly zero.
            val = dcrm(r, e, p, 1.0)
            assert (val > 0) == (r > 0) and (val < 0) == (r < 0)
            assert dcrm(0.0, e, p, 1.0) == 0.0
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"property suite took {elapsed:.2f}s"


def test_edit_distance_oracle():
    with criterion("edit-distance-oracle"):
        rng = random.Random(1002)
        start = time.perf_counter()
        for _ in range(1000):
            a = [rng.randrange(50) for _ in range(rng.randint(0, 256))]
            b = [rng.randrange(50) for _ in range(rng.randint(0, 256))]
            assert edit_distance(a, b) == edit_distance_reference(a, b)
        for _ in range(500):
            seqs = [
                [rng.randrange(50) for _ in range(rng.randint(0, 64))]
                for _ in range(3)
            ]
            a, b, c = seqs
            dab = edit_distance(a, b)
            dba = edit_distance(b, a)
            dac = edit_distance(a, c)
            dbc = edit_distance(b, c)
            assert dab == dba
            assert edit_distance(a, a) == 0
            assert dac <= dab + dbc
            assert abs(len(a) - len(b)) <= dab <= max(len(a), len(b), 0)
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"edit-distance oracle took {elapsed:.2f}s"


def test_pairing_oracle():
    with criterion("pairing-oracle"):
        rng = random.Random(1003)
        mismatches = 0
        for trial in range(200):
            pool = random_pool(rng, f"p{trial}")
            for strategy in Strategy:
                for variant in variants_for(strategy):
                    for cross_source in (False, True):
                        config = PairingConfig(
                            strategy=strategy, variant=variant, cross_source=cross_source
                        )
                        got = select_pair(pool, config)
                        want = oracle_select(
                            pool, strategy, variant, cross_source=cross_source
                        )
                        if want is None:
                            ok = isinstance(got, SelectionSkip)
                        else:
                            ok = not isinstance(got, SelectionSkip) and (
                                got.chosen.id, got.rejected.id
                            ) == want
                        mismatches += 0 if ok else 1
        assert mismatches == 0


def test_sign_guarantee():
    with criterion("sign-guarantee"):
        rng = random.Random(1004)
        checked = 0
        while checked < 500:
            pool = random_pool(rng, f"p{checked}")
            if len({r.reward for r in pool.responses}) < 2:
                continue
            got = select_pair(pool, PairingConfig())
            assert got.metrics.r_delta > 0
            checked += 1


def test_formula_spot_check():
    with criterion("formula-spot-check"):
        # (sigmoid(0.0282) - 0.5) / (427 + 32.48 + 1), evaluated to 50
        # digits and frozen; inputs are corpus-level averages of a real
        # same-source dataset.
        oracle = 1.5309096667935418e-05
        got = dcrm(0.0282, 427, 32.48, 1.0)
        assert abs(got - oracle) / oracle < 1e-12


def test_directional_reproduction():
    with criterion("directional-reproduction"):
        rng = random.Random(1005)
        pools = [bon_style_pool(rng, f"p{i}") for i in range(500)]
        dcrm_report = select_all(pools, PairingConfig(), workers=1)
        mm_report = select_all(
            pools, PairingConfig(strategy=Strategy.MAX_MARGIN), workers=1
        )
        assert len(dcrm_report.pairs) == len(mm_report.pairs) == 500
        d_stats = dataset_statistics(dcrm_report.pairs)
        m_stats = dataset_statistics(mm_report.pairs)
        assert d_stats.mean_e_delta < m_stats.mean_e_delta
        assert d_stats.mean_p_delta < m_stats.mean_p_delta
        assert d_stats.mean_r_delta > 0


def _tiny_response(rid, reward=None, logprob=None):
    return Response(rid, "alpha", "t", ("t",), logprob=logprob or -1.0, reward=reward or 0.5)


def test_statistics_and_correlation():
    with criterion("statistics-and-correlation"):
        rng = random.Random(1006)
        chosen = _tiny_response("a")
        rejected = _tiny_response("b")
        pairs = [
            PreferencePair(
                f"p{i}",
                chosen,
                rejected,
                PairMetrics(
                    e_delta=rng.randint(0, 900),
                    p_delta=rng.uniform(0.0, 400.0),
                    r_delta=rng.uniform(-1.0, 1.0),
                    dcrm=rng.uniform(-0.1, 0.1),
                ),
                "dcrm_bon2",
            )
            for i in range(10_000)
        ]
        stats = dataset_statistics(pairs)

        def two_pass(values):
            n = len(values)
            first = sum(values) / n
            return first + sum(v - first for v in values) / n

        for got, values in [
            (stats.mean_e_delta, [p.metrics.e_delta for p in pairs]),
            (stats.mean_p_delta, [p.metrics.p_delta for p in pairs]),
            (stats.mean_r_delta, [p.metrics.r_delta for p in pairs]),
            (stats.mean_dcrm, [p.metrics.dcrm for p in pairs]),
        ]:
            want = two_pass(values)
            assert abs(got - want) <= 1e-12 * max(abs(want), 1e-300)

        assert pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) == 1.0
        assert pearson([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == -1.0

        xs = [rng.uniform(-5, 5) for _ in range(50)]
        ys = [0.7 * x + rng.gauss(0, 1.5) for x in xs]
        mx, my = sum(xs) / 50, sum(ys) / 50
        cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
        sx = math.sqrt(sum((x - mx) ** 2 for x in xs))
        sy = math.sqrt(sum((y - my) ** 2 for y in ys))
        assert abs(pearson(xs, ys) - cov / (sx * sy)) < 1e-10

        rho = 0.6
        planted_x, planted_y = [], []
        gen = random.Random(42)
        for _ in range(200):
            x = gen.gauss(0, 1)
            planted_x.append(x)
            planted_y.append(rho * x + math.sqrt(1 - rho * rho) * gen.gauss(0, 1))
        assert abs(pearson(planted_x, planted_y) - rho) < 0.05


def test_token_analysis():
    with criterion("token-analysis"):
        rng = random.Random(1007)
        for _ in range(200):
            seq = [rng.randrange(40) for _ in range(rng.randint(1, 300))]
            assert abs(math.fsum(bow_normalized(seq).values()) - 1.0) <= 1e-12

        corpus_a = [["planted"] * 2 + [rng.choice("abcdef") for _ in range(8)] for _ in range(40)]
        corpus_b = [[rng.choice("abcdef") for _ in range(10)] for _ in range(40)]
        report = token_frequency_diff(corpus_a, corpus_b, k=3)
        assert report.entries[0][0] == "planted"

        vocab = len({t for seq in corpus_a + corpus_b for t in seq})
        fwd = token_frequency_diff(corpus_a, corpus_b, k=vocab)
        rev = token_frequency_diff(corpus_b, corpus_a, k=vocab)
        rev_deltas = {tok: d for tok, _, _, d in rev.entries}
        for tok, _, _, d in fwd.entries:
            assert rev_deltas[tok] == -d


def test_pair_command_determinism(tmp_path):
    with criterion("pair-determinism"):
        rng = random.Random(1008)
        pools = [random_pool(rng, f"p{i:04d}", n=rng.randint(2, 6)) for i in range(1000)]
        corpus = tmp_path / "corpus.jsonl"
        write_pools(pools, corpus)
        out1 = tmp_path / "w1.jsonl"
        out8 = tmp_path / "w8.jsonl"
        assert main(["pair", str(corpus), "--workers", "1", "--out", str(out1)]) == 0
        assert main(["pair", str(corpus), "--workers", "8", "--out", str(out8)]) == 0
        assert out1.read_bytes() == out8.read_bytes()


def test_pair_command_throughput(tmp_path):
    with criterion("pair-throughput"):
        rng = random.Random(1009)
        records = []
        for i in range(1000):
            # Same-source pools: five variants of a shared base, 512-1024
            # tokens each, so distances span near-zero to hundreds.
            base_len = rng.randint(512, 1024)
            base = [rng.randrange(5000) for _ in range(base_len)]
            responses = []
            for j in range(5):
                tokens = list(base)
                for _ in range(rng.randint(0, base_len // 2)):
                    op = rng.random()
                    if tokens and op < 0.5:
                        tokens[rng.randrange(len(tokens))] = rng.randrange(5000)
                    elif tokens and op < 0.75:
                        del tokens[rng.randrange(len(tokens))]
                    else:
                        tokens.insert(rng.randint(0, len(tokens)), rng.randrange(5000))
                responses.append({
                    "id": f"r{j}",
                    "source": "alpha",
                    "text": "",
                    "tokens": tokens[:1024],
                    "logprob": -rng.uniform(10.0, 400.0),
                    "reward": rng.uniform(0.0, 1.0),
                })
            records.append({"prompt_id": f"p{i:04d}", "prompt": "q", "responses": responses})
        corpus = tmp_path / "large.jsonl"
        with open(corpus, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        out = tmp_path / "pairs.jsonl"
        start = time.perf_counter()
        assert main(["pair", str(corpus), "--strategy", "dcrm", "--workers", "8", "--out", str(out)]) == 0
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"pair command took {elapsed:.1f}s"
        assert sum(1 for _ in open(out)) == 1000


def test_gateway_idempotence_and_cache(tmp_path):
    with criterion("gateway-cache"):
        pools = [
            ResponsePool(
                f"p{i}", f"question {i}",
                tuple(
                    Response(f"r{j}", "alpha", f"reply {i}-{j}", tuple(f"reply {i}-{j}".split()))
                    for j in range(3)
                ),
            )
            for i in range(5)
        ]
        cache_dir = tmp_path / "cache"
        with MockServer(scoring_reply) as server:
            config = EndpointConfig(
                base_url=server.url,
                model_name="scorer",
                cache_dir=str(cache_dir),
                retry=RetryPolicy(max_attempts=2, backoff=(0.0,)),
            )
            first = [fetch_rewards(fetch_logprobs(p, config), config) for p in pools]
            calls_first = server.request_count
            assert calls_first == 5 * 3 * 2

            # Idempotence: enriching an enriched pool is a no-op.
            again = [fetch_rewards(fetch_logprobs(p, config), config) for p in first]
            assert again == first
            assert server.request_count == calls_first

            # Cache: a fresh run over the same raw corpus stays offline.
            second = [fetch_rewards(fetch_logprobs(p, config), config) for p in pools]
            assert second == first
            assert server.request_count == calls_first


def test_judge_client_criteria(tmp_path):
    with criterion("judge-client"):
        fenced = (
            "Sure, here is my verdict:\n```json\n"
            + json.dumps({
                "helpfulness": {"justification": "a", "better response": "y1"},
                "tone": {"justification": "b", "better response": "Not applicable"},
                "verbosity": {"justification": "c", "better response": "y2"},
            })
            + "\n```\nLet me know if you need more."
        )
        verdict = parse_verdict(fenced, order_swapped=False)
        assert [e.name for e in verdict.features] == ["helpfulness", "tone", "verbosity"]

        mirrored = FeatureVerdict(
            features=(
                FeatureEntry("helpfulness", "", Better.SECOND),
                FeatureEntry("tone", "", Better.NOT_APPLICABLE),
                FeatureEntry("verbosity", "", Better.FIRST),
            ),
            order_swapped=True,
        )
        pair_score = score_pair(verdict, mirrored)
        assert pair_score.f_rel == 2 / 3
        assert pair_score.f_des == 1 / 3

        rng = random.Random(1010)
        from pairkit.judge import DEFAULT_CATALOG

        names = list(DEFAULT_CATALOG.all_names())
        betters = list(Better)
        for _ in range(1000):
            fwd = FeatureVerdict(
                tuple(FeatureEntry(rng.choice(names), "", rng.choice(betters)) for _ in range(3)),
                order_swapped=False,
            )
            swp = FeatureVerdict(
                tuple(FeatureEntry(rng.choice(names), "", rng.choice(betters)) for _ in range(3)),
                order_swapped=True,
            )
            score = score_pair(fwd, swp)
            assert score.f_des <= score.f_rel

        pairs = [(f"q{i}", f"pref {i}", f"other {i}") for i in range(200)]
        all_relevant = json.dumps({
            "helpfulness": {"justification": "x", "better response": "y1"},
            "correctness": {"justification": "x", "better response": "y1"},
            "factuality": {"justification": "x", "better response": "y1"},
        })
        all_irrelevant = json.dumps({
            "tone": {"justification": "x", "better response": "y1"},
            "humor": {"justification": "x", "better response": "y1"},
            "writing style": {"justification": "x", "better response": "y1"},
        })
        verdicts = {}
        for i, (x, y_pref, y_other) in enumerate(pairs):
            payload = all_relevant if i % 2 == 0 else all_irrelevant
            verdicts[judge_fixture_key(x, y_pref, y_other)] = payload
            verdicts[judge_fixture_key(x, y_other, y_pref)] = payload
        fixture = tmp_path / "judge.json"
        fixture.write_text(json.dumps({"verdicts": verdicts}))
        report = score_corpus(
            pairs,
            JudgeEndpointConfig(fixture_path=str(fixture)),
            sample_size=200,
            seed=77,
        )
        assert report.score.f_rel == 0.5
