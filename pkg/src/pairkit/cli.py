"""Command-line interface: one binary, one subcommand per pipeline stage.

    pairkit validate    check pool files against the data invariants
    pairkit score       fill missing logprobs/rewards via endpoint or fixture
    pairkit pair        select one preference pair per pool
    pairkit stats       per-dataset means of the pair metrics
    pairkit correlate   Pearson correlation between two CSV columns
    pairkit tokendiff   token-frequency differences between two corpora
    pairkit featurediff LLM-judged feature differences over selected pairs

Logs and reports go to standard error; data goes to standard output or
``--out``, so stages compose in shell pipelines. Exit codes are stable:
0 success, 1 domain violation, 2 environment or I/O failure. The only
environment variable read is ``PAIRKIT_AUTH_TOKEN`` (endpoint auth).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .data import (
    PoolFormatError,
    ResponsePool,
    pair_to_dict,
    parse_pairs_file,
    parse_pool_file,
    pool_to_dict,
    tokenize_whitespace,
    validate_pool,
)
from .gateway import EndpointConfig, GatewayError, fetch_logprobs, fetch_rewards
from .judge import JudgeError, JudgeParseError, score_corpus
from .metrics import DcrmVariant
from .pairing import PairingConfig, PairingError, Strategy, select_all
from .stats import DatasetStats, dataset_statistics, pearson, token_frequency_diff

logger = logging.getLogger("pairkit")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_ENVIRONMENT = 2

_STRATEGY_NAMES = {
    "dcrm": Strategy.DCRM_BON2,
    "max-margin": Strategy.MAX_MARGIN,
    "r-only": Strategy.R_ONLY_BON2,
    "distance-only": Strategy.DISTANCE_ONLY,
}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")


def _emit_jsonl(records: list[dict[str, Any]], out: str | None) -> None:
    lines = "".join(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n" for rec in records)
    if out is None:
        sys.stdout.write(lines)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(lines)


def _endpoint_config(args: argparse.Namespace, model_default: str = "default") -> EndpointConfig:
    return EndpointConfig(
        base_url=args.endpoint or "",
        auth_token=os.environ.get("PAIRKIT_AUTH_TOKEN"),
        model_name=getattr(args, "model", model_default) or model_default,
        max_concurrency=getattr(args, "max_concurrency", 4),
        timeout=getattr(args, "timeout", 30.0),
        fixture_path=args.fixture,
        cache_dir=getattr(args, "cache_dir", None),
    )


def cmd_validate(args: argparse.Namespace) -> int:
    pools = parse_pool_file(args.input, strict=False)
    violations = []
    for pool in pools:
        violations.extend(validate_pool(pool, require_scores=args.require_scores))
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    print(f"{len(pools)} pools checked, {len(violations)} violations", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    if not args.endpoint and not args.fixture:
        print("error: score needs --endpoint or --fixture", file=sys.stderr)
        return EXIT_ENVIRONMENT
    pools = parse_pool_file(args.input)
    config = _endpoint_config(args)
    enriched: list[ResponsePool] = []
    for pool in pools:
        if args.what in ("logprobs", "both"):
            pool = fetch_logprobs(pool, config)
        if args.what in ("rewards", "both"):
            pool = fetch_rewards(pool, config)
        enriched.append(pool)
    _emit_jsonl([pool_to_dict(p) for p in enriched], args.out)
    print(f"scored {len(enriched)} pools ({args.what})", file=sys.stderr)
    return EXIT_OK


def _pairing_config(args: argparse.Namespace) -> PairingConfig:
    strategy = _STRATEGY_NAMES[args.strategy]
    use_r = strategy is not Strategy.DISTANCE_ONLY
    variant = DcrmVariant(use_e=not args.no_e, use_p=not args.no_p, use_r=use_r)
    return PairingConfig(
        strategy=strategy,
        variant=variant,
        cross_source=args.cross_source,
        epsilon=args.epsilon,
        min_margin=args.min_margin,
    )


def cmd_pair(args: argparse.Namespace) -> int:
    pools = parse_pool_file(args.input)
    unscored = [
        f"{pool.prompt_id}/{resp.id}"
        for pool in pools
        for resp in pool.responses
        if not resp.scored
    ]
    if unscored:
        shown = ", ".join(unscored[:5])
        more = f" (+{len(unscored) - 5} more)" if len(unscored) > 5 else ""
        print(f"error: unscored responses: {shown}{more}", file=sys.stderr)
        return EXIT_VIOLATION
    config = _pairing_config(args)
    report = select_all(pools, config, workers=args.workers)
    for skip in report.skips:
        print(f"skip: pool {skip.prompt_id}: {skip.reason}", file=sys.stderr)
    _emit_jsonl([pair_to_dict(p) for p in report.pairs], args.out)
    print(
        f"pools={report.pools_processed} pairs={len(report.pairs)} skips={len(report.skips)} "
        f"strategy={config.strategy.value} variant={config.variant.label()} epsilon={config.epsilon:g}",
        file=sys.stderr,
    )
    return EXIT_OK


def _stats_rows(args: argparse.Namespace) -> list[tuple[str, DatasetStats]]:
    rows = []
    for path in args.pairs:
        pairs = parse_pairs_file(path)
        if not pairs:
            raise ValueError(f"{path}: empty pairs file")
        stats = dataset_statistics(
            pairs, display_scale_r=args.scale_r, display_scale_dcrm=args.scale_dcrm
        )
        rows.append((Path(path).name, stats))
    return rows


def _render_stats_text(rows: list[tuple[str, DatasetStats]]) -> str:
    scale_r = rows[0][1].display_scale_r
    scale_dcrm = rows[0][1].display_scale_dcrm
    header = [
        "dataset",
        "n_pairs",
        "e_delta",
        "p_delta",
        f"r_delta(x{scale_r:g})",
        f"dcrm(x{scale_dcrm:g})",
    ]
    body = [
        [
            name,
            str(s.n_pairs),
            f"{s.mean_e_delta:.2f}",
            f"{s.mean_p_delta:.2f}",
            f"{s.mean_r_delta * scale_r:.2f}",
            f"{s.mean_dcrm * scale_dcrm:.2f}",
        ]
        for name, s in rows
    ]
    table = [header] + body
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
    return "\n".join(lines)


def _stats_record(name: str, s: DatasetStats) -> dict[str, Any]:
    return {
        "dataset": name,
        "n_pairs": s.n_pairs,
        "mean_e_delta": s.mean_e_delta,
        "mean_p_delta": s.mean_p_delta,
        "mean_r_delta": s.mean_r_delta,
        "mean_dcrm": s.mean_dcrm,
    }


def cmd_stats(args: argparse.Namespace) -> int:
    rows = _stats_rows(args)
    if args.format == "text":
        _emit(_render_stats_text(rows), args.out)
    elif args.format == "csv":
        # Raw (unscaled) values so the output feeds straight into correlate.
        fields = ["dataset", "n_pairs", "mean_e_delta", "mean_p_delta", "mean_r_delta", "mean_dcrm"]
        lines = [",".join(fields)]
        for name, s in rows:
            rec = _stats_record(name, s)
            lines.append(",".join(str(rec[f]) for f in fields))
        _emit("\n".join(lines), args.out)
    else:
        records = [
            dict(
                _stats_record(name, s),
                display_scale_r=s.display_scale_r,
                display_scale_dcrm=s.display_scale_dcrm,
            )
            for name, s in rows
        ]
        _emit(json.dumps(records, indent=2), args.out)
    return EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    with open(args.csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{args.csv}: empty CSV")
        for col in (args.x_col, args.y_col):
            if col not in reader.fieldnames:
                raise ValueError(f"{args.csv}: no column {col!r}")
        xs: list[float] = []
        ys: list[float] = []
        for row in reader:
            xs.append(float(row[args.x_col]))
            ys.append(float(row[args.y_col]))
    r = pearson(xs, ys)
    _emit(f"{r:.4f}", args.out)
    return EXIT_OK


def _read_token_corpus(path: str) -> list[tuple[Any, ...]]:
    corpus: list[tuple[Any, ...]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PoolFormatError(line_no, f"malformed JSON ({exc.msg})") from exc
            if isinstance(obj, dict) and "tokens" in obj:
                corpus.append(tuple(obj["tokens"]))
            elif isinstance(obj, dict) and "text" in obj:
                corpus.append(tokenize_whitespace(obj["text"]))
            else:
                raise PoolFormatError(line_no, "record needs a 'tokens' or 'text' field")
    return corpus


def cmd_tokendiff(args: argparse.Namespace) -> int:
    corpus_a = _read_token_corpus(args.file_a)
    corpus_b = _read_token_corpus(args.file_b)
    report = token_frequency_diff(corpus_a, corpus_b, args.top_k)
    if args.format == "text":
        header = ["token", "freq_a", "freq_b", "delta"]
        body = [[str(t), f"{fa:.6f}", f"{fb:.6f}", f"{d:+.6f}"] for t, fa, fb, d in report.entries]
        table = [header] + body
        widths = [max(len(row[i]) for row in table) for i in range(4)]
        _emit("\n".join("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip() for row in table), args.out)
    elif args.format == "csv":
        lines = ["token,freq_a,freq_b,delta"]
        lines += [f"{t},{fa},{fb},{d}" for t, fa, fb, d in report.entries]
        _emit("\n".join(lines), args.out)
    else:
        records = [
            {"token": t, "freq_a": fa, "freq_b": fb, "delta": d}
            for t, fa, fb, d in report.entries
        ]
        _emit(json.dumps(records, indent=2), args.out)
    return EXIT_OK


def cmd_featurediff(args: argparse.Namespace) -> int:
    if not args.endpoint and not args.fixture:
        print("error: featurediff needs --endpoint or --fixture", file=sys.stderr)
        return EXIT_ENVIRONMENT
    pairs = parse_pairs_file(args.pairs)
    if not pairs:
        raise ValueError(f"{args.pairs}: empty pairs file")
    prompts: dict[str, str] = {}
    if args.pools:
        for pool in parse_pool_file(args.pools, strict=False):
            prompts[pool.prompt_id] = pool.prompt
    triples = [
        (prompts.get(p.prompt_id, p.prompt_id), p.chosen.text, p.rejected.text)
        for p in pairs
    ]
    config = _endpoint_config(args, model_default="judge")
    report = score_corpus(triples, config, sample_size=args.sample_size, seed=args.seed)
    payload = {
        "f_rel": report.score.f_rel,
        "f_des": report.score.f_des,
        "n_pairs": report.score.n_pairs,
        "sampled": list(report.sampled),
        "distribution": report.distribution,
        "failures": [{"index": i, "error": msg} for i, msg in report.failures],
    }
    if args.format == "text":
        lines = [
            f"pairs judged: {report.score.n_pairs}",
            f"f_rel: {report.score.f_rel:.4f}",
            f"f_des: {report.score.f_des:.4f}",
            f"failures: {len(report.failures)}",
        ]
        _emit("\n".join(lines), args.out)
    else:
        _emit(json.dumps(payload, indent=2), args.out)
    return EXIT_OK


def _add_format_flag(parser: argparse.ArgumentParser, default: str = "text") -> None:
    parser.add_argument(
        "--format", choices=["text", "csv", "json"], default=default,
        help=f"output format (default: {default})",
    )


def _add_out_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="write data here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairkit",
        description="Curate preference pairs: validate, score, pair, and analyze response pools.",
    )
    parser.add_argument("--version", action="version", version=f"pairkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a pool file against the data invariants")
    p.add_argument("input", help="pool JSONL file")
    p.add_argument("--require-scores", action="store_true",
                   help="also require logprob and reward on every response")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="fill missing logprobs and rewards")
    p.add_argument("input", help="pool JSONL file")
    p.add_argument("--what", choices=["logprobs", "rewards", "both"], default="both",
                   help="which scores to fetch (default: both)")
    p.add_argument("--endpoint", default=None, help="scoring endpoint URL")
    p.add_argument("--fixture", default=None, help="offline fixture JSON instead of an endpoint")
    p.add_argument("--model", default="default", help="model name sent to the endpoint")
    p.add_argument("--cache-dir", default=None, help="on-disk score cache directory")
    p.add_argument("--max-concurrency", type=int, default=4,
                   help="in-flight requests per pool (default: 4)")
    p.add_argument("--timeout", type=float, default=30.0, help="request timeout in seconds")
    _add_out_flag(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pair", help="select one preference pair per pool")
    p.add_argument("input", help="scored pool JSONL file")
    p.add_argument("--strategy", choices=sorted(_STRATEGY_NAMES), default="dcrm",
                   help="selection strategy (default: dcrm)")
    p.add_argument("--no-e", action="store_true", help="drop the edit-distance term")
    p.add_argument("--no-p", action="store_true", help="drop the logprob-distance term")
    p.add_argument("--cross-source", action="store_true",
                   help="require chosen and rejected to come from different sources")
    p.add_argument("--epsilon", type=float, default=1.0,
                   help="denominator stabilizer (default: 1.0)")
    p.add_argument("--min-margin", type=float, default=None,
                   help="skip pools whose best pair has a reward margin below this")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: available parallelism)")
    _add_out_flag(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("stats", help="means of the pair metrics, one row per pairs file")
    p.add_argument("pairs", nargs="+", help="pair JSONL file(s)")
    p.add_argument("--scale-r", type=float, default=100.0,
                   help="display scale for the reward margin in text output (default: 100)")
    p.add_argument("--scale-dcrm", type=float, default=1000.0,
                   help="display scale for dcrm in text output (default: 1000)")
    _add_format_flag(p)
    _add_out_flag(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("correlate", help="Pearson correlation between two CSV columns")
    p.add_argument("csv", help="CSV file with a header row")
    p.add_argument("x_col", help="name of the x column")
    p.add_argument("y_col", help="name of the y column")
    _add_out_flag(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("tokendiff", help="token-frequency differences between two corpora")
    p.add_argument("file_a", help="JSONL corpus ('tokens' or 'text' per line)")
    p.add_argument("file_b", help="JSONL corpus ('tokens' or 'text' per line)")
    p.add_argument("--top-k", type=int, default=10,
                   help="entries to keep, capped at the vocabulary size (default: 10)")
    _add_format_flag(p)
    _add_out_flag(p)
    p.set_defaults(func=cmd_tokendiff)

    p = sub.add_parser("featurediff", help="LLM-judged feature differences over selected pairs")
    p.add_argument("pairs", help="pair JSONL file")
    p.add_argument("--pools", default=None,
                   help="pool JSONL file used to resolve prompt text by prompt_id")
    p.add_argument("--endpoint", default=None, help="judge endpoint URL")
    p.add_argument("--fixture", default=None, help="offline fixture JSON instead of an endpoint")
    p.add_argument("--model", default="judge", help="model name sent to the endpoint")
    p.add_argument("--sample-size", type=int, default=200,
                   help="pairs to sample for judging (default: 200)")
    p.add_argument("--seed", type=int, default=42, help="sampling seed (default: 42)")
    p.add_argument("--timeout", type=float, default=60.0, help="request timeout in seconds")
    p.add_argument("--format", choices=["text", "json"], default="json",
                   help="output format (default: json)")
    _add_out_flag(p)
    p.set_defaults(func=cmd_featurediff)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PoolFormatError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except (JudgeError, JudgeParseError, PairingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
