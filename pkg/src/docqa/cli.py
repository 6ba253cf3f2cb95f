"""Command-line pipeline over the library modules.

Each subcommand is one stage (order, serialize, predict, eval, analyze,
sample) and stages talk through JSONL files, so any single stage can be
swapped while the rest of a run is held fixed. Every output file starts
with a header line carrying a digest of the semantic settings that
produced it; paths never enter the digest, which keeps reruns in a
different directory byte-identical.

Exit codes: 0 success, 1 usage, 2 data validation, 3 endpoint failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import random
import statistics
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .analysis import (
    Prediction,
    answer_presence_report,
    context_length_report,
    eval_row_from_record,
    eval_row_to_record,
    evaluate_rows,
    load_predictions,
    order_sensitivity_report,
    prediction_to_record,
    zero_shot_perplexity,
)
from .datasets import MixtureKind, MixtureStrategy, load_dataset_configs, load_qa, sample_mixture
from .errors import DataError, EndpointError
from .geometry import corpus_by_id, load_ocr_corpus
from .jsonl import read_stage_records, write_stage_file
from .llmclient import HTTPBackend, InferenceRequest, LLMClient, MockBackend
from .metrics import dataset_score
from .ordering import (
    OrderStrategy,
    RasterScanParams,
    load_orders,
    raster_scan_order,
    shuffled_order,
    standard_order,
)
from .serialize import (
    build_context,
    build_prompt,
    context_to_record,
    load_contexts,
    truncate_context,
)

ENDPOINT_ENV_VAR = "DOCQA_ENDPOINT"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENDPOINT = 3

# Keys a --config file may carry; anything else is probably a typo.
RUN_CONFIG_KEYS = frozenset({"endpoint", "timeout", "max_attempts", "backoff_base"})


class UsageError(Exception):
    """Bad invocation discovered after argument parsing."""


def derive_seed(seed: int, stage: str) -> int:
    """Stage-specific seed from the run seed, stable across platforms."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def config_digest(settings: Mapping[str, Any]) -> str:
    """Short fingerprint of a stage's semantic settings."""
    canon = json.dumps(settings, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def resolve_endpoint(
    flag_value: str | None,
    environ: Mapping[str, str],
    run_config: Mapping[str, Any],
) -> str | None:
    """Flag beats environment beats config file."""
    if flag_value:
        return flag_value
    if environ.get(ENDPOINT_ENV_VAR):
        return environ[ENDPOINT_ENV_VAR]
    return run_config.get("endpoint")


def load_run_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(payload) - RUN_CONFIG_KEYS)
    if unknown:
        raise DataError(f"config file {path} has unknown keys: {unknown}")
    return payload


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures on exit code 1 instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _dataset_size(text: str) -> tuple[str, int]:
    name, sep, size = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=SIZE, got {text!r}")
    try:
        return name, int(size)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size in {text!r} is not an integer")


def _out_path(args, default_name: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(args.output_dir) / default_name


def _dataset_config(args):
    configs = load_dataset_configs(args.datasets_config)
    if args.dataset not in configs:
        raise DataError(
            f"unknown dataset {args.dataset!r}, expected one of {sorted(configs)}"
        )
    return configs[args.dataset]


def cmd_order(args) -> int:
    docs = load_ocr_corpus(args.corpus)
    stage_seed = derive_seed(args.seed, "order")
    settings = {"stage": "order", "strategy": args.strategy, "seed": args.seed}
    orders = []
    if args.strategy == "standard":
        orders = [standard_order(doc) for doc in docs]
    elif args.strategy == "raster_scan":
        settings["threshold_factor"] = args.threshold_factor
        params = RasterScanParams(line_threshold_factor=args.threshold_factor)
        orders = [raster_scan_order(doc, params) for doc in docs]
    else:
        # Per-document seeds keep same-length documents from sharing a
        # permutation.
        orders = [
            shuffled_order(doc, derive_seed(stage_seed, doc.doc_id)) for doc in docs
        ]
    out = _out_path(args, "orders.jsonl")
    header = {
        "config_digest": config_digest(settings),
        "stage": "order",
        "seed": stage_seed,
    }
    write_stage_file(out, header, (o.to_record() for o in orders))
    print(f"wrote {len(orders)} orders to {out}")
    return EXIT_OK


def cmd_serialize(args) -> int:
    docs = load_ocr_corpus(args.corpus)
    orders = load_orders(args.orders)
    budget = args.budget
    if budget is None and args.dataset is not None:
        budget = _dataset_config(args).context_budget

    by_id = corpus_by_id(docs)
    order_by_doc = {}
    for order in orders:
        if order.doc_id in order_by_doc:
            raise DataError(f"duplicate order for doc {order.doc_id!r}")
        order_by_doc[order.doc_id] = order
    unknown = [doc_id for doc_id in order_by_doc if doc_id not in by_id]
    if unknown:
        raise DataError(f"orders reference docs missing from the corpus: {unknown[:5]}")
    missing = [doc.doc_id for doc in docs if doc.doc_id not in order_by_doc]
    if missing:
        raise DataError(f"corpus docs have no order: {missing[:5]}")

    separator = "\n" if args.group_separator == "newline" else " "
    contexts = []
    for doc in docs:
        ctx = build_context(doc, order_by_doc[doc.doc_id], group_separator=separator)
        if budget is not None:
            ctx = truncate_context(ctx, budget)
        contexts.append(ctx)

    strategies = sorted({o.strategy.value for o in orders})
    settings = {
        "stage": "serialize",
        "seed": args.seed,
        "budget": budget,
        "dataset": args.dataset,
        "group_separator": args.group_separator,
    }
    out = _out_path(args, "contexts.jsonl")
    header = {
        "config_digest": config_digest(settings),
        "stage": "serialize",
        "seed": derive_seed(args.seed, "serialize"),
        "strategy": strategies[0] if len(strategies) == 1 else None,
        "dataset": args.dataset,
        "budget": budget,
    }
    write_stage_file(out, header, (context_to_record(c) for c in contexts))
    print(f"wrote {len(contexts)} contexts to {out}")
    return EXIT_OK


def _build_backend(args, records):
    if args.backend == "mock-echo":
        return MockBackend(rule="echo_last_word")
    if args.backend == "mock-answer-key":
        key = {r.question: r.answers for r in records}
        return MockBackend(rule="answer_key", answer_key=key)
    run_config = load_run_config(args.config)
    endpoint = resolve_endpoint(args.endpoint, os.environ, run_config)
    if not endpoint:
        raise UsageError(
            "the http backend needs an endpoint: pass --endpoint, set "
            f"{ENDPOINT_ENV_VAR}, or put one in the config file"
        )
    timeout = args.timeout if args.timeout is not None else run_config.get("timeout", 30.0)
    max_attempts = (
        args.max_attempts
        if args.max_attempts is not None
        else run_config.get("max_attempts", 3)
    )
    return HTTPBackend(
        endpoint,
        timeout=timeout,
        max_attempts=max_attempts,
        backoff_base=run_config.get("backoff_base", 0.5),
        jitter_rng=random.Random(derive_seed(args.seed, "predict")),
    )


def cmd_predict(args) -> int:
    records = load_qa(args.qa)
    contexts = load_contexts(args.contexts)
    config = _dataset_config(args)
    max_new_tokens = args.max_new_tokens or config.target_budget
    want_logprobs = not args.no_logprobs

    contexts_by_doc = {c.doc_id: c for c in contexts}
    requests_batch = []
    for record in records:
        ctx = contexts_by_doc.get(record.doc_id)
        if ctx is None:
            raise DataError(
                f"no context for doc {record.doc_id!r} (example {record.example_id!r})"
            )
        prompt = build_prompt(ctx, record.question)
        requests_batch.append(
            InferenceRequest(
                prompt=prompt.text,
                max_new_tokens=max_new_tokens,
                want_logprobs=want_logprobs,
            )
        )

    client = LLMClient(_build_backend(args, records))
    results = client.predict_batch(requests_batch, max_in_flight=args.parallelism)

    predictions = []
    failures = 0
    for record, result in zip(records, results):
        if isinstance(result, EndpointError):
            failures += 1
            predictions.append(
                Prediction(example_id=record.example_id, text="", error=str(result))
            )
        else:
            predictions.append(
                Prediction(
                    example_id=record.example_id, text=result.text, tokens=result.tokens
                )
            )

    settings = {
        "stage": "predict",
        "seed": args.seed,
        "dataset": args.dataset,
        "backend": args.backend,
        "max_new_tokens": max_new_tokens,
        "logprobs": want_logprobs,
    }
    out = _out_path(args, "predictions.jsonl")
    header = {
        "config_digest": config_digest(settings),
        "stage": "predict",
        "seed": derive_seed(args.seed, "predict"),
        "dataset": args.dataset,
        "backend": args.backend,
    }
    write_stage_file(out, header, (prediction_to_record(p) for p in predictions))
    print(f"wrote {len(predictions)} predictions to {out}")
    if failures:
        print(f"{failures} of {len(predictions)} requests failed", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


def cmd_eval(args) -> int:
    records = load_qa(args.qa)
    predictions = load_predictions(args.predictions)
    contexts = load_contexts(args.contexts)
    config = _dataset_config(args)

    rows = evaluate_rows(records, predictions, contexts, config)
    aggregate = dataset_score([r.score for r in rows])
    ctx_header, _ = read_stage_records(args.contexts)
    strategy = ctx_header.get("strategy") if ctx_header else None

    settings = {
        "stage": "eval",
        "seed": args.seed,
        "dataset": args.dataset,
        "metric": config.metric.value,
        "anls_tau": config.anls_tau,
    }
    out = _out_path(args, "eval.jsonl")
    header = {
        "config_digest": config_digest(settings),
        "stage": "eval",
        "seed": derive_seed(args.seed, "eval"),
        "dataset": args.dataset,
        "metric": config.metric.value,
        "strategy": strategy,
        "aggregate": aggregate,
        "n": len(rows),
    }
    write_stage_file(out, header, (eval_row_to_record(r) for r in rows))
    print(f"{args.dataset} {config.metric.value}: {aggregate} ({len(rows)} examples)")
    return EXIT_OK


def _load_eval_file(path):
    header, raw_rows = read_stage_records(path)
    if header is None:
        raise DataError(f"eval file {path} has no header line")
    for key in ("dataset", "strategy", "aggregate"):
        if key not in header:
            raise DataError(f"eval file {path} header is missing {key!r}")
    rows = []
    for line_no, record in raw_rows:
        try:
            rows.append(eval_row_from_record(record))
        except ValueError as exc:
            raise DataError(f"{path} line {line_no}: {exc}") from exc
    return header, rows


def cmd_analyze(args) -> int:
    records = []
    seen_ids = set()
    for qa_path in args.qa:
        for record in load_qa(qa_path):
            if record.example_id in seen_ids:
                raise DataError(f"duplicate example {record.example_id!r} across QA files")
            seen_ids.add(record.example_id)
            records.append(record)

    # The reference run for a dataset is its one non-shuffled eval file;
    # shuffled runs exist only to be contrasted against it.
    reference_rows: dict[str, list] = {}
    aggregates: dict[tuple[str, str], float] = {}
    for path in args.eval:
        header, rows = _load_eval_file(path)
        dataset = header["dataset"]
        strategy = header["strategy"]
        key = (dataset, strategy)
        if key in aggregates:
            raise DataError(f"two eval files cover dataset {dataset!r} strategy {strategy!r}")
        aggregates[key] = header["aggregate"]
        if strategy != OrderStrategy.SHUFFLED.value:
            if dataset in reference_rows:
                raise DataError(
                    f"dataset {dataset!r} has more than one non-shuffled eval file; "
                    "pass a single reference run per dataset"
                )
            reference_rows[dataset] = rows

    perplexity = None
    if not args.no_perplexity:
        perplexity = {
            dataset: dataclasses.asdict(zero_shot_perplexity(rows))
            for dataset, rows in sorted(reference_rows.items())
        }
    presence = {}
    lengths = {}
    for dataset, rows in sorted(reference_rows.items()):
        pct_correct, pct_incorrect = answer_presence_report(rows, records, dataset)
        presence[dataset] = {"pct_correct": pct_correct, "pct_incorrect": pct_incorrect}
        norm_correct, norm_incorrect = context_length_report(rows)
        lengths[dataset] = {
            "normalized_median_correct": norm_correct,
            "normalized_median_incorrect": norm_incorrect,
        }

    # The report's baseline slot is the dataset's reference run, whatever
    # ordering that run used.
    shuffled_datasets = sorted(
        {ds for ds, strat in aggregates if strat == OrderStrategy.SHUFFLED.value}
    )
    scores_by_dataset = {}
    for ds in shuffled_datasets:
        per_strategy = {"shuffled": aggregates[(ds, OrderStrategy.SHUFFLED.value)]}
        reference = [
            agg for (d, strat), agg in aggregates.items()
            if d == ds and strat != OrderStrategy.SHUFFLED.value
        ]
        if reference:
            per_strategy["standard"] = reference[0]
        scores_by_dataset[ds] = per_strategy
    medians = {
        ds: statistics.median(r.context_token_len for r in rows)
        for ds, rows in reference_rows.items()
        if rows
    }
    sensitivity = [
        dataclasses.asdict(row)
        for row in order_sensitivity_report(scores_by_dataset, medians)
    ]

    settings = {
        "stage": "analyze",
        "seed": args.seed,
        "datasets": sorted({ds for ds, _ in aggregates}),
        "strategies": sorted({strat for _, strat in aggregates if strat}),
        "perplexity": not args.no_perplexity,
    }
    payload = {
        "config_digest": config_digest(settings),
        "stage": "analyze",
        "report": {
            "perplexity": perplexity,
            "answer_presence": presence,
            "context_length": lengths,
            "order_sensitivity": sensitivity,
        },
    }
    out = _out_path(args, "analysis.json")
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote analysis report to {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    stage_seed = derive_seed(args.seed, "sample")
    strategy = MixtureStrategy(kind=MixtureKind(args.strategy), seed=stage_seed)
    schedule = sample_mixture(args.datasets, strategy, args.draws)
    settings = {
        "stage": "sample",
        "seed": args.seed,
        "strategy": args.strategy,
        "draws": args.draws,
        "sizes": {name: size for name, size in args.datasets},
    }
    out = _out_path(args, "schedule.jsonl")
    header = {
        "config_digest": config_digest(settings),
        "stage": "sample",
        "seed": stage_seed,
    }
    write_stage_file(
        out, header, ({"dataset": name, "index": index} for name, index in schedule)
    )
    print(f"wrote {len(schedule)} draws to {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with endpoint settings")
    common.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    common.add_argument("--output-dir", default=".", help="directory for default outputs")
    common.add_argument(
        "--parallelism", type=_positive_int, default=1,
        help="maximum concurrent endpoint requests",
    )
    common.add_argument("--out", help="output file path (overrides --output-dir)")

    parser = _Parser(
        prog="docqa",
        description="Serialize OCR documents into text prompts and score QA predictions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    order = sub.add_parser("order", parents=[common], help="compute reading orders")
    order.add_argument("--corpus", required=True, help="OCR corpus JSONL")
    order.add_argument(
        "--strategy", required=True,
        choices=[s.value for s in OrderStrategy],
    )
    order.add_argument(
        "--threshold-factor", type=float, default=0.5,
        help="line grouping tolerance as a fraction of seed word height",
    )
    order.set_defaults(func=cmd_order)

    serialize_cmd = sub.add_parser(
        "serialize", parents=[common], help="join corpus and orders into contexts"
    )
    serialize_cmd.add_argument("--corpus", required=True)
    serialize_cmd.add_argument("--orders", required=True)
    serialize_cmd.add_argument(
        "--budget", type=_positive_int,
        help="context token budget (default: the dataset's budget)",
    )
    serialize_cmd.add_argument("--dataset", help="dataset whose budget applies")
    serialize_cmd.add_argument("--datasets-config", help="dataset config JSON override")
    serialize_cmd.add_argument(
        "--group-separator", choices=["space", "newline"], default="space",
        help="separator between raster line groups",
    )
    serialize_cmd.set_defaults(func=cmd_serialize)

    predict = sub.add_parser(
        "predict", parents=[common], help="run contexts and questions through a model"
    )
    predict.add_argument("--qa", required=True)
    predict.add_argument("--contexts", required=True)
    predict.add_argument("--dataset", required=True)
    predict.add_argument("--datasets-config")
    predict.add_argument(
        "--backend", choices=["http", "mock-echo", "mock-answer-key"], default="http"
    )
    predict.add_argument("--endpoint", help="completion endpoint URL")
    predict.add_argument("--timeout", type=float)
    predict.add_argument("--max-attempts", type=_positive_int)
    predict.add_argument(
        "--max-new-tokens", type=_positive_int,
        help="completion budget (default: the dataset's answer budget)",
    )
    predict.add_argument("--no-logprobs", action="store_true")
    predict.set_defaults(func=cmd_predict)

    eval_cmd = sub.add_parser(
        "eval", parents=[common], help="score predictions with the dataset metric"
    )
    eval_cmd.add_argument("--qa", required=True)
    eval_cmd.add_argument("--predictions", required=True)
    eval_cmd.add_argument("--contexts", required=True)
    eval_cmd.add_argument("--dataset", required=True)
    eval_cmd.add_argument("--datasets-config")
    eval_cmd.set_defaults(func=cmd_eval)

    analyze = sub.add_parser(
        "analyze", parents=[common], help="compose diagnostic reports from eval files"
    )
    analyze.add_argument("--qa", action="append", required=True)
    analyze.add_argument("--eval", action="append", required=True)
    analyze.add_argument(
        "--no-perplexity", action="store_true",
        help="skip the perplexity report (for runs without logprobs)",
    )
    analyze.set_defaults(func=cmd_analyze)

    sample = sub.add_parser(
        "sample", parents=[common], help="draw a multi-dataset training schedule"
    )
    sample.add_argument(
        "--datasets", action="append", required=True, type=_dataset_size,
        metavar="NAME=SIZE",
    )
    sample.add_argument(
        "--strategy", required=True, choices=[k.value for k in MixtureKind]
    )
    sample.add_argument("--draws", type=_positive_int, required=True)
    sample.set_defaults(func=cmd_sample)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EndpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT


def entrypoint() -> None:
    sys.exit(main())
