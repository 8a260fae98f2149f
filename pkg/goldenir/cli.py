"""The ``goldenir`` command line: build an index, search it, derive oracle
queries, run the retrieval pipeline and evaluate recall.
"""

import argparse
import json
import logging
import os
import sys

from .corpus_io import (
    RunConfig,
    load_dataset,
    load_wiki_dump,
    write_run_manifest,
)
from .eval import (
    DEFAULT_KS,
    evaluate_generator_spans,
    evaluate_oracle,
    evaluate_pipeline,
    evaluate_single_hop,
    format_ablation_table,
    plot_recall_curves,
    run_ablation,
    write_report,
)
from .index import build, open_index
from .oracle import NoOracleError, write_oracle_records
from .pipeline import (
    ExternalGenerator,
    MissingGoldError,
    OracleGenerator,
    QuestionGenerator,
    gold_documents,
    run_batch,
    training_context,
    write_trace,
)
from .ranking import RankingParams, retrieve_hits
from .textproc import load_stoplist, set_fold_table
from .utils import read_jsonl, write_jsonl

logger = logging.getLogger("goldenir")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3

ERRORS_NAME = "errors.jsonl"


def _int_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma separated integers, got {text!r}"
        ) from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive values: {text!r}")
    return tuple(values)


def _str_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="goldenir",
        description="Iterative multi-hop retrieval over a Wikipedia dump.",
    )
    parser.add_argument("--config", help="TOML run configuration.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--limit",
        type=int,
        help="Only use this many documents, questions or hits.",
    )
    common.add_argument("--index", help="Index directory.")
    common.add_argument("--dataset", help="Question JSON file.")
    common.add_argument("--out", dest="output", help="Output directory.")
    common.add_argument("--stoplist", help="Stop word file.")
    common.add_argument(
        "--fold-table", dest="fold_table", help="Character folding table."
    )

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument("--hops", type=int)
    pipeline.add_argument("--n", type=int, help="Documents per hop.")
    pipeline.add_argument(
        "--generators",
        type=_str_list,
        help="Per hop: oracle, question or external:<path>.",
    )
    pipeline.add_argument("--min-ratio", type=float, dest="min_ratio")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", parents=[common], help="Index a dump.")
    p.add_argument("--dump", help="Dump directory or shard.")
    p.add_argument("--batch-size", type=int, default=10_000)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("search", parents=[common], help="Query an index.")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser(
        "oracle-gen", parents=[common, pipeline], help="Oracle queries."
    )
    p.set_defaults(func=cmd_oracle_gen)

    p = sub.add_parser(
        "run-pipeline", parents=[common, pipeline], help="Run all hops."
    )
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser(
        "eval", parents=[common, pipeline], help="Recall evaluation."
    )
    p.add_argument(
        "--mode",
        choices=("single-hop", "oracle", "pipeline", "spans"),
        default="single-hop",
    )
    p.add_argument("--k", type=_int_list, default=DEFAULT_KS)
    p.add_argument("--predictions", help="Generated queries (spans mode).")
    p.add_argument("--oracle", help="Oracle query file (spans mode).")
    p.add_argument("--plot", action="store_true", help="Also write a PNG.")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "ablation", parents=[common], help="Ranking ablation grid."
    )
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser(
        "export-training-data",
        parents=[common, pipeline],
        help="Query generator supervision.",
    )
    p.set_defaults(func=cmd_export_training_data)

    return parser


def resolve_config(args):
    """The file configuration, if any, overridden by the given flags."""
    config = RunConfig.from_toml(args.config) if args.config else RunConfig()
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "dump",
            "dataset",
            "index",
            "output",
            "stoplist",
            "fold_table",
            "hops",
            "n",
            "generators",
            "min_ratio",
            "limit",
        )
    }
    return config.with_overrides(**overrides)


def make_generators(config, index):
    """One query generator per configured hop."""
    if len(config.generators) != config.hops:
        raise ValueError(
            f"{len(config.generators)} generator modes for {config.hops} hops."
        )
    params = config.ranking_params()
    generators = []
    for mode in config.generators:
        if mode == "oracle":
            generators.append(OracleGenerator(index, params, config.min_ratio))
        elif mode == "question":
            generators.append(QuestionGenerator())
        else:
            path = mode.split(":", 1)[1]
            generators.append(ExternalGenerator.from_file(path))
    return generators


def _open(config):
    config.require("index")
    stops = load_stoplist(config.stoplist) if config.stoplist else None
    return open_index(config.index, stops=stops)


def _questions(config):
    config.require("dataset")
    return load_dataset(config.dataset, limit=config.limit)


def _finish(config, command, errors, inputs):
    write_run_manifest(config.output, command, config, inputs)
    if errors:
        path = os.path.join(config.output, ERRORS_NAME)
        write_jsonl(path, errors)
        logger.error("%d questions failed, see %s.", len(errors), path)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_build_index(args, config):
    config.require("dump")
    out = args.output or config.index or config.output
    stops = load_stoplist(config.stoplist)
    index = build(
        load_wiki_dump(config.dump, limit=config.limit),
        stops,
        batch_size=args.batch_size,
    )
    index.persist(out)
    write_run_manifest(out, "build-index", config, [config.dump])
    return EXIT_OK


def cmd_search(args, config):
    index = _open(config)
    k = args.k if config.limit is None else min(args.k, config.limit)
    params = config.ranking_params()
    hits = retrieve_hits(index, args.query, k, params)
    print("rank\tdoc_id\ttitle\traw_score\tboosted_score\ttier\tfield")
    for r, h in enumerate(hits, 1):
        print(
            f"{r}\t{h.doc_id}\t{h.title}\t{h.raw_score:.6f}\t"
            f"{h.boosted_score:.6f}\t{h.rerank_tier}\t{h.best_field.value}"
        )
    return EXIT_OK


def _training_records(index, questions, config):
    pipeline_config = config.pipeline_config()
    records, errors = [], []
    for q in questions:
        try:
            gold = gold_documents(
                index, q, pipeline_config.ranking, config.min_ratio
            )
            recs, _ = training_context(index, q, gold, pipeline_config)
        except (MissingGoldError, NoOracleError, ValueError) as e:
            logger.warning("Skipping %r: %s", q.question_id, e)
            errors.append({"question_id": q.question_id, "error": str(e)})
            continue
        records.extend(recs)
    return records, errors


def cmd_oracle_gen(args, config):
    index = _open(config)
    questions = _questions(config)
    os.makedirs(config.output, exist_ok=True)
    records, errors = _training_records(index, questions, config)
    path = os.path.join(config.output, "oracle.jsonl")
    n = write_oracle_records(path, (r.oracle for r in records))
    logger.info("Wrote %d oracle queries to %s.", n, path)
    return _finish(config, "oracle-gen", errors, [config.dataset])


def cmd_export_training_data(args, config):
    index = _open(config)
    questions = _questions(config)
    os.makedirs(config.output, exist_ok=True)
    records, errors = _training_records(index, questions, config)
    write_jsonl(
        os.path.join(config.output, "training.jsonl"),
        (r.to_record() for r in records),
    )
    n = write_jsonl(
        os.path.join(config.output, "training_squad.jsonl"),
        (r.to_squad() for r in records),
    )
    logger.info("Exported %d training records.", n)
    return _finish(config, "export-training-data", errors, [config.dataset])


def cmd_run_pipeline(args, config):
    index = _open(config)
    questions = _questions(config)
    generators = make_generators(config, index)
    os.makedirs(config.output, exist_ok=True)
    results, errors = run_batch(
        index, questions, generators, config.pipeline_config()
    )
    write_trace(
        os.path.join(config.output, "trace.jsonl"),
        (t for r in results for t in r.traces),
    )
    with open(
        os.path.join(config.output, "qa_records.json"), "w", encoding="utf-8"
    ) as f:
        json.dump([r.to_qa_record() for r in results], f, ensure_ascii=False)
    logger.info("Ran the pipeline on %d questions.", len(results))
    return _finish(config, "run-pipeline", errors, [config.dataset])


def _plot(reports, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
    except ImportError:
        logger.warning("matplotlib is not installed, skipping the plot.")
        return
    ax = plot_recall_curves(reports)
    ax.figure.savefig(path, bbox_inches="tight")


def cmd_eval(args, config):
    os.makedirs(config.output, exist_ok=True)
    prefix = os.path.join(config.output, args.mode)

    if args.mode == "spans":
        if not args.predictions or not args.oracle:
            raise ValueError("spans mode needs --predictions and --oracle.")
        predictions = ExternalGenerator.from_file(args.predictions).queries
        summary = evaluate_generator_spans(
            predictions, list(read_jsonl(args.oracle))
        )
        with open(f"{prefix}.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)
        print(f"em\t{summary['em']:.2f}\nf1\t{summary['f1']:.2f}")
        return _finish(config, "eval", [], [args.predictions, args.oracle])

    index = _open(config)
    questions = _questions(config)
    pipeline_config = config.pipeline_config()
    errors = []
    if args.mode == "single-hop":
        report = evaluate_single_hop(
            index,
            questions,
            args.k,
            config.ranking_params(),
            budget=pipeline_config.budget,
        )
    elif args.mode == "oracle":
        report, errors = evaluate_oracle(
            index, questions, args.k, pipeline_config
        )
    else:
        ks = tuple(k for k in args.k if k <= pipeline_config.budget)
        report, _, errors = evaluate_pipeline(
            index,
            questions,
            make_generators(config, index),
            pipeline_config,
            ks or None,
        )

    write_report(report, prefix)
    print(report.to_tsv(), end="")
    print(f"both_gold@{report.budget}\t{report.both_gold_pct:.2f}")
    if args.plot:
        _plot([report], f"{prefix}.png")
    return _finish(config, "eval", errors, [config.dataset])


def cmd_ablation(args, config):
    index = _open(config)
    questions = _questions(config)
    os.makedirs(config.output, exist_ok=True)
    grid = RankingParams.ablations(config.ranking_params())
    reports = run_ablation(index, questions, grid=grid, k=args.k)
    table = format_ablation_table(reports, k=args.k)
    with open(os.path.join(config.output, "ablation.tsv"), "w") as f:
        f.write(table)
    print(table, end="")
    return _finish(config, "ablation", [], [config.dataset])


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = resolve_config(args)
        set_fold_table(config.fold_table)
        return args.func(args, config)
    except (ValueError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
