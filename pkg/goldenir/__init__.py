from . import utils, utils_test
from .corpus_io import (
    DatasetQuestion,
    DumpFormatError,
    DumpReadError,
    RunConfig,
    load_dataset,
    load_wiki_dump,
    write_run_manifest,
)
from .eval import (
    GoldOrder,
    GoldPair,
    QuestionSetMismatchError,
    RecallReport,
    assign_gold_order,
    both_gold_pct,
    evaluate_generator_spans,
    evaluate_oracle,
    evaluate_pipeline,
    evaluate_single_hop,
    format_ablation_table,
    gold_ranks,
    oracle_vs_singlehop_delta,
    plot_recall_curves,
    recall_by_type,
    recall_curves,
    run_ablation,
    span_em_f1,
)
from .index import (
    Document,
    FieldId,
    Index,
    IndexBuildError,
    IndexCorruptError,
    IndexLoadError,
    IndexVersionError,
    PostingList,
    build,
    open_index,
    persist,
    term_stats,
)
from .oracle import (
    Heuristic,
    NoOracleError,
    OracleQuery,
    SpanCandidate,
    candidate_queries,
    lcs_span,
    lcsubstr_span,
    oracle_query,
    overlap_merge_span,
    select_oracle,
)
from .pipeline import (
    ExternalGenerator,
    Hop,
    HopTrace,
    MissingGoldError,
    OracleGenerator,
    PipelineConfig,
    PipelineResult,
    QueryGenerator,
    QuestionGenerator,
    RetrievalContext,
    TrainingRecord,
    export_qa_input,
    order_gold_docs,
    parse_context,
    run,
    run_batch,
    run_hop,
    serialize_context,
    training_context,
)
from .ranking import (
    RankingParams,
    SearchHit,
    bm25,
    rerank,
    retrieve,
    retrieve_hits,
    search,
    title_match_tier,
)
from .textproc import (
    StopList,
    Token,
    asciifold,
    clean_for_overlap,
    load_fold_table,
    load_stoplist,
    set_fold_table,
    shingle2,
    simple_analyze,
    standard_analyze,
)

__all__ = (
    "asciifold",
    "assign_gold_order",
    "bm25",
    "both_gold_pct",
    "build",
    "candidate_queries",
    "clean_for_overlap",
    "DatasetQuestion",
    "Document",
    "DumpFormatError",
    "DumpReadError",
    "evaluate_generator_spans",
    "evaluate_oracle",
    "evaluate_pipeline",
    "evaluate_single_hop",
    "export_qa_input",
    "ExternalGenerator",
    "FieldId",
    "format_ablation_table",
    "gold_ranks",
    "GoldOrder",
    "GoldPair",
    "Heuristic",
    "Hop",
    "HopTrace",
    "Index",
    "IndexBuildError",
    "IndexCorruptError",
    "IndexLoadError",
    "IndexVersionError",
    "lcs_span",
    "lcsubstr_span",
    "load_dataset",
    "load_fold_table",
    "load_stoplist",
    "load_wiki_dump",
    "MissingGoldError",
    "NoOracleError",
    "open_index",
    "oracle_query",
    "oracle_vs_singlehop_delta",
    "OracleGenerator",
    "OracleQuery",
    "order_gold_docs",
    "overlap_merge_span",
    "parse_context",
    "persist",
    "PipelineConfig",
    "PipelineResult",
    "plot_recall_curves",
    "PostingList",
    "QueryGenerator",
    "QuestionGenerator",
    "QuestionSetMismatchError",
    "RankingParams",
    "recall_by_type",
    "recall_curves",
    "RecallReport",
    "rerank",
    "retrieve",
    "retrieve_hits",
    "RetrievalContext",
    "run",
    "run_ablation",
    "run_batch",
    "run_hop",
    "RunConfig",
    "SearchHit",
    "select_oracle",
    "serialize_context",
    "set_fold_table",
    "shingle2",
    "simple_analyze",
    "span_em_f1",
    "SpanCandidate",
    "standard_analyze",
    "StopList",
    "term_stats",
    "title_match_tier",
    "Token",
    "training_context",
    "TrainingRecord",
    "utils",
    "utils_test",
    "write_run_manifest",
)
