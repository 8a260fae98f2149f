"""Iterative retrieval: a query generator reads the question and the
retrieval context so far, its query fetches the next ``n`` documents, and
these extend the context for the next hop.

The retrieval context is serialized for generators as the question followed
by every retrieved document as ``<t>title</t> text``.
"""

import logging
import re
import warnings
from dataclasses import dataclass, field

from .corpus_io import DatasetQuestion
from .oracle import DEFAULT_MIN_RATIO, NoOracleError, oracle_query
from .ranking import RankingParams, retrieve_hits
from .utils import get_debug, lazyabstractmethod, read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

TITLE_OPEN = "<t>"
TITLE_CLOSE = "</t>"

_DOC_RE = re.compile(r" <t>(.*?)</t> ", flags=re.DOTALL)


class MissingGoldError(LookupError):
    """Raised when a gold title does not resolve to any indexed document."""

    def __init__(self, question_id, title):
        self.question_id = question_id
        self.title = title
        super().__init__(
            f"Gold title {title!r} of question {question_id!r} is not in the "
            "corpus."
        )


@dataclass(frozen=True)
class PipelineConfig:
    """How many hops to run and how many documents each hop adds.

    Parameters
    ----------
    hops : int, optional
        The number of retrieval steps ``S``.
    n : int, optional
        Documents added per hop, at most ``ranking.rerank_pool``.
    ranking : RankingParams, optional
        Scoring parameters of every hop.
    min_ratio : float, optional
        Overlap merging threshold for oracle queries.
    """

    hops: int = 2
    n: int = 5
    ranking: RankingParams = field(default_factory=RankingParams)
    min_ratio: float = DEFAULT_MIN_RATIO

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError(f"hops must be at least 1, got {self.hops}.")
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}.")
        if self.n > self.ranking.rerank_pool:
            raise ValueError(
                f"n={self.n} exceeds the rerank pool of "
                f"{self.ranking.rerank_pool}."
            )

    @property
    def budget(self):
        """The total number of paragraphs handed on, ``hops * n``."""
        return self.hops * self.n


@dataclass(frozen=True, slots=True)
class Hop:
    """The documents one query added to the context, in rerank order.

    ``injected_gold`` is the id of a gold document forced into the last
    slot when its query missed it. ``empty_query`` marks a hop whose
    generator produced no query.
    """

    hop_index: int
    query: str
    retrieved: tuple = ()
    injected_gold: int | None = None
    empty_query: bool = False


@dataclass(frozen=True)
class RetrievalContext:
    """The question plus all documents retrieved so far. With no hops this
    is just the question.
    """

    question_id: str
    question: str
    hops: tuple = ()

    @property
    def documents(self):
        """All retrieved documents, in hop then rank order."""
        return [doc for hop in self.hops for doc in hop.retrieved]

    @property
    def doc_ids(self):
        return {doc.doc_id for doc in self.documents}

    @property
    def titles(self):
        return {doc.title for doc in self.documents}

    def extend(self, hop):
        return RetrievalContext(
            self.question_id, self.question, self.hops + (hop,)
        )

    def serialize(self):
        return serialize_context(self)

    def check(self):
        docs = self.documents
        if len({d.doc_id for d in docs}) != len(docs):
            raise AssertionError(
                f"Duplicate documents in context of {self.question_id!r}."
            )
        for i, hop in enumerate(self.hops, 1):
            if hop.hop_index != i:
                raise AssertionError(f"Hop {hop.hop_index} at position {i}.")


def serialize_context(context):
    """Render a retrieval context as the question followed by
    ``" <t>title</t> text"`` for every document, in hop then rank order.

    Parameters
    ----------
    context : RetrievalContext
        The context to render.

    Returns
    -------
    str
    """
    parts = [context.question]
    for doc in context.documents:
        parts.append(f" {TITLE_OPEN}{doc.title}{TITLE_CLOSE} {doc.text}")
    return "".join(parts)


def parse_context(text):
    """Invert :func:`serialize_context`, for titles and texts free of the
    delimiters.

    Returns
    -------
    question : str
    documents : list[tuple[str, str]]
        ``(title, text)`` pairs in order.
    """
    parts = _DOC_RE.split(text)
    question = parts[0]
    documents = list(zip(parts[1::2], parts[2::2]))
    return question, documents


@dataclass(frozen=True)
class HopTrace:
    """Everything that happened during one hop: the query, the reranked
    pool, which documents were kept and which dropped as already present.
    """

    question_id: str
    hop: int
    query: str
    pool: tuple = ()
    kept: tuple = ()
    dropped: tuple = ()
    injected: int | None = None
    empty_query: bool = False

    def to_record(self):
        return {
            "question_id": self.question_id,
            "hop": self.hop,
            "query": self.query,
            "pool": [
                {
                    "doc_id": h.doc_id,
                    "title": h.title,
                    "raw_score": h.raw_score,
                    "boosted_score": h.boosted_score,
                    "tier": h.rerank_tier,
                    "field": h.best_field.value,
                }
                for h in self.pool
            ],
            "kept": list(self.kept),
            "dropped": list(self.dropped),
            "injected": self.injected,
            "empty_query": self.empty_query,
        }


def write_trace(path, traces):
    """Write hop traces as JSON lines, returning the number written."""
    return write_jsonl(path, (t.to_record() for t in traces))


def as_question(question):
    """Wrap plain question text as a :class:`DatasetQuestion`."""
    if isinstance(question, DatasetQuestion):
        return question
    return DatasetQuestion(question_id="", question=str(question))


class QueryGenerator:
    """Produces the hop ``k`` query from the question and the serialized
    retrieval context.
    """

    name = None

    generate = lazyabstractmethod("generate")
    """generate(question, context_text, hop) -> str"""

    def __repr__(self):
        return f"{self.__class__.__name__}()"


class QuestionGenerator(QueryGenerator):
    """Always query with the question itself, the single-hop baseline."""

    name = "question"

    def generate(self, question, context_text, hop):
        return question.question


class OracleGenerator(QueryGenerator):
    """Query with the oracle span for the gold document that is not yet in
    the context and is easiest to retrieve, ties broken by title.

    Once every gold document is present the question itself is used.

    Parameters
    ----------
    index : Index
        The index oracle candidates are evaluated against.
    params : RankingParams, optional
        Scoring parameters.
    min_ratio : float, optional
        Overlap merging threshold.
    """

    name = "oracle"

    def __init__(self, index, params=None, min_ratio=DEFAULT_MIN_RATIO):
        self.index = index
        self.params = RankingParams() if params is None else params
        self.min_ratio = min_ratio

    def oracle(self, question, context_text, hop):
        """The selected :class:`~goldenir.oracle.OracleQuery`, or ``None``
        if no gold document remains or none yields candidates.
        """
        _, present = parse_context(context_text)
        present = {title for title, _ in present}
        remaining = sorted(
            t for t in question.gold_titles if t not in present
        )
        best = None
        for title in remaining:
            gold = resolve_gold(self.index, question.question_id, title)
            try:
                oq = oracle_query(
                    question.question_id,
                    hop,
                    context_text,
                    gold,
                    self.index,
                    self.params,
                    self.min_ratio,
                )
            except NoOracleError as e:
                logger.debug("%s", e)
                continue
            if best is None or oq.gold_rank < best.gold_rank:
                best = oq
        return best

    def generate(self, question, context_text, hop):
        _, present = parse_context(context_text)
        present = {title for title, _ in present}
        if all(t in present for t in question.gold_titles):
            return question.question
        oq = self.oracle(question, context_text, hop)
        return "" if oq is None else oq.text

    def __repr__(self):
        return f"OracleGenerator(min_ratio={self.min_ratio})"


class ExternalGenerator(QueryGenerator):
    """Look up precomputed queries, e.g. from a separately trained model.

    Parameters
    ----------
    queries : dict[tuple[str, int], str]
        Query text keyed by ``(question_id, hop)``. Missing entries give an
        empty query.
    """

    name = "external"

    def __init__(self, queries):
        self.queries = dict(queries)

    @classmethod
    def from_file(cls, path):
        """Read JSON lines with ``question_id``, ``hop`` and ``query``."""
        return cls(
            ((str(r["question_id"]), int(r["hop"])), r["query"])
            for r in read_jsonl(path)
        )

    def generate(self, question, context_text, hop):
        return self.queries.get((question.question_id, hop), "")

    def __repr__(self):
        return f"ExternalGenerator(size={len(self.queries)})"


def resolve_gold(index, question_id, title):
    """The document with exactly ``title``, first occurrence."""
    doc_id = index.lookup_title(title)
    if doc_id is None:
        raise MissingGoldError(question_id, title)
    return index.get_document(doc_id)


def _select_new(hits, context, n):
    present_ids = context.doc_ids
    present_titles = context.titles
    kept, dropped = [], []
    for h in hits:
        if h.doc_id in present_ids or h.title in present_titles:
            dropped.append(h.doc_id)
        elif len(kept) < n:
            kept.append(h)
            present_titles = present_titles | {h.title}
    return kept, dropped


def run_hop(index, context, generator, config=None, question=None, gold=None):
    """Run one hop, ``C_{k+1} = C_k + IR_n(G_k(q, C_k))``.

    The reranked pool is walked in order and the first ``n`` documents not
    already in the context are kept.

    Parameters
    ----------
    index : Index
        The index to search.
    context : RetrievalContext
        The context ``C_k``.
    generator : QueryGenerator
        Produces the hop query.
    config : PipelineConfig, optional
        Hop count, ``n`` and ranking parameters.
    question : DatasetQuestion, optional
        Handed to the generator, built from the context if not given.
    gold : Document, optional
        If given and not retrieved, replaces the lowest ranked kept
        document (or fills a free slot).

    Returns
    -------
    context : RetrievalContext
        ``C_{k+1}``.
    trace : HopTrace
    """
    config = PipelineConfig() if config is None else config
    k = len(context.hops) + 1
    if k > config.hops:
        raise ValueError(f"Hop {k} exceeds the configured {config.hops}.")
    if question is None:
        question = DatasetQuestion(context.question_id, context.question)

    query = generator.generate(question, serialize_context(context), k)

    if not query or not query.strip():
        logger.warning(
            "Empty query for %r hop %d from %r.",
            context.question_id,
            k,
            generator,
        )
        warnings.warn(f"Empty query for {context.question_id!r} hop {k}.")
        kept, dropped, pool = [], [], []
        empty = True
    else:
        params = config.ranking
        pool = retrieve_hits(index, query, params.rerank_pool, params)
        kept, dropped = _select_new(pool, context, config.n)
        empty = False

    docs = [index.get_document(h.doc_id) for h in kept]
    injected = None
    if (
        gold is not None
        and gold.doc_id not in context.doc_ids
        and all(d.doc_id != gold.doc_id for d in docs)
    ):
        if len(docs) >= config.n:
            docs[-1] = gold
        else:
            docs.append(gold)
        injected = gold.doc_id
        logger.debug(
            "Injected gold %d into %r hop %d.",
            gold.doc_id,
            context.question_id,
            k,
        )

    hop = Hop(
        hop_index=k,
        query=query or "",
        retrieved=tuple(docs),
        injected_gold=injected,
        empty_query=empty,
    )
    trace = HopTrace(
        question_id=context.question_id,
        hop=k,
        query=query or "",
        pool=tuple(pool),
        kept=tuple(d.doc_id for d in docs),
        dropped=tuple(dropped),
        injected=injected,
        empty_query=empty,
    )
    new_context = context.extend(hop)
    if get_debug():
        new_context.check()
        if not context.doc_ids <= new_context.doc_ids:
            raise AssertionError("Context lost documents.")
    return new_context, trace


@dataclass(frozen=True)
class PipelineResult:
    """The final context of a question and the trace of each hop."""

    question: DatasetQuestion
    context: RetrievalContext
    traces: tuple = ()

    def to_qa_record(self):
        return export_qa_input(self.context, self.question)


def run(index, question, generators, config=None):
    """Run all hops of the pipeline for one question.

    Parameters
    ----------
    index : Index
        The index to search.
    question : DatasetQuestion or str
        The question.
    generators : sequence of QueryGenerator
        One generator per hop.
    config : PipelineConfig, optional
        Defaults to two hops of five documents.

    Returns
    -------
    PipelineResult
    """
    config = PipelineConfig() if config is None else config
    question = as_question(question)
    if len(generators) != config.hops:
        raise ValueError(
            f"Got {len(generators)} generators for {config.hops} hops."
        )
    context = RetrievalContext(question.question_id, question.question)
    traces = []
    for generator in generators:
        context, trace = run_hop(index, context, generator, config, question)
        traces.append(trace)
    return PipelineResult(question, context, tuple(traces))


def run_batch(index, questions, generators, config=None):
    """Run the pipeline over many questions, isolating failures.

    Returns
    -------
    results : list[PipelineResult]
    errors : list[dict]
        ``{"question_id", "error"}`` for each question that failed.
    """
    results, errors = [], []
    for i, question in enumerate(questions, 1):
        question = as_question(question)
        try:
            results.append(run(index, question, generators, config))
        except (ValueError, LookupError) as e:
            logger.warning("Skipping %r: %s", question.question_id, e)
            errors.append(
                {"question_id": question.question_id, "error": str(e)}
            )
        if i % 1000 == 0:
            logger.info("Ran pipeline on %d questions.", i)
    return results, errors


def export_qa_input(context, question=None):
    """The final context in the dataset's distractor setting schema, titled
    paragraphs in hop then rank order.

    Parameters
    ----------
    context : RetrievalContext
        The final context.
    question : DatasetQuestion, optional
        If given, its answer, type and level are carried along.

    Returns
    -------
    dict
    """
    paragraphs = []
    seen = set()
    for doc in context.documents:
        if doc.title in seen:
            continue
        seen.add(doc.title)
        paragraphs.append([doc.title, list(doc.sentences)])

    record = {
        "_id": context.question_id,
        "question": context.question,
        "context": paragraphs,
    }
    if question is not None:
        if question.answer is not None:
            record["answer"] = question.answer
        if question.supporting_facts:
            record["supporting_facts"] = [
                list(sf) for sf in question.supporting_facts
            ]
        if question.question_type is not None:
            record["type"] = question.question_type
        if question.level is not None:
            record["level"] = question.level
    return record


@dataclass(frozen=True)
class TrainingRecord:
    """Supervision for the hop ``hop`` query generator: its input context
    and the oracle span within it.
    """

    question_id: str
    hop: int
    question: str
    context: str
    oracle: object

    def to_record(self):
        record = self.oracle.to_record()
        record["question"] = self.question
        record["context"] = self.context
        return record

    def to_squad(self):
        """A span extraction example, with the context as passage and the
        oracle span as answer.
        """
        span = self.oracle.span
        return {
            "id": f"{self.question_id}_{self.hop}",
            "question": self.question,
            "context": self.context,
            "answers": [{"text": span.text, "answer_start": span.char_start}],
        }


def order_gold_docs(index, question, gold_docs, params=None, min_ratio=None):
    """Order gold documents as ``d_1, d_2, ...``, the one whose oracle query
    from the question alone ranks it best first, ties by title.
    """
    min_ratio = DEFAULT_MIN_RATIO if min_ratio is None else min_ratio
    question = as_question(question)

    def key(doc):
        try:
            oq = oracle_query(
                question.question_id,
                1,
                question.question,
                doc,
                index,
                params,
                min_ratio,
            )
            rank = oq.gold_rank
        except NoOracleError:
            rank = float("inf")
        return (rank, doc.title)

    return sorted(gold_docs, key=key)


def gold_documents(index, question, params=None, min_ratio=None):
    """Resolve the gold titles of ``question`` and order them as
    ``d_1, d_2, ...`` with :func:`order_gold_docs`.
    """
    docs = [
        resolve_gold(index, question.question_id, t)
        for t in question.gold_titles
    ]
    return order_gold_docs(index, question, docs, params, min_ratio)


def training_context(index, question, gold_docs, config=None):
    """Build the supervision records of every hop.

    Hop ``k`` is retrieved with the oracle query for ``d_k``. If that misses
    ``d_k`` it is injected into the hop's last slot, so ``C_{k+1}`` always
    holds ``d_1 .. d_k``.

    Parameters
    ----------
    index : Index
        The index to search.
    question : DatasetQuestion or str
        The question.
    gold_docs : sequence of Document
        ``d_1 .. d_S``, one per hop.
    config : PipelineConfig, optional
        Hop count, ``n`` and ranking parameters.

    Returns
    -------
    records : list[TrainingRecord]
        One per hop.
    result : PipelineResult
        The final context with gold documents injected.
    """
    config = PipelineConfig() if config is None else config
    question = as_question(question)
    if len(gold_docs) != config.hops:
        raise ValueError(
            f"Got {len(gold_docs)} gold documents for {config.hops} hops."
        )

    context = RetrievalContext(question.question_id, question.question)
    records, traces = [], []
    for k, gold in enumerate(gold_docs, 1):
        context_text = serialize_context(context)
        oq = oracle_query(
            question.question_id,
            k,
            context_text,
            gold,
            index,
            config.ranking,
            config.min_ratio,
        )
        records.append(
            TrainingRecord(
                question.question_id, k, question.question, context_text, oq
            )
        )
        context, trace = run_hop(
            index,
            context,
            _FixedQuery(oq.text),
            config,
            question,
            gold=gold,
        )
        traces.append(trace)

        if get_debug():
            ids = context.doc_ids
            if any(d.doc_id not in ids for d in gold_docs[:k]):
                raise AssertionError("Gold document missing after injection.")

    return records, PipelineResult(question, context, tuple(traces))


class _FixedQuery(QueryGenerator):
    name = "fixed"

    def __init__(self, query):
        self.query = query

    def generate(self, question, context_text, hop):
        return self.query
