"""Gold document recall: per question ranks of the two gold documents, their
``d_1``/``d_2`` assignment, recall@k curves, both-gold coverage, the ranking
ablation grid and span metrics for generated queries.
"""

import csv
import io
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .oracle import NoOracleError
from .pipeline import (
    MissingGoldError,
    PipelineConfig,
    gold_documents,
    run_batch,
    training_context,
)
from .ranking import RankingParams, retrieve_hits
from .textproc import simple_analyze

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 5, 10, 20, 50)
SERIES = ("d_1", "d_2")
_ARTICLES = frozenset(("a", "an", "the"))


class QuestionSetMismatchError(ValueError):
    """Raised when reports over different questions are compared."""


@dataclass(frozen=True)
class GoldPair:
    """The two gold titles of a question."""

    question_id: str
    gold_title_a: str
    gold_title_b: str
    question_type: str | None = None
    level: str | None = None

    def __post_init__(self):
        if self.gold_title_a == self.gold_title_b:
            raise ValueError(
                f"Gold titles of {self.question_id!r} must differ."
            )

    @property
    def titles(self):
        return (self.gold_title_a, self.gold_title_b)

    @classmethod
    def from_question(cls, question):
        a, b = question.gold_titles
        return cls(
            question.question_id, a, b, question.question_type, question.level
        )


@dataclass(frozen=True)
class GoldOrder:
    """Gold titles ordered by how easily they are retrieved, with their
    best 1-based ranks (``math.inf`` if never retrieved).
    """

    d1: str
    d2: str
    rank1: float
    rank2: float


def _as_lists(ranked_results):
    if not ranked_results:
        return []
    if isinstance(ranked_results[0], str):
        return [ranked_results]
    return ranked_results


def gold_ranks(ranked_results, titles):
    """The best rank of each title over one or several ranked title lists.

    Returns
    -------
    dict[str, float]
        1-based ranks, ``math.inf`` for titles found nowhere.
    """
    best = dict.fromkeys(titles, math.inf)
    for results in _as_lists(ranked_results):
        for r, title in enumerate(results, 1):
            if title in best and r < best[title]:
                best[title] = r
    return best


def assign_gold_order(ranked_results, gold_pair):
    """Call ``d_1`` the gold document with the better best rank over the
    evaluated queries and ``d_2`` the other, ties broken by title.

    Parameters
    ----------
    ranked_results : list[str] or list[list[str]]
        Ranked titles of one query, or of each evaluated query.
    gold_pair : GoldPair
        The question's gold titles.

    Returns
    -------
    GoldOrder
    """
    ranks = gold_ranks(ranked_results, gold_pair.titles)
    (t1, r1), (t2, r2) = sorted(ranks.items(), key=lambda x: (x[1], x[0]))
    return GoldOrder(t1, t2, r1, r2)


@dataclass(frozen=True)
class RecallReport:
    """Recall@k of ``d_1`` and ``d_2`` in percent.

    Parameters
    ----------
    name : str
        The evaluated configuration.
    ks : tuple[int, ...]
        Cutoffs, ascending.
    d1, d2 : tuple[float, ...]
        Recall percentages at each cutoff.
    both_gold_pct : float
        Percentage of questions with both gold documents within ``budget``.
    budget : int
        The paragraph budget ``both_gold_pct`` refers to.
    question_ids : tuple[str, ...]
        The evaluated questions, sorted.
    facets : dict[str, RecallReport]
        Optional breakdown, e.g. by question type.
    """

    name: str
    ks: tuple
    d1: tuple
    d2: tuple
    both_gold_pct: float
    budget: int
    question_ids: tuple = ()
    facets: dict = field(default_factory=dict, compare=False)

    @property
    def n_questions(self):
        return len(self.question_ids)

    def recall(self, series, k):
        """Recall of ``series`` (``"d_1"`` or ``"d_2"``) at cutoff ``k``."""
        values = {"d_1": self.d1, "d_2": self.d2}[series]
        return values[self.ks.index(k)]

    def check(self):
        for series in (self.d1, self.d2):
            if any(not 0 <= v <= 100 for v in series):
                raise AssertionError("Recall outside [0, 100].")
            if any(a > b for a, b in zip(series, series[1:])):
                raise AssertionError("Recall decreases with k.")
        if any(a < b for a, b in zip(self.d1, self.d2)):
            raise AssertionError("d_2 recall exceeds d_1 recall.")

    def to_tsv(self):
        lines = ["k\td_1\td_2"]
        for k, a, b in zip(self.ks, self.d1, self.d2):
            lines.append(f"{k}\t{a:.2f}\t{b:.2f}")
        return "\n".join(lines) + "\n"

    def csv_rows(self):
        """``(k, series, value)`` rows, series named ``<name>:<d_i>``."""
        rows = []
        for series, values in zip(SERIES, (self.d1, self.d2)):
            for k, v in zip(self.ks, values):
                rows.append((k, f"{self.name}:{series}", round(v, 2)))
        return rows

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("k", "series", "value"))
        writer.writerows(self.csv_rows())
        return buf.getvalue()

    def to_dict(self):
        return {
            "name": self.name,
            "questions": self.n_questions,
            "ks": list(self.ks),
            "d_1": [round(v, 2) for v in self.d1],
            "d_2": [round(v, 2) for v in self.d2],
            "both_gold_pct": round(self.both_gold_pct, 2),
            "budget": self.budget,
            "facets": {k: r.to_dict() for k, r in sorted(self.facets.items())},
        }


def _pct(count, total):
    return 100.0 * count / total if total else 0.0


def recall_curves(results, gold_pairs, ks=DEFAULT_KS, name="", budget=None):
    """Recall@k curves of ``d_1`` and ``d_2``.

    Parameters
    ----------
    results : dict[str, list[list[str]]]
        Per question id, the ranked titles of each evaluated query.
        Questions without results count as misses.
    gold_pairs : sequence of GoldPair
        The evaluated questions.
    ks : sequence of int, optional
        Cutoffs.
    name : str, optional
        Report name.
    budget : int, optional
        Cutoff for the both-gold percentage, ``max(ks)`` by default.

    Returns
    -------
    RecallReport
    """
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive, got {ks}.")
    budget = ks[-1] if budget is None else budget

    orders = []
    for pair in gold_pairs:
        ranked = results.get(pair.question_id)
        if ranked is None:
            logger.warning("No results for %r.", pair.question_id)
            ranked = []
        orders.append(assign_gold_order(ranked, pair))

    total = len(orders)
    d1 = tuple(_pct(sum(o.rank1 <= k for o in orders), total) for k in ks)
    d2 = tuple(_pct(sum(o.rank2 <= k for o in orders), total) for k in ks)
    both = _pct(sum(o.rank2 <= budget for o in orders), total)
    report = RecallReport(
        name=name,
        ks=ks,
        d1=d1,
        d2=d2,
        both_gold_pct=both,
        budget=budget,
        question_ids=tuple(sorted(p.question_id for p in gold_pairs)),
    )
    report.check()
    return report


def recall_by_type(results, gold_pairs, ks=DEFAULT_KS, name="", budget=None):
    """:func:`recall_curves` separately for each question type."""
    groups = defaultdict(list)
    for pair in gold_pairs:
        groups[pair.question_type or "unknown"].append(pair)
    return {
        qtype: recall_curves(results, pairs, ks, f"{name}[{qtype}]", budget)
        for qtype, pairs in sorted(groups.items())
    }


def _with_facets(results, gold_pairs, ks, name, budget=None):
    report = recall_curves(results, gold_pairs, ks, name, budget)
    facets = recall_by_type(results, gold_pairs, ks, name, budget)
    report.facets.update(facets)
    return report


def both_gold_pct(contexts, gold_pairs):
    """Percentage of questions whose final context holds both gold titles.

    Parameters
    ----------
    contexts : dict[str, collection of str]
        The titles in each question's final context.
    gold_pairs : sequence of GoldPair
        The questions.

    Returns
    -------
    float
    """
    hits = 0
    for pair in gold_pairs:
        titles = set(contexts.get(pair.question_id, ()))
        hits += pair.gold_title_a in titles and pair.gold_title_b in titles
    return _pct(hits, len(gold_pairs))


def _titles(index, doc_ids):
    return [index.get_document(i).title for i in doc_ids]


def evaluate_single_hop(
    index,
    questions,
    ks=DEFAULT_KS,
    params=None,
    name="single-hop",
    budget=None,
):
    """Recall of querying with the question alone.

    Parameters
    ----------
    index : Index
        The index to search.
    questions : sequence of DatasetQuestion
        Questions with two gold titles each.
    ks : sequence of int, optional
        Cutoffs, at most ``params.rerank_pool``.
    params : RankingParams, optional
        Scoring parameters.
    name : str, optional
        Report name.
    budget : int, optional
        Paragraphs ``both_gold_pct`` refers to, the default pipeline budget
        (two hops of five) if not given.

    Returns
    -------
    RecallReport
    """
    params = RankingParams() if params is None else params
    budget = PipelineConfig().budget if budget is None else budget
    depth = max(max(ks), budget)
    results = {}
    for i, q in enumerate(questions, 1):
        hits = retrieve_hits(index, q.question, depth, params)
        results[q.question_id] = [[h.title for h in hits]]
        if i % 1000 == 0:
            logger.info("Evaluated %d questions.", i)
    pairs = [GoldPair.from_question(q) for q in questions]
    return _with_facets(results, pairs, ks, name, budget=budget)


def oracle_results(index, questions, config=None):
    """The pool ranking of each hop's oracle query, per question.

    Returns
    -------
    results : dict[str, list[list[str]]]
    records : dict[str, list[TrainingRecord]]
    errors : list[dict]
        ``{"question_id", "error"}`` for each question without oracle
        queries.
    """
    config = PipelineConfig() if config is None else config
    results, records, errors = {}, {}, []
    for q in questions:
        try:
            gold = gold_documents(index, q, config.ranking, config.min_ratio)
            recs, _ = training_context(index, q, gold, config)
        except (MissingGoldError, NoOracleError) as e:
            logger.warning("No oracle results for %r: %s", q.question_id, e)
            errors.append({"question_id": q.question_id, "error": str(e)})
            continue
        records[q.question_id] = recs
        results[q.question_id] = [
            _titles(index, r.oracle.ranked_doc_ids) for r in recs
        ]
    return results, records, errors


def evaluate_oracle(index, questions, ks=DEFAULT_KS, config=None):
    """Recall of the oracle queries of every hop, each gold document counted
    at its best rank over the hops.

    Returns
    -------
    report : RecallReport
        Questions without oracle queries count as misses. Both gold
        documents count as covered when each is in the top ``config.n`` of
        some hop, the paragraphs the pipeline would keep.
    errors : list[dict]
        The questions without oracle queries, see :func:`oracle_results`.
    """
    config = PipelineConfig() if config is None else config
    results, _, errors = oracle_results(index, questions, config)
    pairs = [GoldPair.from_question(q) for q in questions]
    report = _with_facets(results, pairs, ks, "oracle", budget=config.n)
    return report, errors


def evaluate_pipeline(
    index, questions, generators, config=None, ks=None, name="pipeline"
):
    """Recall within the final contexts of the full pipeline, documents in
    hop then rank order.

    Returns
    -------
    report : RecallReport
        ``both_gold_pct`` refers to the full ``hops * n`` budget.
    results : list[PipelineResult]
    errors : list[dict]
        ``{"question_id", "error"}`` for each question that failed.
    """
    config = PipelineConfig() if config is None else config
    if ks is None:
        ks = tuple(k for k in DEFAULT_KS if k <= config.budget)
    runs, errors = run_batch(index, questions, generators, config)
    ranked = {
        r.question.question_id: [[d.title for d in r.context.documents]]
        for r in runs
    }
    pairs = [GoldPair.from_question(q) for q in questions]
    report = _with_facets(ranked, pairs, ks, name, budget=config.budget)
    return report, runs, errors


def run_ablation(index, questions, grid=None, k=10):
    """Single-hop recall at ``k`` for each ranking configuration.

    Parameters
    ----------
    index : Index
        The index to search.
    questions : sequence of DatasetQuestion
        The question set.
    grid : dict[str, RankingParams], optional
        Named configurations, :meth:`RankingParams.ablations` by default.
    k : int, optional
        The cutoff.

    Returns
    -------
    dict[str, RecallReport]
    """
    grid = RankingParams.ablations() if grid is None else grid
    reports = {}
    for name, params in grid.items():
        logger.info("Ablation setting %r.", name)
        reports[name] = evaluate_single_hop(
            index, questions, ks=(k,), params=params, name=name
        )
    return reports


def format_ablation_table(reports, k=10):
    """TSV with one row per configuration: ``setting, d_1 R@k, d_2 R@k``."""
    lines = [f"setting\td_1 R@{k}\td_2 R@{k}"]
    for name, r in reports.items():
        lines.append(
            f"{name}\t{r.recall('d_1', k):.2f}\t{r.recall('d_2', k):.2f}"
        )
    return "\n".join(lines) + "\n"


def oracle_vs_singlehop_delta(oracle, single_hop, oracle_k=5, single_k=10):
    """Recall gains of oracle queries over single-hop queries,
    ``(d_1 delta, d_2 delta)`` in percentage points.

    The defaults compare oracle recall at 5 per hop with single-hop recall
    at 10, equal paragraph budgets over two hops.
    """
    if oracle.question_ids != single_hop.question_ids:
        raise QuestionSetMismatchError(
            f"Reports {oracle.name!r} ({oracle.n_questions} questions) and "
            f"{single_hop.name!r} ({single_hop.n_questions} questions) cover "
            "different questions."
        )
    return tuple(
        oracle.recall(s, oracle_k) - single_hop.recall(s, single_k)
        for s in SERIES
    )


def _span_tokens(text):
    return [t.text for t in simple_analyze(text) if t.text not in _ARTICLES]


def span_em_f1(predicted, reference):
    """Exact match and token F1 between two spans, after folding,
    lowercasing and dropping punctuation and articles.

    Returns
    -------
    em : float
        1.0 or 0.0.
    f1 : float
    """
    pred = _span_tokens(predicted)
    ref = _span_tokens(reference)
    em = float(pred == ref)
    common = sum((Counter(pred) & Counter(ref)).values())
    if common == 0:
        return em, em
    precision = common / len(pred)
    recall = common / len(ref)
    return em, 2 * precision * recall / (precision + recall)


def evaluate_generator_spans(predictions, oracle_records):
    """Span exact match and F1 of generated queries against oracle queries.

    Parameters
    ----------
    predictions : dict[tuple[str, int], str]
        Generated query per ``(question_id, hop)``.
    oracle_records : iterable of dict
        Oracle query records with ``question_id``, ``hop`` and ``query``.
        Missing predictions score zero.

    Returns
    -------
    dict
        Overall and per hop ``em`` and ``f1`` percentages and counts.
    """
    per_hop = defaultdict(lambda: [0, 0.0, 0.0])
    for record in oracle_records:
        hop = int(record["hop"])
        key = (str(record["question_id"]), hop)
        em, f1 = span_em_f1(predictions.get(key, ""), record["query"])
        acc = per_hop[hop]
        acc[0] += 1
        acc[1] += em
        acc[2] += f1

    def summary(n, em, f1):
        return {"count": n, "em": _pct(em, n), "f1": _pct(f1, n)}

    totals = [sum(acc[i] for acc in per_hop.values()) for i in range(3)]
    out = summary(*totals)
    out["hops"] = {h: summary(*acc) for h, acc in sorted(per_hop.items())}
    return out


def write_report(report, prefix):
    """Write ``<prefix>.tsv``, ``<prefix>.csv`` and ``<prefix>.json``."""
    with open(f"{prefix}.tsv", "w", encoding="utf-8") as f:
        f.write(report.to_tsv())
    with open(f"{prefix}.csv", "w", encoding="utf-8") as f:
        f.write(report.to_csv())
    with open(f"{prefix}.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)


def plot_recall_curves(reports, ax=None):
    """Plot the ``d_1`` (solid) and ``d_2`` (dashed) recall curves of each
    report against a logarithmic k axis.

    Requires ``matplotlib``.

    Returns
    -------
    matplotlib.axes.Axes
    """
    import matplotlib.pyplot as plt

    if ax is None:
        _, ax = plt.subplots(figsize=(5, 4))

    for i, report in enumerate(reports):
        color = f"C{i}"
        for values, style, series in (
            (report.d1, "-o", "d_1"),
            (report.d2, "--s", "d_2"),
        ):
            ax.plot(
                report.ks,
                values,
                style,
                color=color,
                label=f"{report.name} {series}",
            )

    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("recall@k (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False)
    return ax
