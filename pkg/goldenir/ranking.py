"""BM25 scoring, best-field multi-field search with title boosting, and the
title-match reranking heuristic. :func:`retrieve` is the retrieval
primitive ``IR_n`` used everywhere else.
"""

import functools
from collections import Counter
from dataclasses import dataclass, replace

import autoray as ar
import numpy as np

from .index import FieldId
from .textproc import get_fold_table, normalize_title

TIER_NAMES = ("exact", "title_in_query", "query_in_title")
DEFAULT_TIERS = (
    ("exact", 1.5),
    ("title_in_query", 1.25),
    ("query_in_title", 1.10),
)
MAX_TIER = 1.5


@dataclass(frozen=True)
class RankingParams:
    """Parameters of BM25 and of the title boosting heuristics.

    Parameters
    ----------
    k1 : float, optional
        BM25 term frequency saturation.
    b : float, optional
        BM25 length normalization, in ``[0, 1]``.
    title_field_boost : float, optional
        Multiplier applied to the scores of title-related fields.
    rerank_pool : int, optional
        How many raw results are reranked, and the largest allowed ``n``.
    tiers : tuple[tuple[str, float], ...], optional
        Multipliers for the match classes ``exact`` (title equals query),
        ``title_in_query`` and ``query_in_title``, non-increasing and within
        ``[1.0, 1.5]``. Anything else gets ``1.0``.
    """

    k1: float = 1.2
    b: float = 0.75
    title_field_boost: float = 1.25
    rerank_pool: int = 50
    tiers: tuple = DEFAULT_TIERS

    def __post_init__(self):
        object.__setattr__(
            self, "tiers", tuple((str(n), float(m)) for n, m in self.tiers)
        )
        if not self.k1 > 0:
            raise ValueError(f"k1 must be positive, got {self.k1}.")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}.")
        if not self.title_field_boost >= 1:
            raise ValueError(
                "title_field_boost must be >= 1, got "
                f"{self.title_field_boost}."
            )
        if self.rerank_pool < 1:
            raise ValueError(
                f"rerank_pool must be positive, got {self.rerank_pool}."
            )
        names = tuple(n for n, _ in self.tiers)
        if names != TIER_NAMES:
            raise ValueError(f"tiers must be named {TIER_NAMES}, got {names}.")
        values = [m for _, m in self.tiers]
        if any(not 1.0 <= m <= MAX_TIER for m in values):
            raise ValueError(f"Tier multipliers must be in [1, 1.5]: {values}")
        if any(a < b for a, b in zip(values, values[1:])):
            raise ValueError(f"Tier multipliers must not increase: {values}")

    def tier(self, name):
        """The multiplier of match class ``name``, 1.0 for ``"none"``."""
        if name == "none":
            return 1.0
        return dict(self.tiers)[name]

    def without_title_boost(self):
        return replace(self, title_field_boost=1.0)

    def without_reranking(self):
        return replace(self, tiers=tuple((n, 1.0) for n, _ in self.tiers))

    @classmethod
    def ablations(cls, base=None):
        """The four configurations of the IR setup ablation.

        Parameters
        ----------
        base : RankingParams, optional
            The full system, the defaults if not given.

        Returns
        -------
        dict[str, RankingParams]
        """
        base = cls() if base is None else base
        return {
            "final": base,
            "w/o title boosting": base.without_title_boost(),
            "w/o reranking": base.without_reranking(),
            "w/o both": base.without_title_boost().without_reranking(),
        }

    def to_dict(self):
        return {
            "k1": self.k1,
            "b": self.b,
            "title_field_boost": self.title_field_boost,
            "rerank_pool": self.rerank_pool,
            "tiers": dict(self.tiers),
        }


@dataclass(frozen=True, slots=True)
class SearchHit:
    """A scored document.

    ``raw_score`` is the best field BM25 score including the title field
    boost, ``boosted_score = raw_score * rerank_tier``.
    """

    doc_id: int
    title: str
    raw_score: float
    boosted_score: float
    best_field: FieldId
    rerank_tier: float = 1.0


def bm25_weight(tf, dl, n_t, N, avgdl, k1=1.2, b=0.75):
    """The Okapi BM25 weight of a term, vectorized over any of the inputs::

        idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

    with ``idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))``.

    Parameters
    ----------
    tf : int or array
        Term frequency in the document field.
    dl : int or array
        Length of the document field in tokens.
    n_t : int
        Number of documents containing the term.
    N : int
        Number of documents.
    avgdl : float
        Average field length.

    Returns
    -------
    float or array
    """
    idf = ar.do("log1p", (N - n_t + 0.5) / (n_t + 0.5), like="numpy")
    norm = k1 * (1 - b + b * ar.do("divide", dl, avgdl, like="numpy"))
    return idf * tf * (k1 + 1) / (tf + norm)


def bm25(term, doc_id, field, index, params=None):
    """The BM25 score of a single analyzed ``term`` for document ``doc_id``
    in ``field``, zero if the term is absent.
    """
    params = RankingParams() if params is None else params
    field = FieldId(field)
    n_t, postings = index.term_stats(field, term)
    if n_t == 0:
        return 0.0
    i = int(np.searchsorted(postings.doc_ids, doc_id))
    if i == n_t or postings.doc_ids[i] != doc_id:
        return 0.0
    return float(
        bm25_weight(
            int(postings.tfs[i]),
            index.field_length(field, doc_id),
            n_t,
            index.doc_count,
            index.avgdl(field),
            params.k1,
            params.b,
        )
    )


def _score_field(index, field, terms, params):
    """Sum BM25 over the query ``terms`` (with multiplicity) for every
    document with a match in ``field``.
    """
    fi = index.field_index(field)
    doc_ids, weights = [], []
    for term, qtf in Counter(terms).items():
        postings = fi.postings(term)
        n_t = len(postings)
        if n_t == 0:
            continue
        w = bm25_weight(
            postings.tfs,
            fi.lengths[postings.doc_ids],
            n_t,
            index.doc_count,
            fi.avgdl,
            params.k1,
            params.b,
        )
        doc_ids.append(postings.doc_ids)
        weights.append(w * qtf)

    if not doc_ids:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    doc_ids = np.concatenate(doc_ids)
    weights = np.concatenate(weights)
    uniq, inverse = np.unique(doc_ids, return_inverse=True)
    return uniq, np.bincount(inverse, weights=weights)


_FIELDS = tuple(FieldId)


def search(index, query_text, limit, params=None):
    """Best-field search over all four fields.

    Each document scores the maximum over fields of its summed field BM25,
    title-related fields multiplied by ``params.title_field_boost``.

    Parameters
    ----------
    index : Index
        The index to search.
    query_text : str
        Raw query text, analyzed per field like the documents were.
    limit : int
        Maximum number of hits.
    params : RankingParams, optional
        Scoring parameters.

    Returns
    -------
    list[SearchHit]
        By descending score, ties by ascending doc id. Zero scoring
        documents are omitted.
    """
    if limit < 1:
        raise ValueError(f"limit must be at least 1, got {limit}.")
    params = RankingParams() if params is None else params

    all_docs, all_scores, all_codes = [], [], []
    for code, field in enumerate(_FIELDS):
        terms = field.analyze(query_text, index.stops)
        if not terms:
            continue
        docs, scores = _score_field(index, field, terms, params)
        if field.is_title:
            scores = scores * params.title_field_boost
        all_docs.append(docs)
        all_scores.append(scores)
        all_codes.append(np.full(len(docs), code))

    if not all_docs:
        return []

    docs = np.concatenate(all_docs)
    scores = np.concatenate(all_scores)
    codes = np.concatenate(all_codes)

    keep = scores > 0
    docs, scores, codes = docs[keep], scores[keep], codes[keep]
    if len(docs) == 0:
        return []

    # best field per document, the earlier field wins equal scores
    order = np.lexsort((codes, -scores, docs))
    docs, scores, codes = docs[order], scores[order], codes[order]
    first = np.ones(len(docs), dtype=bool)
    first[1:] = docs[1:] != docs[:-1]
    docs, scores, codes = docs[first], scores[first], codes[first]

    order = np.lexsort((docs, -scores))[:limit]
    hits = []
    for i in order:
        doc_id = int(docs[i])
        score = float(scores[i])
        hits.append(
            SearchHit(
                doc_id=doc_id,
                title=index.get_document(doc_id).title,
                raw_score=score,
                boosted_score=score,
                best_field=_FIELDS[codes[i]],
            )
        )
    return hits


# fold_table only keys the cache to the active folding table
@functools.lru_cache(2**12)
def _match_class(title, query_text, fold_table):
    t = normalize_title(title)
    q = normalize_title(query_text)
    if not t or not q:
        return "none"
    if t == q:
        return "exact"
    if f" {t} " in f" {q} ":
        return "title_in_query"
    if f" {q} " in f" {t} ":
        return "query_in_title"
    return "none"


def title_match_tier(title, query_text, params=None):
    """The rerank multiplier for a document titled ``title`` under
    ``query_text``.

    Both strings are folded, lowercased, stripped of punctuation and
    whitespace collapsed, then classified as an exact match, the title
    being a contiguous (whole word) part of the query, the query being a
    contiguous part of the title, or none of these.

    Parameters
    ----------
    title : str
        The document title.
    query_text : str
        The search query.
    params : RankingParams, optional
        Supplies the tier multipliers.

    Returns
    -------
    float
        One of the tier multipliers, or 1.0.
    """
    params = RankingParams() if params is None else params
    return params.tier(_match_class(title, query_text, get_fold_table()))


def rerank(query_text, hits, params=None):
    """Multiply each hit's score by its title match tier and resort by
    descending boosted score, ties by ascending doc id.
    """
    params = RankingParams() if params is None else params
    boosted = []
    for h in hits:
        tier = title_match_tier(h.title, query_text, params)
        boosted.append(
            replace(h, rerank_tier=tier, boosted_score=h.raw_score * tier)
        )
    boosted.sort(key=lambda h: (-h.boosted_score, h.doc_id))
    return boosted


def retrieve_hits(index, query_text, n, params=None):
    """Search for the top ``params.rerank_pool`` raw results, rerank them
    and keep the first ``n``.

    Returns
    -------
    list[SearchHit]
    """
    params = RankingParams() if params is None else params
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}.")
    if n > params.rerank_pool:
        raise ValueError(
            f"n={n} exceeds the rerank pool of {params.rerank_pool}."
        )
    pool = search(index, query_text, params.rerank_pool, params)
    return rerank(query_text, pool, params)[:n]


def retrieve(index, query_text, n, params=None):
    """``IR_n``: the top ``n`` documents for ``query_text`` after reranking.

    Parameters
    ----------
    index : Index
        The index to search.
    query_text : str
        Raw query text.
    n : int
        Number of documents, at most ``params.rerank_pool``.
    params : RankingParams, optional
        Scoring parameters.

    Returns
    -------
    list[Document]
    """
    return [
        index.get_document(h.doc_id)
        for h in retrieve_hits(index, query_text, n, params)
    ]
