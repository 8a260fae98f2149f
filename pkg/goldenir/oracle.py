"""Oracle query derivation: find spans of a retrieval context that overlap a
gold document, then keep the span that actually retrieves the gold document
best.

Three overlap heuristics are run on cleaned token sequences:

- longest common subsequence, whose matched tokens are widened to the
  smallest covering context span,
- longest common substring (a contiguous run of cleaned tokens),
- overlap merging, the longest window whose share of tokens found in the
  target is at least ``min_ratio``.
"""

import enum
import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .ranking import RankingParams, retrieve_hits
from .textproc import (
    Token,
    clean_for_overlap,
    is_punct,
    simple_analyze,
    standard_analyze,
)
from .utils import get_debug, write_jsonl

logger = logging.getLogger(__name__)

DEFAULT_MIN_RATIO = 0.6
TARGET_TOKEN_CAP = 512
TOP_RANK = 5

# title delimiters of a serialized context, with surrounding whitespace
_MARKUP_RE = re.compile(r"\s*</?t>\s*")


class Heuristic(enum.Enum):
    LCS = "lcs"
    LCSUBSTR = "lcsubstr"
    OVERLAP_MERGE = "overlap_merge"


class NoOracleError(ValueError):
    """Raised when no oracle query can be derived for a question hop."""

    def __init__(self, question_id, hop, reason="no candidate spans"):
        self.question_id = question_id
        self.hop = hop
        super().__init__(f"No oracle for {question_id!r} hop {hop}: {reason}.")


@dataclass(frozen=True, slots=True)
class SpanCandidate:
    """A verbatim span of a retrieval context.

    Parameters
    ----------
    text : str
        ``context[char_start:char_end]``.
    char_start, char_end : int
        Offsets into the retrieval context string.
    heuristic : Heuristic
        The overlap heuristic that produced the span.
    source_combo : str
        ``"<context variant>/<target variant>"``, where the context variant
        is ``"with_punct"`` or ``"no_punct"`` and the target variant
        ``"title"`` or ``"paragraph"``.
    n_matched : int
        The overlap size: LCS length, run length or overlapping token count.
    """

    text: str
    char_start: int
    char_end: int
    heuristic: Heuristic
    source_combo: str = ""
    n_matched: int = 0

    def check(self, context):
        if context[self.char_start : self.char_end] != self.text:
            raise AssertionError(
                f"Span {self.char_start}:{self.char_end} is not verbatim."
            )


@dataclass(frozen=True, slots=True)
class OracleQuery:
    """The selected oracle span for one question hop.

    ``gold_rank`` is 1-based, or ``math.inf`` if the gold document is not
    in the reranked pool, in which case ``flagged`` is set.
    """

    question_id: str
    hop: int
    span: SpanCandidate
    gold_doc_id: int
    gold_rank: float
    gold_score: float = 0.0
    ranked_doc_ids: tuple = ()
    flagged: bool = False

    @property
    def text(self):
        return self.span.text

    def to_record(self):
        rank = None if math.isinf(self.gold_rank) else int(self.gold_rank)
        return {
            "question_id": self.question_id,
            "hop": self.hop,
            "query": self.span.text,
            "char_start": self.span.char_start,
            "char_end": self.span.char_end,
            "heuristic": self.span.heuristic.value,
            "source_combo": self.span.source_combo,
            "gold_doc_id": self.gold_doc_id,
            "gold_rank": rank,
            "gold_score": self.gold_score,
            "flagged": self.flagged,
        }


def _text(t):
    return t if isinstance(t, str) else t.text


def _match_matrix(context_tokens, target_tokens):
    """Boolean ``(len(context), len(target))`` token equality, with context
    punctuation never matching. Also returns per context token whether it
    occurs anywhere in the target.
    """
    vocab = {}
    t_ids = np.array(
        [vocab.setdefault(_text(t), len(vocab)) for t in target_tokens],
        dtype=np.int64,
    )
    c_ids = np.array(
        [
            -1 if is_punct(t) else vocab.get(_text(t), -1)
            for t in context_tokens
        ],
        dtype=np.int64,
    )
    eq = c_ids[:, None] == t_ids[None, :]
    return eq, c_ids >= 0


def _make_span(context, context_tokens, first, last, heuristic, n_matched):
    start = context_tokens[first].char_start
    end = context_tokens[last].char_end
    return SpanCandidate(
        text=context[start:end],
        char_start=start,
        char_end=end,
        heuristic=heuristic,
        n_matched=int(n_matched),
    )


def lcs_table(eq):
    """Longest common subsequence lengths ``dp[i, j]`` of the first ``i``
    context and ``j`` target tokens, computed a row at a time.
    """
    m, n = eq.shape
    dp = np.zeros((m + 1, n + 1), dtype=np.int64)
    for i in range(1, m + 1):
        cand = np.where(eq[i - 1], dp[i - 1, :-1] + 1, dp[i - 1, 1:])
        dp[i, 1:] = np.maximum.accumulate(cand)
    return dp


def lcs_span(context_tokens, target_tokens, context):
    """The context span covering a longest common subsequence of cleaned
    tokens, from its first to its last matched context token.

    Parameters
    ----------
    context_tokens : list[Token]
        Cleaned tokens with offsets into ``context``.
    target_tokens : list[Token] or list[str]
        Cleaned target tokens.
    context : str
        The retrieval context the offsets refer to.

    Returns
    -------
    SpanCandidate or None
        ``None`` if nothing is shared.
    """
    if not context_tokens or not target_tokens:
        return None
    eq, _ = _match_matrix(context_tokens, target_tokens)
    dp = lcs_table(eq)
    i, j = eq.shape
    if dp[i, j] == 0:
        return None

    matched = []
    while i > 0 and j > 0:
        if eq[i - 1, j - 1] and dp[i, j] == dp[i - 1, j - 1] + 1:
            matched.append(i - 1)
            i -= 1
            j -= 1
        elif dp[i - 1, j] >= dp[i, j - 1]:
            i -= 1
        else:
            j -= 1

    return _make_span(
        context,
        context_tokens,
        matched[-1],
        matched[0],
        Heuristic.LCS,
        len(matched),
    )


def lcsubstr_span(context_tokens, target_tokens, context):
    """The longest contiguous run of cleaned tokens shared with the target,
    the earliest in the context on ties.

    Returns
    -------
    SpanCandidate or None
    """
    if not context_tokens or not target_tokens:
        return None
    eq, _ = _match_matrix(context_tokens, target_tokens)
    n = eq.shape[1]
    prev = np.zeros(n + 1, dtype=np.int64)
    best_len, best_end = 0, -1
    for i, row in enumerate(eq):
        cur = np.zeros(n + 1, dtype=np.int64)
        cur[1:] = np.where(row, prev[:-1] + 1, 0)
        k = int(cur.max())
        if k > best_len:
            best_len, best_end = k, i
        prev = cur

    if best_len == 0:
        return None
    return _make_span(
        context,
        context_tokens,
        best_end - best_len + 1,
        best_end,
        Heuristic.LCSUBSTR,
        best_len,
    )


def overlap_merge_span(
    context_tokens, target_tokens, context, min_ratio=DEFAULT_MIN_RATIO
):
    """The longest context window, starting and ending on tokens found in
    the target, whose fraction of tokens found in the target is at least
    ``min_ratio``. Ties go to the higher ratio, then the earliest window.

    Parameters
    ----------
    context_tokens : list[Token]
        Cleaned tokens with offsets into ``context``.
    target_tokens : list[Token] or list[str]
        Cleaned target tokens.
    context : str
        The retrieval context.
    min_ratio : float, optional
        Required overlap ratio, in ``(0, 1]``.

    Returns
    -------
    SpanCandidate or None
    """
    if not 0 < min_ratio <= 1:
        raise ValueError(f"min_ratio must be in (0, 1], got {min_ratio}.")
    if not context_tokens or not target_tokens:
        return None
    _, present = _match_matrix(context_tokens, target_tokens)
    pos = np.flatnonzero(present)
    if len(pos) == 0:
        return None

    a, b = np.triu_indices(len(pos))
    length = pos[b] - pos[a] + 1
    count = b - a + 1
    ratio = count / length
    ok = ratio >= min_ratio
    a, b = a[ok], b[ok]
    length, count, ratio = length[ok], count[ok], ratio[ok]

    best = np.lexsort((pos[a], -ratio, -length))[0]
    return _make_span(
        context,
        context_tokens,
        pos[a[best]],
        pos[b[best]],
        Heuristic.OVERLAP_MERGE,
        count[best],
    )


def context_segments(context):
    """Split a (possibly serialized) retrieval context at its title markup,
    giving ``(offset, text)`` pairs of the non-empty pieces.
    """
    segments = []
    pos = 0
    for m in _MARKUP_RE.finditer(context):
        if m.start() > pos:
            segments.append((pos, context[pos : m.start()]))
        pos = m.end()
    if pos < len(context):
        segments.append((pos, context[pos:]))
    return segments


def _shift(tokens, offset):
    return [
        Token(t.text, t.char_start + offset, t.char_end + offset)
        for t in tokens
    ]


def _target_variants(gold_doc, stops):
    variants = []
    title_tokens = clean_for_overlap(gold_doc.title, stops)
    if title_tokens:
        variants.append(("title", title_tokens))
    paragraph = clean_for_overlap(gold_doc.text, stops)[:TARGET_TOKEN_CAP]
    if paragraph:
        variants.append(("paragraph", paragraph))
    return variants


def candidate_queries(
    retrieval_context_text, gold_doc, stops, min_ratio=DEFAULT_MIN_RATIO
):
    """All distinct oracle span candidates of a retrieval context for a gold
    document.

    Every combination of context variant (cleaned with and without
    punctuation tokens) and target variant (cleaned gold title, cleaned gold
    paragraph capped at ``TARGET_TOKEN_CAP`` tokens) is run through the
    three heuristics. A serialized context is processed piece by piece
    between its title delimiters, so spans never contain markup.

    Parameters
    ----------
    retrieval_context_text : str
        The question (first hop) or serialized context (later hops).
    gold_doc : Document
        The document the query should retrieve.
    stops : StopList
        Stop words for cleaning.
    min_ratio : float, optional
        Overlap merging threshold.

    Returns
    -------
    list[SpanCandidate]
        Deduplicated by character span, in generation order.
    """
    if not retrieval_context_text:
        raise ValueError("The retrieval context is empty.")

    targets = _target_variants(gold_doc, stops)
    if not gold_doc.title.strip():
        logger.debug("Gold doc %d has no title.", gold_doc.doc_id)

    seen = set()
    candidates = []
    for offset, segment in context_segments(retrieval_context_text):
        for variant, keep_punct in (("with_punct", True), ("no_punct", False)):
            tokens = clean_for_overlap(segment, stops, keep_punct=keep_punct)
            if not tokens:
                continue
            tokens = _shift(tokens, offset)
            for target_name, target in targets:
                combo = f"{variant}/{target_name}"
                spans = (
                    lcs_span(tokens, target, retrieval_context_text),
                    lcsubstr_span(tokens, target, retrieval_context_text),
                    overlap_merge_span(
                        tokens, target, retrieval_context_text, min_ratio
                    ),
                )
                for span in spans:
                    if span is None:
                        continue
                    key = (span.char_start, span.char_end)
                    if key in seen:
                        continue
                    if not standard_analyze(span.text, stops):
                        continue
                    seen.add(key)
                    candidates.append(
                        SpanCandidate(
                            text=span.text,
                            char_start=span.char_start,
                            char_end=span.char_end,
                            heuristic=span.heuristic,
                            source_combo=combo,
                            n_matched=span.n_matched,
                        )
                    )

    if get_debug():
        for c in candidates:
            c.check(retrieval_context_text)

    return candidates


def select_oracle(
    question_id, hop, candidates, gold_doc_id, index, params=None
):
    """Run every candidate as a query and keep the one that retrieves the
    gold document best.

    Candidates are ordered by the gold document's rank in the reranked
    pool. Equal ranks within the top 5 prefer the higher gold document
    score, then any equal ranks prefer fewer tokens, then the earlier
    span.

    Parameters
    ----------
    question_id : str
        Carried into the result and any error.
    hop : int
        1-based hop number.
    candidates : list[SpanCandidate]
        The spans to try.
    gold_doc_id : int
        The document to retrieve.
    index : Index
        The index to query.
    params : RankingParams, optional
        Ranking parameters, the pool size is ``params.rerank_pool``.

    Returns
    -------
    OracleQuery
    """
    if not candidates:
        raise NoOracleError(question_id, hop)
    params = RankingParams() if params is None else params

    # several spans can share a text, only query each text once
    cache = {}
    best = None
    for cand in candidates:
        if cand.text not in cache:
            hits = retrieve_hits(index, cand.text, params.rerank_pool, params)
            cache[cand.text] = hits
        hits = cache[cand.text]

        rank, score = math.inf, 0.0
        for r, h in enumerate(hits, 1):
            if h.doc_id == gold_doc_id:
                rank, score = r, h.boosted_score
                break

        key = (
            rank,
            -score if rank <= TOP_RANK else 0.0,
            len(simple_analyze(cand.text)),
            cand.char_start,
        )
        if best is None or key < best[0]:
            best = (key, cand, rank, score, hits)

    _, cand, rank, score, hits = best
    flagged = math.isinf(rank)
    if flagged:
        logger.warning(
            "No oracle candidate retrieves the gold document for %r hop %d.",
            question_id,
            hop,
        )
    return OracleQuery(
        question_id=question_id,
        hop=hop,
        span=cand,
        gold_doc_id=gold_doc_id,
        gold_rank=rank,
        gold_score=score,
        ranked_doc_ids=tuple(h.doc_id for h in hits),
        flagged=flagged,
    )


def oracle_query(
    question_id,
    hop,
    context_text,
    gold_doc,
    index,
    params=None,
    min_ratio=DEFAULT_MIN_RATIO,
):
    """Generate candidates for ``gold_doc`` from ``context_text`` and select
    the oracle among them.

    Raises
    ------
    NoOracleError
        If the context shares nothing usable with the gold document.
    """
    candidates = candidate_queries(
        context_text, gold_doc, index.stops, min_ratio=min_ratio
    )
    logger.debug(
        "%d oracle candidates for %r hop %d.",
        len(candidates),
        question_id,
        hop,
    )
    return select_oracle(
        question_id, hop, candidates, gold_doc.doc_id, index, params
    )


def write_oracle_records(path, queries):
    """Write oracle queries as JSON lines, returning the number written."""
    return write_jsonl(path, (q.to_record() for q in queries))
