"""Text analysis primitives shared by indexing, querying and oracle span
derivation. Every analyzer records character offsets into the original
(unfolded, un-lowercased) string so that spans can be quoted back verbatim.
"""

import functools
import hashlib
import os
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources

# alphanumeric runs, underscore counts as a separator
_WORD_RE = re.compile(r"[^\W_]+")
# alphanumeric runs or single punctuation characters
_WORD_OR_PUNCT_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


@dataclass(frozen=True, slots=True)
class Token:
    """A single analyzed token.

    Parameters
    ----------
    text : str
        The analyzed (folded and lowercased) form.
    char_start : int
        Offset of the first character in the source string.
    char_end : int
        Exclusive end offset in the source string.
    """

    text: str
    char_start: int
    char_end: int


class StopList:
    """An immutable set of lowercase stop words.

    Parameters
    ----------
    words : iterable of str
        The stop words, must be non-empty and all lowercase.
    """

    __slots__ = ("_words", "_sha1")

    def __init__(self, words):
        words = frozenset(words)
        if not words:
            raise ValueError("A stop list must contain at least one word.")
        bad = sorted(w for w in words if w != w.lower())
        if bad:
            raise ValueError(f"Stop words must be lowercase, got: {bad}")
        self._words = words
        self._sha1 = None

    @property
    def words(self):
        """The frozenset of stop words."""
        return self._words

    @property
    def sha1(self):
        """A hash of the sorted word list, recorded in index manifests."""
        if self._sha1 is None:
            data = "\n".join(sorted(self._words)).encode("utf-8")
            self._sha1 = hashlib.sha1(data).hexdigest()
        return self._sha1

    def __contains__(self, word):
        return word in self._words

    def __len__(self):
        return len(self._words)

    def __iter__(self):
        return iter(sorted(self._words))

    def __eq__(self, other):
        if not isinstance(other, StopList):
            return NotImplemented
        return self._words == other._words

    def __hash__(self):
        return hash(self._words)

    def __repr__(self):
        return f"StopList(size={len(self)}, sha1={self.sha1[:8]})"

    @classmethod
    def from_file(cls, path):
        """Read a stop list file, one lowercase word per line, UTF-8."""
        with open(path, "r", encoding="utf-8") as f:
            return cls(w for line in f if (w := line.strip()))


def _read_data_text(name):
    return resources.files("goldenir").joinpath("data", name).read_text(
        encoding="utf-8"
    )


@functools.cache
def _default_stoplist():
    text = _read_data_text("stopwords.txt")
    return StopList(w for line in text.splitlines() if (w := line.strip()))


def load_stoplist(path=None):
    """Load a stop list, the shipped 33 word English list by default.

    Parameters
    ----------
    path : str or None, optional
        A stop list file, one word per line. If ``None`` the shipped list is
        used.

    Returns
    -------
    StopList
    """
    if path is None:
        return _default_stoplist()
    return StopList.from_file(path)


def parse_fold_table(text):
    """Parse tab separated ``source<TAB>replacement`` lines, ignoring blank
    lines and ``#`` comments.
    """
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            src, repl = line.split("\t")
        except ValueError:
            raise ValueError(
                f"Malformed folding table line {lineno}: {line!r}"
            ) from None
        if len(src) != 1 or src.isascii():
            raise ValueError(
                "Folding table source must be one non-ASCII character, "
                f"line {lineno}."
            )
        table[src] = repl
    return table


# the folding table used by all analyzers, None for the shipped one
_FOLD_TABLE_PATH = None


def set_fold_table(path=None):
    """Fold with the table at ``path`` from now on, or with the shipped
    table if ``path`` is ``None``. Indexes record the hash of the table they
    were built with and refuse to open under a different one.
    """
    global _FOLD_TABLE_PATH
    if path is not None:
        path = os.path.abspath(path)
        # parse eagerly so a bad table fails here
        load_fold_table(path)
    _FOLD_TABLE_PATH = path


def get_fold_table():
    """The path of the active folding table, ``None`` for the shipped one."""
    return _FOLD_TABLE_PATH


@functools.cache
def _fold_table_text(path):
    if path is None:
        return _read_data_text("asciifold.tsv")
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


@functools.cache
def _parsed_fold_table(path):
    return parse_fold_table(_fold_table_text(path))


def load_fold_table(path=None):
    """Load a character folding table as a dict.

    Parameters
    ----------
    path : str or None, optional
        A tab separated ``source<TAB>replacement`` file. If ``None`` the
        active table is used, see :func:`set_fold_table`.

    Returns
    -------
    dict[str, str]
    """
    if path is None:
        path = _FOLD_TABLE_PATH
    return _parsed_fold_table(path)


def fold_table_sha1(path=None):
    """A hash of the folding table at ``path``, the active one by default,
    recorded in index manifests.
    """
    if path is None:
        path = _FOLD_TABLE_PATH
    return hashlib.sha1(_fold_table_text(path).encode("utf-8")).hexdigest()


def _fold_with(c, table):
    if c in table:
        return table[c]
    if c.isascii():
        return c
    # fallback: decompose and strip combining marks, then apply the table to
    # whatever base characters remain
    decomposed = "".join(
        x
        for x in unicodedata.normalize("NFKD", c)
        if not unicodedata.combining(x)
    )
    return "".join(table.get(x, x) for x in decomposed)


@functools.lru_cache(2**14)
def _fold_char(c, path):
    return _fold_with(c, _parsed_fold_table(path))


def asciifold(text, table=None):
    """Map accented and variant characters to ASCII equivalents, e.g.
    ``"Łódź" -> "Lodz"``. Characters with no equivalent are kept.

    Parameters
    ----------
    text : str
        The text to fold.
    table : dict[str, str], optional
        An explicit folding table, the active one if not given.

    Returns
    -------
    str
    """
    if text.isascii():
        return text
    if table is not None:
        return "".join(_fold_with(c, table) for c in text)
    path = _FOLD_TABLE_PATH
    return "".join(_fold_char(c, path) for c in text)


def _normalize_token(raw):
    return asciifold(raw).lower()


def simple_analyze(text):
    """Split ``text`` on non-alphanumeric characters, fold and lowercase each
    token. No stop words are removed.

    Parameters
    ----------
    text : str
        The text to analyze.

    Returns
    -------
    list[Token]
    """
    return [
        Token(_normalize_token(m.group()), m.start(), m.end())
        for m in _WORD_RE.finditer(text)
    ]


def standard_analyze(text, stops):
    """Like :func:`simple_analyze`, then drop stop words.

    Parameters
    ----------
    text : str
        The text to analyze.
    stops : StopList
        The stop words to remove.

    Returns
    -------
    list[Token]
    """
    return [t for t in simple_analyze(text) if t.text not in stops]


def _token_text(t):
    return t if isinstance(t, str) else t.text


def shingle2(tokens):
    """Render adjacent token pairs as space separated bigrams.

    Parameters
    ----------
    tokens : sequence of Token or str
        Tokens from a single analysis pass.

    Returns
    -------
    list[str]
        ``max(0, len(tokens) - 1)`` bigrams.
    """
    texts = [_token_text(t) for t in tokens]
    return [f"{a} {b}" for a, b in zip(texts, texts[1:])]


def clean_for_overlap(text, stops, keep_punct=False):
    """Lowercased, stop word free tokens used for overlap span recovery.

    Parameters
    ----------
    text : str
        The text to clean.
    stops : StopList
        Stop words to ignore.
    keep_punct : bool, optional
        If True, each punctuation character is kept as its own token. Such
        tokens never match any cleaned target, so they break contiguous
        runs and count towards window lengths.

    Returns
    -------
    list[Token]
        Offsets index the original ``text``.
    """
    if not keep_punct:
        return standard_analyze(text, stops)

    tokens = []
    for m in _WORD_OR_PUNCT_RE.finditer(text):
        t = _normalize_token(m.group())
        if t not in stops:
            tokens.append(Token(t, m.start(), m.end()))
    return tokens


def is_punct(token):
    """Whether ``token`` is a single punctuation token."""
    return not _WORD_RE.fullmatch(_token_text(token))


def normalize_title(text):
    """Folded, lowercased form of ``text`` with punctuation dropped and
    whitespace collapsed, used when comparing titles against queries.
    ``"George W. Bush"`` and ``"george  w bush"`` both give
    ``"george w bush"``.
    """
    return " ".join(t.text for t in simple_analyze(text))
