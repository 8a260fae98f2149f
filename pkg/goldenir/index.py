"""Inverted index over four analyzed fields, with the corpus statistics
needed for BM25, and its versioned on-disk format.
"""

import enum
import json
import logging
import os
import warnings
import zipfile
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .textproc import (
    StopList,
    fold_table_sha1,
    load_stoplist,
    shingle2,
    simple_analyze,
    standard_analyze,
)
from .utils import get_debug, sha1_file

logger = logging.getLogger(__name__)

FORMAT_NAME = "goldenir-index"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
DOCUMENTS_NAME = "documents.jsonl"


class IndexBuildError(ValueError):
    """Raised when a corpus cannot be indexed."""


class IndexLoadError(OSError):
    """Raised when a persisted index cannot be opened."""


class IndexVersionError(IndexLoadError):
    """Raised when a persisted index was written by another format
    version.
    """


class IndexCorruptError(IndexLoadError):
    """Raised when a persisted index is truncated or otherwise damaged."""


@dataclass(frozen=True, slots=True)
class Document:
    """One introductory Wikipedia paragraph.

    Parameters
    ----------
    doc_id : int
        Dense integer id, unique within a corpus.
    title : str
        The page title.
    sentences : tuple[str, ...]
        The sentence segmented paragraph.
    source_url : str or None, optional
        Where the page came from.
    """

    doc_id: int
    title: str
    sentences: tuple = ()
    source_url: str | None = None

    def __post_init__(self):
        if not isinstance(self.sentences, tuple):
            object.__setattr__(self, "sentences", tuple(self.sentences))

    @property
    def text(self):
        """The searchable body, all sentences joined with single spaces."""
        return " ".join(self.sentences)

    def to_record(self):
        return {
            "id": self.doc_id,
            "title": self.title,
            "sentences": list(self.sentences),
            "url": self.source_url,
        }

    @classmethod
    def from_record(cls, record):
        return cls(
            doc_id=int(record["id"]),
            title=record["title"],
            sentences=tuple(record["sentences"]),
            source_url=record.get("url"),
        )


class FieldId(enum.Enum):
    """The four indexed fields."""

    TITLE = "title"
    TITLE_BIGRAM = "title.bigram"
    TEXT = "text"
    TEXT_BIGRAM = "text.bigram"

    @property
    def is_title(self):
        """Whether this is a title-related field, which is score boosted."""
        return self in (FieldId.TITLE, FieldId.TITLE_BIGRAM)

    @property
    def is_bigram(self):
        return self in (FieldId.TITLE_BIGRAM, FieldId.TEXT_BIGRAM)

    @property
    def analyzer(self):
        return "simple" if self.is_title else "standard"

    @property
    def filename(self):
        return f"{self.value.replace('.', '_')}.npz"

    def source(self, doc):
        """The raw text of ``doc`` that this field indexes."""
        return doc.title if self.is_title else doc.text

    def analyze(self, text, stops):
        """Analyze ``text`` into the terms this field indexes.

        Parameters
        ----------
        text : str
            Raw document or query text.
        stops : StopList
            Stop words, only used by the text fields.

        Returns
        -------
        list[str]
        """
        if self.is_title:
            tokens = simple_analyze(text)
        else:
            tokens = standard_analyze(text, stops)
        if self.is_bigram:
            return shingle2(tokens)
        return [t.text for t in tokens]


@dataclass(frozen=True)
class PostingList:
    """The documents containing ``term``, sorted by ascending doc id."""

    term: str
    doc_ids: np.ndarray
    tfs: np.ndarray

    @property
    def entries(self):
        """The postings as a list of ``(doc_id, term_frequency)`` pairs."""
        return list(zip(self.doc_ids.tolist(), self.tfs.tolist()))

    def __len__(self):
        return len(self.doc_ids)


def _empty_postings(term):
    return PostingList(
        term, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    )


def _smallest_uint(arr):
    if arr.size == 0:
        return arr.astype(np.uint8)
    return arr.astype(np.min_scalar_type(int(arr.max())))


class FieldIndex:
    """Postings and lengths for a single field. Doc ids of each posting list
    are stored delta encoded: the first entry of every list is absolute and
    the rest are gaps to the previous doc id.
    """

    __slots__ = (
        "field",
        "_terms",
        "_term_ids",
        "_ptr",
        "_deltas",
        "_tfs",
        "_lengths",
        "_avgdl",
    )

    def __init__(self, field, terms, ptr, deltas, tfs, lengths):
        self.field = field
        self._terms = tuple(terms)
        self._term_ids = {t: i for i, t in enumerate(self._terms)}
        self._ptr = np.asarray(ptr, dtype=np.int64)
        self._deltas = deltas
        self._tfs = tfs
        self._lengths = lengths
        n = len(lengths)
        self._avgdl = float(lengths.sum()) / n if n else 0.0

    @classmethod
    def from_triples(cls, field, vocab, term_ids, doc_ids, tfs, lengths):
        """Assemble a field from unsorted ``(term_id, doc_id, tf)`` triples,
        where ``term_id`` indexes the insertion ordered ``vocab``.
        """
        terms = sorted(vocab, key=vocab.get)
        order = sorted(range(len(terms)), key=terms.__getitem__)
        rank = np.empty(len(terms), dtype=np.int64)
        rank[order] = np.arange(len(terms))
        terms = [terms[i] for i in order]

        term_ids = rank[term_ids] if len(term_ids) else term_ids
        perm = np.lexsort((doc_ids, term_ids))
        term_ids = term_ids[perm]
        doc_ids = doc_ids[perm]
        tfs = tfs[perm]

        ptr = np.zeros(len(terms) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(np.bincount(term_ids, minlength=len(terms)))

        deltas = doc_ids.copy()
        deltas[1:] -= doc_ids[:-1]
        starts = ptr[:-1]
        deltas[starts] = doc_ids[starts]

        return cls(
            field,
            terms,
            ptr,
            _smallest_uint(deltas),
            _smallest_uint(tfs),
            lengths,
        )

    @property
    def vocab_size(self):
        return len(self._terms)

    @property
    def avgdl(self):
        """Average field length in tokens over all documents."""
        return self._avgdl

    @property
    def total_length(self):
        return int(self._lengths.sum())

    @property
    def lengths(self):
        return self._lengths

    @property
    def terms(self):
        return self._terms

    def doc_freq(self, term):
        i = self._term_ids.get(term)
        if i is None:
            return 0
        return int(self._ptr[i + 1] - self._ptr[i])

    def postings(self, term):
        """Decode the posting list for ``term``, empty if unknown."""
        i = self._term_ids.get(term)
        if i is None:
            return _empty_postings(term)
        s, e = self._ptr[i], self._ptr[i + 1]
        doc_ids = np.cumsum(self._deltas[s:e], dtype=np.int64)
        tfs = self._tfs[s:e].astype(np.int64)
        return PostingList(term, doc_ids, tfs)

    def decode_all(self):
        """Decode every posting at once, returning flat ``(term_ids,
        doc_ids, tfs)`` arrays sorted by term then doc id.
        """
        d = self._deltas.astype(np.int64)
        c = np.cumsum(d)
        starts = self._ptr[:-1]
        counts = np.diff(self._ptr)
        base = c[starts] - d[starts]
        term_ids = np.repeat(np.arange(self.vocab_size), counts)
        return term_ids, c - base[term_ids], self._tfs.astype(np.int64)

    def check(self, doc_count):
        """Check the structural invariants of this field."""
        if np.any(np.diff(self._ptr) < 1):
            raise AssertionError(f"{self.field}: empty or unsorted postings.")
        if list(self._terms) != sorted(self._terms):
            raise AssertionError(f"{self.field}: vocabulary not sorted.")
        term_ids, doc_ids, tfs = self.decode_all()
        if np.any(tfs < 1):
            raise AssertionError(f"{self.field}: term frequency below 1.")
        if len(doc_ids) and (doc_ids.min() < 0 or doc_ids.max() >= doc_count):
            raise AssertionError(f"{self.field}: doc id out of range.")
        same_term = term_ids[1:] == term_ids[:-1]
        if np.any(doc_ids[1:][same_term] <= doc_ids[:-1][same_term]):
            raise AssertionError(f"{self.field}: doc ids not ascending.")
        per_doc = np.bincount(doc_ids, weights=tfs, minlength=doc_count)
        if not np.array_equal(per_doc.astype(np.int64), self._lengths):
            raise AssertionError(
                f"{self.field}: term frequencies do not sum to lengths."
            )

    def to_arrays(self):
        vocab = "\n".join(self._terms).encode("utf-8")
        return {
            "vocab": np.frombuffer(vocab, dtype=np.uint8),
            "ptr": self._ptr,
            "deltas": self._deltas,
            "tfs": self._tfs,
            "lengths": self._lengths,
        }

    @classmethod
    def from_arrays(cls, field, arrays):
        ptr = arrays["ptr"]
        if len(ptr) > 1:
            terms = bytes(arrays["vocab"]).decode("utf-8").split("\n")
        else:
            terms = []
        if len(terms) != len(ptr) - 1:
            raise ValueError("Vocabulary and pointer array disagree.")
        return cls(
            field,
            terms,
            ptr,
            arrays["deltas"],
            arrays["tfs"],
            arrays["lengths"],
        )


@dataclass(frozen=True)
class IndexStats:
    """Corpus statistics for BM25: the document count ``N``, per field
    average lengths ``avgdl`` and per term document frequencies ``n_t``.
    """

    doc_count: int
    avg_field_length: dict
    total_field_length: dict
    _fields: dict = field(repr=False, compare=False)

    def doc_freq(self, field, term):
        """The number of documents whose ``field`` contains ``term``."""
        return self._fields[field].doc_freq(term)


class Index:
    """An immutable inverted index over a corpus of :class:`Document`.

    Use :func:`build` or :func:`open_index` rather than constructing this
    directly.

    Parameters
    ----------
    documents : list[Document]
        All documents, positioned by ``doc_id``.
    fields : dict[FieldId, FieldIndex]
        The per field postings.
    stops : StopList
        The stop list used to analyze the text fields.
    """

    __slots__ = ("_documents", "_fields", "_stops", "_titles", "_dups")

    def __init__(self, documents, fields, stops):
        self._documents = documents
        self._fields = fields
        self._stops = stops
        self._titles = {}
        dups = Counter()
        for doc in documents:
            if doc.title in self._titles:
                dups[doc.title] += 1
            else:
                self._titles[doc.title] = doc.doc_id
        self._dups = {t: c + 1 for t, c in dups.items()}

    @property
    def doc_count(self):
        return len(self._documents)

    def __len__(self):
        return len(self._documents)

    @property
    def stops(self):
        return self._stops

    @property
    def documents(self):
        return self._documents

    @property
    def duplicate_titles(self):
        """Mapping of each title shared by several documents to its count."""
        return self._dups

    @property
    def stats(self):
        return IndexStats(
            doc_count=self.doc_count,
            avg_field_length={f: fi.avgdl for f, fi in self._fields.items()},
            total_field_length={
                f: fi.total_length for f, fi in self._fields.items()
            },
            _fields=self._fields,
        )

    def field_index(self, field):
        return self._fields[FieldId(field)]

    def get_document(self, doc_id):
        return self._documents[doc_id]

    def lookup_title(self, title):
        """The doc id of the first document with exactly ``title``, or
        ``None``.
        """
        return self._titles.get(title)

    def field_length(self, field, doc_id):
        return int(self._fields[FieldId(field)].lengths[doc_id])

    def avgdl(self, field):
        return self._fields[FieldId(field)].avgdl

    def term_stats(self, field, term):
        """Document frequency and postings of an analyzed ``term``.

        Returns
        -------
        n_t : int
        postings : PostingList
        """
        postings = self._fields[FieldId(field)].postings(term)
        return len(postings), postings

    def check(self):
        """Check all index invariants, raising ``AssertionError``."""
        for i, doc in enumerate(self._documents):
            if doc.doc_id != i:
                raise AssertionError(f"Document at {i} has id {doc.doc_id}.")
        for fi in self._fields.values():
            fi.check(self.doc_count)

    def persist(self, path):
        persist(self, path)

    @classmethod
    def open(cls, path, stops=None, verify=True):
        return open_index(path, stops=stops, verify=verify)

    def __repr__(self):
        vocab = ", ".join(
            f"{f.value}={fi.vocab_size}" for f, fi in self._fields.items()
        )
        return f"Index(doc_count={self.doc_count}, vocab=({vocab}))"


def _iter_batches(corpus, batch_size):
    batch = []
    for doc in corpus:
        batch.append(doc)
        if len(batch) >= batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


class _FieldAccumulator:
    """Collects ``(term_id, doc_id, tf)`` triples for one field, one numpy
    chunk per batch.
    """

    __slots__ = ("field", "vocab", "chunks", "lengths")

    def __init__(self, field):
        self.field = field
        self.vocab = {}
        self.chunks = []
        self.lengths = {}

    def add_batch(self, docs, stops):
        tids, dids, tfs = [], [], []
        vocab = self.vocab
        for doc in docs:
            terms = self.field.analyze(self.field.source(doc), stops)
            self.lengths[doc.doc_id] = len(terms)
            for term, tf in Counter(terms).items():
                tids.append(vocab.setdefault(term, len(vocab)))
                dids.append(doc.doc_id)
                tfs.append(tf)
        self.chunks.append(
            (
                np.array(tids, dtype=np.int64),
                np.array(dids, dtype=np.int64),
                np.array(tfs, dtype=np.int64),
            )
        )

    def finalize(self, doc_count):
        term_ids, doc_ids, tfs = (
            np.concatenate(parts) for parts in zip(*self.chunks)
        )
        lengths = np.zeros(doc_count, dtype=np.int64)
        lengths[list(self.lengths)] = list(self.lengths.values())
        return FieldIndex.from_triples(
            self.field,
            self.vocab,
            term_ids,
            doc_ids,
            tfs,
            lengths,
        )


def build(corpus, stops=None, batch_size=10_000):
    """Build an index over a stream of documents.

    Parameters
    ----------
    corpus : iterable of Document
        The documents, with dense unique ``doc_id`` values ``0..N-1`` in any
        order.
    stops : StopList, optional
        Stop words for the text fields, the shipped list by default.
    batch_size : int, optional
        Number of documents analyzed per batch.

    Returns
    -------
    Index
    """
    if stops is None:
        stops = load_stoplist()

    accumulators = {f: _FieldAccumulator(f) for f in FieldId}
    documents = {}

    for batch in _iter_batches(corpus, batch_size):
        for doc in batch:
            if doc.doc_id in documents:
                raise IndexBuildError(f"Duplicate doc_id: {doc.doc_id}.")
            documents[doc.doc_id] = doc
        for acc in accumulators.values():
            acc.add_batch(batch, stops)
        logger.info("Analyzed %d documents.", len(documents))

    if not documents:
        raise IndexBuildError("Cannot build an index from an empty corpus.")

    doc_count = len(documents)
    if min(documents) != 0 or max(documents) != doc_count - 1:
        raise IndexBuildError(
            f"doc_ids must be dense in 0..{doc_count - 1}, got range "
            f"{min(documents)}..{max(documents)}."
        )

    fields = {f: acc.finalize(doc_count) for f, acc in accumulators.items()}
    index = Index([documents[i] for i in range(doc_count)], fields, stops)

    if index.duplicate_titles:
        example = next(iter(sorted(index.duplicate_titles)))
        logger.warning(
            "%d titles are shared by several documents (e.g. %r), gold "
            "matching uses the first occurrence.",
            len(index.duplicate_titles),
            example,
        )
        warnings.warn(
            f"{len(index.duplicate_titles)} duplicate titles in corpus."
        )

    if get_debug():
        index.check()

    logger.info("Built %r.", index)
    return index


def term_stats(index, field, term):
    """Document frequency and postings of ``term`` in ``field`` of
    ``index``. Unknown terms give ``(0, empty postings)``.
    """
    return index.term_stats(field, term)


def _file_entry(path):
    return {"sha1": sha1_file(path), "size": os.path.getsize(path)}


def persist(index, path):
    """Write ``index`` to the directory ``path``, creating it if needed.

    The layout is::

        path/manifest.json        format version, counts, analysis config
        path/documents.jsonl      one document per line, in doc id order
        path/fields/<field>.npz   vocab, pointers, delta doc ids, tfs,
                                  lengths

    The manifest is written last, so a directory without one is an
    incomplete write.
    """
    os.makedirs(os.path.join(path, "fields"), exist_ok=True)
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        os.remove(manifest_path)

    files = {}

    docs_path = os.path.join(path, DOCUMENTS_NAME)
    with open(docs_path, "w", encoding="utf-8") as f:
        for doc in index.documents:
            f.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
    files[DOCUMENTS_NAME] = _file_entry(docs_path)

    fields = {}
    for fid in FieldId:
        fi = index.field_index(fid)
        rel = f"fields/{fid.filename}"
        full = os.path.join(path, rel)
        np.savez_compressed(full, **fi.to_arrays())
        files[rel] = _file_entry(full)
        fields[fid.value] = {
            "analyzer": fid.analyzer,
            "bigram": fid.is_bigram,
            "title_related": fid.is_title,
            "file": rel,
            "vocab_size": fi.vocab_size,
            "total_length": fi.total_length,
        }

    manifest = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "doc_count": index.doc_count,
        "fields": fields,
        "stoplist": {
            "sha1": index.stops.sha1,
            "words": list(index.stops),
        },
        "fold_table_sha1": fold_table_sha1(),
        "duplicate_titles": len(index.duplicate_titles),
        "files": files,
    }
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)

    logger.info("Persisted index to %s.", path)


def _check_manifest(manifest, manifest_path):
    """Raise :class:`IndexCorruptError` unless every key :func:`open_index`
    reads is present with the right type.
    """

    def bad(what):
        return IndexCorruptError(f"Damaged manifest {manifest_path}: {what}.")

    doc_count = manifest.get("doc_count")
    if not isinstance(doc_count, int) or doc_count < 0:
        raise bad(f"doc_count is {doc_count!r}")

    stoplist = manifest.get("stoplist")
    if (
        not isinstance(stoplist, dict)
        or not isinstance(stoplist.get("sha1"), str)
        or not isinstance(stoplist.get("words"), list)
        or not all(isinstance(w, str) for w in stoplist["words"])
    ):
        raise bad("missing or malformed stoplist")

    files = manifest.get("files")
    if not isinstance(files, dict):
        raise bad("missing files")
    for rel, entry in files.items():
        if (
            not isinstance(entry, dict)
            or not isinstance(entry.get("sha1"), str)
            or not isinstance(entry.get("size"), int)
        ):
            raise bad(f"malformed entry for {rel}")

    fields = manifest.get("fields")
    if not isinstance(fields, dict):
        raise bad("missing fields")
    for fid in FieldId:
        entry = fields.get(fid.value)
        if not isinstance(entry, dict) or not isinstance(
            entry.get("file"), str
        ):
            raise bad(f"no file for field {fid.value}")


def _read_manifest(path):
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise IndexLoadError(f"No index manifest found at {manifest_path}.")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (ValueError, UnicodeDecodeError) as e:
        raise IndexCorruptError(f"Unreadable manifest: {e}") from e

    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_NAME:
        raise IndexCorruptError(f"{manifest_path} is not an index manifest.")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise IndexVersionError(
            f"Index format version {version}, expected {FORMAT_VERSION}."
        )
    _check_manifest(manifest, manifest_path)
    return manifest


def _load_documents(docs_path, doc_count):
    documents = []
    try:
        with open(docs_path, "r", encoding="utf-8") as f:
            for line in f:
                documents.append(Document.from_record(json.loads(line)))
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
        raise IndexCorruptError(f"Damaged documents file: {e}") from e
    if len(documents) != doc_count:
        raise IndexCorruptError(
            f"Expected {doc_count} documents, found {len(documents)}."
        )
    return documents


def _load_field(fid, full_path):
    try:
        with np.load(full_path, allow_pickle=False) as arrays:
            return FieldIndex.from_arrays(fid, dict(arrays))
    except (
        OSError,
        ValueError,
        KeyError,
        EOFError,
        zipfile.BadZipFile,
    ) as e:
        raise IndexCorruptError(f"Damaged field file {full_path}: {e}") from e


def open_index(path, stops=None, verify=True):
    """Open an index written by :func:`persist`.

    Parameters
    ----------
    path : str
        The index directory.
    stops : StopList, optional
        If given, must match the stop list the index was built with.
    verify : bool, optional
        Check file checksums before loading.

    Returns
    -------
    Index
    """
    manifest = _read_manifest(path)

    if manifest.get("fold_table_sha1") != fold_table_sha1():
        raise IndexLoadError(
            "Index was built with a different folding table; queries would "
            "be analyzed differently."
        )

    try:
        stored_stops = StopList(manifest["stoplist"]["words"])
    except ValueError as e:
        raise IndexCorruptError(f"Damaged stop list: {e}") from e
    if stored_stops.sha1 != manifest["stoplist"]["sha1"]:
        raise IndexCorruptError("Stop list does not match its checksum.")
    if stops is not None and stops.sha1 != stored_stops.sha1:
        raise IndexLoadError(
            "Index was built with a different stop list "
            f"({stored_stops.sha1[:8]} != {stops.sha1[:8]})."
        )

    for rel, entry in manifest["files"].items():
        full = os.path.join(path, rel)
        if not os.path.isfile(full):
            raise IndexCorruptError(f"Missing index file {rel}.")
        if os.path.getsize(full) != entry["size"]:
            raise IndexCorruptError(f"Truncated index file {rel}.")
        if verify and sha1_file(full) != entry["sha1"]:
            raise IndexCorruptError(f"Checksum mismatch for {rel}.")

    doc_count = manifest["doc_count"]
    documents = _load_documents(os.path.join(path, DOCUMENTS_NAME), doc_count)

    fields = {}
    for fid in FieldId:
        rel = manifest["fields"][fid.value]["file"]
        fi = _load_field(fid, os.path.join(path, rel))
        if len(fi.lengths) != doc_count:
            raise IndexCorruptError(f"Field {fid.value} has wrong length.")
        fields[fid] = fi

    index = Index(documents, fields, stored_stops)
    if get_debug():
        index.check()

    logger.info("Opened %r from %s.", index, path)
    return index
