"""Reading the processed Wikipedia dump and the question files, run
configuration, and run manifests.
"""

import bz2
import dataclasses
import datetime
import json
import logging
import os
import tomllib
from dataclasses import dataclass

from .index import Document
from .utils import json_hasher, package_versions, sha1_path

logger = logging.getLogger(__name__)

SHARD_SUFFIXES = (".bz2", ".jsonl")
MAX_MALFORMED_FRACTION = 0.001
GENERATOR_MODES = ("oracle", "question")
RUN_MANIFEST_NAME = "run_manifest.json"


class DumpReadError(OSError):
    """Raised when a dump shard cannot be read or decompressed."""


class DumpFormatError(ValueError):
    """Raised when too many dump lines are malformed."""


@dataclass(frozen=True)
class DatasetQuestion:
    """A question with its two gold titles.

    Parameters
    ----------
    question_id : str
        The dataset ``_id``.
    question : str
        The question text.
    answer : str, optional
        Carried through to exported records, never scored.
    gold_titles : tuple[str, ...], optional
        Distinct supporting titles, in order of first mention.
    question_type : str, optional
        ``"bridge"`` or ``"comparison"``.
    level : str, optional
        The dataset's difficulty level.
    supporting_facts : tuple[tuple[str, int], ...], optional
        ``(title, sentence index)`` pairs.
    """

    question_id: str
    question: str
    answer: str | None = None
    gold_titles: tuple = ()
    question_type: str | None = None
    level: str | None = None
    supporting_facts: tuple = ()


def iter_shards(path):
    """The dump shard files under ``path``, walked recursively in
    lexicographic order of their relative paths. A file path is its own
    single shard.
    """
    if os.path.isfile(path):
        return [path]
    if not os.path.isdir(path):
        raise DumpReadError(f"No such dump path: {path}")
    shards = []
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for fname in files:
            if fname.endswith(SHARD_SUFFIXES):
                shards.append(os.path.join(root, fname))
    shards.sort(key=lambda p: os.path.relpath(p, path))
    return shards


def _open_shard(shard):
    if shard.endswith(".bz2"):
        return bz2.open(shard, "rt", encoding="utf-8")
    return open(shard, "r", encoding="utf-8")


def _join_sentence(sentence):
    # some dump variants store sentences as lists of pieces
    if isinstance(sentence, list):
        return "".join(map(str, sentence))
    return str(sentence)


def parse_dump_line(line):
    """Parse one dump line into ``(title, sentences, url)``.

    Hyperlink offsets and linked text variants are ignored.

    Raises
    ------
    ValueError
        If the line is not a page object with a non-empty title.
    """
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("not a JSON object")
    title = obj.get("title")
    if not isinstance(title, str) or not title.strip():
        raise ValueError("missing or empty title")
    text = obj.get("text", [])
    if isinstance(text, str):
        text = [text]
    if not isinstance(text, list):
        raise ValueError("text is not a sentence list")
    sentences = tuple(_join_sentence(s) for s in text)
    return title, sentences, obj.get("url")


def _check_malformed(n_bad, n_lines, shard):
    if n_bad > max(1, MAX_MALFORMED_FRACTION * n_lines):
        raise DumpFormatError(
            f"{n_bad} of {n_lines} dump lines malformed (after {shard}), "
            f"more than {MAX_MALFORMED_FRACTION:.1%}."
        )


def load_wiki_dump(path, limit=None):
    """Stream documents from a processed Wikipedia dump.

    Doc ids are assigned densely in shard then line order, so the same
    dump always gives the same ids.

    Parameters
    ----------
    path : str
        A directory of ``.bz2`` or ``.jsonl`` shards, or a single shard.
    limit : int, optional
        Stop after this many documents.

    Yields
    ------
    Document
    """
    shards = iter_shards(path)
    if not shards:
        raise DumpReadError(f"No dump shards found under {path}.")

    doc_id = 0
    n_lines = 0
    n_bad = 0
    for shard in shards:
        logger.info("Reading shard %s.", shard)
        try:
            with _open_shard(shard) as f:
                for lineno, line in enumerate(f, 1):
                    if not line.strip():
                        continue
                    n_lines += 1
                    try:
                        title, sentences, url = parse_dump_line(line)
                    except ValueError as e:
                        n_bad += 1
                        logger.warning(
                            "Skipping malformed line %d of %s: %s",
                            lineno,
                            shard,
                            e,
                        )
                        continue
                    yield Document(doc_id, title, sentences, url)
                    doc_id += 1
                    if limit is not None and doc_id >= limit:
                        return
        except (OSError, EOFError, UnicodeDecodeError) as e:
            raise DumpReadError(f"Failed reading shard {shard}: {e}") from e
        _check_malformed(n_bad, n_lines, shard)

    logger.info(
        "Read %d documents from %d shards, %d malformed lines skipped.",
        doc_id,
        len(shards),
        n_bad,
    )


def _unique(items):
    return tuple(dict.fromkeys(items))


def parse_question(record):
    """Build a :class:`DatasetQuestion` from one dataset record.

    Raises
    ------
    KeyError, TypeError, ValueError
        If fields are missing or malformed.
    """
    facts = tuple((str(t), int(i)) for t, i in record["supporting_facts"])
    return DatasetQuestion(
        question_id=str(record["_id"]),
        question=record["question"],
        answer=record.get("answer"),
        gold_titles=_unique(t for t, _ in facts),
        question_type=record.get("type"),
        level=record.get("level"),
        supporting_facts=facts,
    )


def load_dataset(path, limit=None):
    """Load questions from a dataset JSON file (train or dev, fullwiki or
    distractor format).

    Records with missing fields, or without exactly two distinct gold
    titles, are logged and skipped.

    Parameters
    ----------
    path : str
        The JSON file, a list of question records.
    limit : int, optional
        Keep at most this many questions.

    Returns
    -------
    list[DatasetQuestion]
    """
    with open(path, "r", encoding="utf-8") as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise ValueError(f"{path} is not a list of question records.")

    questions = []
    skipped = 0
    for i, record in enumerate(records):
        try:
            q = parse_question(record)
        except (KeyError, TypeError, ValueError) as e:
            skipped += 1
            logger.warning("Skipping dataset record %d: bad field %s", i, e)
            continue
        if len(q.gold_titles) != 2:
            skipped += 1
            logger.warning(
                "Skipping %r: %d gold titles, expected 2.",
                q.question_id,
                len(q.gold_titles),
            )
            continue
        questions.append(q)
        if limit is not None and len(questions) >= limit:
            break

    logger.info(
        "Loaded %d questions from %s (%d skipped).",
        len(questions),
        path,
        skipped,
    )
    return questions


def _parse_generator_mode(mode):
    if mode in GENERATOR_MODES:
        return mode
    if mode.startswith("external:") and len(mode) > len("external:"):
        return mode
    raise ValueError(
        f"Unknown generator mode {mode!r}, expected one of "
        f"{GENERATOR_MODES} or 'external:<path>'."
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything a command line run needs.

    Usually read from a TOML file with sections ``[paths]``,
    ``[pipeline]``, ``[ranking]`` (with an optional ``[ranking.tiers]``
    table) and ``[oracle]``, then overridden by flags.
    """

    dump: str | None = None
    dataset: str | None = None
    index: str | None = None
    output: str = "goldenir-out"
    stoplist: str | None = None
    fold_table: str | None = None
    hops: int = 2
    n: int = 5
    generators: tuple = ("oracle", "oracle")
    k1: float = 1.2
    b: float = 0.75
    title_field_boost: float = 1.25
    rerank_pool: int = 50
    tiers: tuple | None = None
    min_ratio: float = 0.6
    limit: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "generators",
            tuple(_parse_generator_mode(m) for m in self.generators),
        )
        if isinstance(self.tiers, dict):
            object.__setattr__(self, "tiers", tuple(self.tiers.items()))
        if self.limit is not None and self.limit < 1:
            raise ValueError(f"limit must be positive, got {self.limit}.")

    @classmethod
    def from_dict(cls, data):
        """Flatten the TOML section layout into a config."""
        sections = {
            "paths": (
                "dump",
                "dataset",
                "index",
                "output",
                "stoplist",
                "fold_table",
            ),
            "pipeline": ("hops", "n", "generators", "limit"),
            "ranking": (
                "k1",
                "b",
                "title_field_boost",
                "rerank_pool",
                "tiers",
            ),
            "oracle": ("min_ratio",),
        }
        kwargs = {}
        for section, values in data.items():
            if section not in sections:
                raise ValueError(f"Unknown config section [{section}].")
            for key, value in values.items():
                if key not in sections[section]:
                    raise ValueError(f"Unknown config key {section}.{key}.")
                kwargs[key] = value
        if "generators" in kwargs:
            kwargs["generators"] = tuple(kwargs["generators"])
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as f:
            return cls.from_dict(tomllib.load(f))

    def with_overrides(self, **overrides):
        """A copy with every override that is not ``None`` applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def ranking_params(self):
        from .ranking import DEFAULT_TIERS, RankingParams

        return RankingParams(
            k1=self.k1,
            b=self.b,
            title_field_boost=self.title_field_boost,
            rerank_pool=self.rerank_pool,
            tiers=DEFAULT_TIERS if self.tiers is None else self.tiers,
        )

    def pipeline_config(self):
        from .pipeline import PipelineConfig

        return PipelineConfig(
            hops=self.hops,
            n=self.n,
            ranking=self.ranking_params(),
            min_ratio=self.min_ratio,
        )

    def require(self, *names):
        """Check that the named path settings are given and exist."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"No {name} path configured.")
            if not os.path.exists(value):
                raise FileNotFoundError(f"{name} path {value} does not exist.")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["generators"] = list(self.generators)
        d["tiers"] = None if self.tiers is None else dict(self.tiers)
        return d


def write_run_manifest(output_dir, command, config, inputs=()):
    """Record what produced the files in ``output_dir``.

    Parameters
    ----------
    output_dir : str
        Where the manifest is written.
    command : str
        The subcommand run.
    config : RunConfig
        The effective configuration.
    inputs : iterable of str, optional
        Input paths, hashed by content (files) or listing (directories).

    Returns
    -------
    dict
        The manifest written.
    """
    os.makedirs(output_dir, exist_ok=True)
    config_dict = config.to_dict()
    manifest = {
        "command": command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config_dict,
        "config_sha1": json_hasher(config_dict),
        "inputs": {p: sha1_path(p) for p in inputs if p is not None},
        "versions": package_versions(),
    }
    with open(os.path.join(output_dir, RUN_MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
    return manifest
