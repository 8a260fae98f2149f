import bz2
import json
import os

import pytest

import goldenir as gir
from goldenir.corpus_io import iter_shards, parse_dump_line


def _page(title, sentences, url=None):
    record = {"id": "1", "title": title, "text": sentences}
    if url is not None:
        record["url"] = url
    return json.dumps(record)


def _write_shard(path, lines):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = "".join(line + "\n" for line in lines).encode("utf-8")
    if path.endswith(".bz2"):
        data = bz2.compress(data)
    with open(path, "wb") as f:
        f.write(data)


@pytest.fixture
def dump_dir(tmp_path):
    root = tmp_path / "dump"
    _write_shard(
        str(root / "AB" / "wiki_00.bz2"),
        [_page("Laura Bush", ["Laura Bush is a librarian."])],
    )
    _write_shard(
        str(root / "AA" / "wiki_01.bz2"),
        [
            _page("Armada (novel)", ["Armada is a novel."]),
            _page("Bush", [["Bush ", "may refer to"], " a shrub."]),
        ],
    )
    _write_shard(
        str(root / "AA" / "wiki_00.bz2"),
        [
            _page("George W. Bush", ["George Walker Bush.", " A politician."]),
            "",
            _page("Stub", []),
        ],
    )
    # ignored, not a shard
    (root / "AA" / "README").write_text("not a shard")
    return str(root)


def test_iter_shards_order(dump_dir):
    shards = [os.path.relpath(s, dump_dir) for s in iter_shards(dump_dir)]
    assert shards == [
        os.path.join("AA", "wiki_00.bz2"),
        os.path.join("AA", "wiki_01.bz2"),
        os.path.join("AB", "wiki_00.bz2"),
    ]


def test_load_wiki_dump(dump_dir):
    docs = list(gir.load_wiki_dump(dump_dir))
    assert [d.doc_id for d in docs] == list(range(5))
    assert [d.title for d in docs] == [
        "George W. Bush",
        "Stub",
        "Armada (novel)",
        "Bush",
        "Laura Bush",
    ]
    assert docs[0].sentences == ("George Walker Bush.", " A politician.")
    assert docs[1].sentences == ()
    assert docs[3].sentences == ("Bush may refer to", " a shrub.")


def test_load_wiki_dump_is_deterministic(dump_dir):
    a = list(gir.load_wiki_dump(dump_dir))
    b = list(gir.load_wiki_dump(dump_dir))
    assert a == b


def test_load_wiki_dump_limit(dump_dir):
    docs = list(gir.load_wiki_dump(dump_dir, limit=3))
    assert [d.title for d in docs][-1] == "Armada (novel)"
    assert len(docs) == 3


def test_load_wiki_dump_single_file(tmp_path):
    path = str(tmp_path / "pages.jsonl")
    _write_shard(path, [_page("A", ["x."], url="http://a"), _page("B", [])])
    docs = list(gir.load_wiki_dump(path))
    assert [d.title for d in docs] == ["A", "B"]
    assert docs[0].source_url == "http://a"
    assert docs[1].source_url is None


def test_load_wiki_dump_tolerates_a_bad_line(tmp_path, caplog):
    path = str(tmp_path / "d" / "wiki_00")
    _write_shard(
        path + ".jsonl",
        [_page("A", ["x."]), "{not json", _page("B", ["y."])],
    )
    docs = list(gir.load_wiki_dump(str(tmp_path / "d")))
    assert [d.doc_id for d in docs] == [0, 1]
    assert "malformed line 2" in caplog.text


def test_load_wiki_dump_too_many_bad_lines(tmp_path):
    lines = [_page(f"T{i}", ["x."]) for i in range(8)]
    lines += ["{not json", json.dumps({"title": ""})]
    _write_shard(str(tmp_path / "d" / "wiki_00.jsonl"), lines)
    with pytest.raises(gir.DumpFormatError, match="malformed"):
        list(gir.load_wiki_dump(str(tmp_path / "d")))


def test_load_wiki_dump_empty(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(gir.DumpReadError, match="No dump shards"):
        list(gir.load_wiki_dump(str(tmp_path / "empty")))
    with pytest.raises(gir.DumpReadError):
        list(gir.load_wiki_dump(str(tmp_path / "missing")))


def test_load_wiki_dump_corrupt_shard(tmp_path):
    path = tmp_path / "d" / "wiki_00.bz2"
    path.parent.mkdir()
    path.write_bytes(b"definitely not bz2")
    with pytest.raises(gir.DumpReadError, match="wiki_00.bz2"):
        list(gir.load_wiki_dump(str(tmp_path / "d")))


@pytest.mark.parametrize(
    "line",
    [
        "[1, 2]",
        json.dumps({"text": ["no title"]}),
        json.dumps({"title": "   "}),
        json.dumps({"title": "T", "text": 3}),
        "{broken",
    ],
)
def test_parse_dump_line_invalid(line):
    with pytest.raises(ValueError):
        parse_dump_line(line)


def test_parse_dump_line_string_text():
    assert parse_dump_line(json.dumps({"title": "T", "text": "one"})) == (
        "T",
        ("one",),
        None,
    )


def _question(qid, titles, **kwargs):
    return {
        "_id": qid,
        "question": f"Question {qid}?",
        "answer": "yes",
        "supporting_facts": [[t, i] for i, t in enumerate(titles)],
        **kwargs,
    }


def test_load_dataset(tmp_path, caplog):
    records = [
        _question("a", ["A1", "A2", "A1"], type="bridge", level="hard"),
        _question("b", ["B1", "B2", "B3"]),
        {"_id": "c", "question": "missing facts"},
        _question("d", ["D1"]),
        _question("e", ["E1", "E2"], type="comparison"),
    ]
    path = tmp_path / "dev.json"
    path.write_text(json.dumps(records))
    questions = gir.load_dataset(str(path))

    assert [q.question_id for q in questions] == ["a", "e"]
    a = questions[0]
    assert a.gold_titles == ("A1", "A2")
    assert a.question_type == "bridge"
    assert a.level == "hard"
    assert a.supporting_facts == (("A1", 0), ("A2", 1), ("A1", 2))
    assert "'b': 3 gold titles" in caplog.text

    assert len(gir.load_dataset(str(path), limit=1)) == 1


def test_load_dataset_not_a_list(tmp_path):
    path = tmp_path / "dev.json"
    path.write_text(json.dumps({"data": []}))
    with pytest.raises(ValueError):
        gir.load_dataset(str(path))


CONFIG_TOML = """
[paths]
dump = "wiki"
output = "out"

[pipeline]
hops = 3
n = 4
generators = ["question", "oracle", "external:queries.jsonl"]

[ranking]
k1 = 0.9
rerank_pool = 40

[ranking.tiers]
exact = 1.4
title_in_query = 1.2
query_in_title = 1.05

[oracle]
min_ratio = 0.5
"""


def test_run_config_from_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG_TOML)
    config = gir.RunConfig.from_toml(str(path))
    assert config.dump == "wiki"
    assert config.generators[2] == "external:queries.jsonl"
    params = config.ranking_params()
    assert params.k1 == 0.9
    assert params.tier("exact") == 1.4
    assert params.rerank_pool == 40
    pc = config.pipeline_config()
    assert (pc.hops, pc.n, pc.min_ratio) == (3, 4, 0.5)
    assert config.to_dict()["tiers"]["query_in_title"] == 1.05


def test_run_config_defaults():
    config = gir.RunConfig()
    assert config.ranking_params() == gir.RankingParams()
    assert config.pipeline_config() == gir.PipelineConfig()


@pytest.mark.parametrize(
    "data",
    [
        {"paths": {"dumps": "x"}},
        {"indexing": {}},
        {"pipeline": {"generators": ["oracle", "magic"]}},
        {"pipeline": {"generators": ["external:"]}},
        {"pipeline": {"limit": 0}},
    ],
)
def test_run_config_invalid(data):
    with pytest.raises(ValueError):
        gir.RunConfig.from_dict(data)


def test_run_config_overrides():
    config = gir.RunConfig(hops=3, n=4)
    new = config.with_overrides(hops=None, n=2, index="idx")
    assert (new.hops, new.n, new.index) == (3, 2, "idx")
    assert config.n == 4


def test_run_config_require(tmp_path):
    config = gir.RunConfig(index=str(tmp_path / "nope"))
    with pytest.raises(FileNotFoundError):
        config.require("index")
    with pytest.raises(ValueError, match="dataset"):
        config.require("dataset")
    gir.RunConfig(index=str(tmp_path)).require("index")


def test_write_run_manifest(tmp_path, dump_dir):
    config = gir.RunConfig(dump=dump_dir)
    out = str(tmp_path / "out")
    manifest = gir.write_run_manifest(out, "build-index", config, [dump_dir])
    with open(os.path.join(out, "run_manifest.json")) as f:
        on_disk = json.load(f)
    assert on_disk["command"] == "build-index"
    assert on_disk["config_sha1"] == manifest["config_sha1"]
    assert on_disk["inputs"][dump_dir] == gir.utils.sha1_path(dump_dir)
    assert "numpy" in on_disk["versions"]

    again = gir.write_run_manifest(out, "build-index", config, [dump_dir])
    assert again["config_sha1"] == manifest["config_sha1"]
    other = gir.write_run_manifest(out, "x", gir.RunConfig(n=3), [])
    assert other["config_sha1"] != manifest["config_sha1"]
