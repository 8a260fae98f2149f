import json
import math

import pytest
from numpy.testing import assert_allclose

import goldenir as gir
from goldenir.eval import oracle_results, write_report

PAIRS = [
    gir.GoldPair("a", "A1", "A2", "bridge"),
    gir.GoldPair("b", "B1", "B2", "comparison"),
    gir.GoldPair("c", "C1", "C2", "bridge"),
    gir.GoldPair("d", "D1", "D2", "comparison"),
]


def test_gold_pair_titles_differ():
    with pytest.raises(ValueError):
        gir.GoldPair("x", "Same", "Same")


def test_gold_ranks():
    ranks = gir.gold_ranks(["X", "A2", "A1"], ("A1", "A2", "Z"))
    assert ranks == {"A1": 3, "A2": 2, "Z": math.inf}
    ranks = gir.gold_ranks([["X", "A2"], ["A2", "A1"]], ("A1", "A2"))
    assert ranks == {"A1": 2, "A2": 1}
    assert gir.gold_ranks([], ("A1",)) == {"A1": math.inf}


@pytest.mark.parametrize(
    "ranked, expected",
    [
        (["A2", "X", "A1"], ("A2", "A1", 1, 3)),
        (["A1", "A2"], ("A1", "A2", 1, 2)),
        ([["X", "A2"], ["A1"]], ("A1", "A2", 1, 2)),
        # equal best ranks over two lists, title order decides
        ([["A2"], ["A1"]], ("A1", "A2", 1, 1)),
        (["X", "A2"], ("A2", "A1", 2, math.inf)),
        ([], ("A1", "A2", math.inf, math.inf)),
    ],
)
def test_assign_gold_order(ranked, expected):
    order = gir.assign_gold_order(ranked, PAIRS[0])
    assert (order.d1, order.d2, order.rank1, order.rank2) == expected


def _random_results(seed, n_lists=1, length=30):
    rng = gir.utils.get_rng(seed)
    titles = [t for p in PAIRS for t in p.titles] + [
        f"x{i}" for i in range(40)
    ]
    results = {}
    for p in PAIRS:
        results[p.question_id] = [
            [titles[i] for i in rng.permutation(len(titles))[:length]]
            for _ in range(n_lists)
        ]
    return results


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("n_lists", [1, 2])
def test_recall_curves_monotone(seed, n_lists):
    results = _random_results(seed, n_lists)
    report = gir.recall_curves(results, PAIRS, name="r")
    report.check()
    assert report.ks == (1, 2, 5, 10, 20, 50)
    assert all(a <= b for a, b in zip(report.d1, report.d1[1:]))
    assert all(a <= b for a, b in zip(report.d2, report.d2[1:]))
    assert all(a >= b for a, b in zip(report.d1, report.d2))
    if n_lists == 1:
        # one list cannot hold both gold titles at rank 1
        assert report.recall("d_2", 1) == 0.0


def test_recall_curves_values():
    results = {
        "a": [["A1", "A2"]],
        "b": [["B2", "x", "x", "B1"]],
        "c": [["x", "C1"]],
    }
    report = gir.recall_curves(results, PAIRS, ks=(1, 2, 5), budget=2)
    assert report.d1 == (50.0, 75.0, 75.0)
    assert report.d2 == (0.0, 25.0, 50.0)
    assert report.both_gold_pct == 25.0
    assert report.question_ids == ("a", "b", "c", "d")
    assert report.n_questions == 4


@pytest.mark.parametrize("ks", [(), (0, 1)])
def test_recall_curves_bad_ks(ks):
    with pytest.raises(ValueError):
        gir.recall_curves({}, PAIRS, ks=ks)


def test_recall_by_type():
    results = {"a": [["A1", "A2"]], "b": [["B1"]]}
    reports = gir.recall_by_type(results, PAIRS, ks=(1, 2))
    assert list(reports) == ["bridge", "comparison"]
    assert reports["bridge"].d2 == (0.0, 50.0)
    assert reports["comparison"].d1 == (50.0, 50.0)
    assert reports["bridge"].question_ids == ("a", "c")


def test_report_formats(tmp_path):
    report = gir.recall_curves(
        {"a": [["A1", "A2"]]}, PAIRS[:2], ks=(1, 2), name="single"
    )
    assert report.to_tsv() == "k\td_1\td_2\n1\t50.00\t0.00\n2\t50.00\t50.00\n"
    csv_lines = report.to_csv().splitlines()
    assert csv_lines[0] == "k,series,value"
    assert csv_lines[1] == "1,single:d_1,50.0"
    assert len(csv_lines) == 5

    prefix = str(tmp_path / "report")
    write_report(report, prefix)
    assert (tmp_path / "report.tsv").read_text() == report.to_tsv()
    assert (tmp_path / "report.csv").exists()
    with open(prefix + ".json") as f:
        d = json.load(f)
    assert d["questions"] == 2
    assert d["d_2"] == [0.0, 50.0]


def test_report_check_rejects_bad_curves():
    report = gir.RecallReport("r", (1, 2), (50.0, 40.0), (0.0, 0.0), 0.0, 2)
    with pytest.raises(AssertionError):
        report.check()
    report = gir.RecallReport("r", (1, 2), (10.0, 20.0), (20.0, 20.0), 0.0, 2)
    with pytest.raises(AssertionError):
        report.check()


def test_both_gold_pct():
    contexts = {
        "a": ["A1", "A2", "X"],
        "b": ["B1"],
        "c": {"C2", "C1"},
    }
    assert gir.both_gold_pct(contexts, PAIRS) == 50.0
    assert gir.both_gold_pct({}, PAIRS) == 0.0
    assert gir.both_gold_pct({}, []) == 0.0


def _report(name, ids, d1=(50.0, 60.0, 70.0), d2=(10.0, 20.0, 30.0)):
    return gir.RecallReport(name, (1, 5, 10), d1, d2, 0.0, 10, tuple(ids))


def test_oracle_vs_singlehop_delta():
    oracle = _report("oracle", "ab", d1=(80.0, 90.0, 95.0), d2=(5, 60, 70))
    single = _report("single", "ab")
    assert_allclose(gir.oracle_vs_singlehop_delta(oracle, single), (20, 30))
    assert gir.oracle_vs_singlehop_delta(single, single, 5, 5) == (0, 0)


def test_oracle_vs_singlehop_delta_mismatch():
    with pytest.raises(gir.QuestionSetMismatchError, match="different"):
        gir.oracle_vs_singlehop_delta(_report("o", "ab"), _report("s", "abc"))


@pytest.mark.parametrize(
    "predicted, reference, em, f1",
    [
        ("Giuseppe Verdi", "giuseppe verdi", 1.0, 1.0),
        ("the Armada", "Armada.", 1.0, 1.0),
        ("Laura Bush", "George W. Bush", 0.0, 0.4),
        ("", "Armada", 0.0, 0.0),
        ("", "", 1.0, 1.0),
        ("Shirley Temple", "Scott Parkin", 0.0, 0.0),
    ],
)
def test_span_em_f1(predicted, reference, em, f1):
    got_em, got_f1 = gir.span_em_f1(predicted, reference)
    assert got_em == em
    assert_allclose(got_f1, f1)


def test_evaluate_generator_spans():
    records = [
        {"question_id": "a", "hop": 1, "query": "George W. Bush"},
        {"question_id": "a", "hop": 2, "query": "Laura Bush"},
        {"question_id": "b", "hop": 1, "query": "Armada"},
    ]
    predictions = {("a", 1): "George W. Bush", ("a", 2): "Bush"}
    out = gir.evaluate_generator_spans(predictions, records)
    assert out["count"] == 3
    assert_allclose(out["em"], 100 / 3)
    assert out["hops"][1]["em"] == 50.0
    assert_allclose(out["hops"][2]["f1"], 100 * 2 / 3)


@pytest.fixture
def bush_questions():
    return [
        gir.DatasetQuestion(
            "q1",
            "Who is the wife of George W. Bush?",
            gold_titles=("Laura Bush", "George W. Bush"),
            question_type="bridge",
        ),
        gir.DatasetQuestion(
            "q2",
            "Is Armada a novel by the library of George W. Bush?",
            gold_titles=(
                "Armada (novel)",
                "George W. Bush Presidential Library",
            ),
            question_type="comparison",
        ),
    ]


def test_evaluate_single_hop(bush_index, bush_questions):
    report = gir.evaluate_single_hop(bush_index, bush_questions, ks=(1, 5))
    assert report.name == "single-hop"
    assert report.recall("d_1", 5) == 100.0
    assert set(report.facets) == {"bridge", "comparison"}
    assert report.to_dict()["facets"]["bridge"]["questions"] == 1


@pytest.mark.parametrize("budget, expected", [(None, 10), (2, 2)])
def test_evaluate_single_hop_both_gold_budget(
    bush_index, bush_questions, budget, expected
):
    report = gir.evaluate_single_hop(
        bush_index, bush_questions, ks=(1, 2), budget=budget
    )
    assert report.budget == expected
    ranked = {
        q.question_id: [
            h.title
            for h in gir.retrieve_hits(bush_index, q.question, expected)
        ]
        for q in bush_questions
    }
    pairs = [gir.GoldPair.from_question(q) for q in bush_questions]
    assert report.both_gold_pct == gir.both_gold_pct(ranked, pairs)


def test_evaluate_oracle(bush_index, bush_questions):
    results, records, errors = oracle_results(bush_index, bush_questions)
    assert set(results) == set(records)
    assert errors == []
    report, errors = gir.evaluate_oracle(bush_index, bush_questions, (1, 5))
    assert report.name == "oracle"
    assert report.budget == gir.PipelineConfig().n
    assert report.recall("d_1", 1) > 0
    assert errors == []
    report.check()


def test_evaluate_oracle_reports_failures(bush_index, bush_questions):
    missing = gir.DatasetQuestion(
        "q3",
        "Who wrote Ready Player One?",
        gold_titles=("Armada (novel)", "Ready Player One"),
    )
    questions = [*bush_questions, missing]
    results, _, errors = oracle_results(bush_index, questions)
    assert "q3" not in results
    assert [e["question_id"] for e in errors] == ["q3"]
    assert "Ready Player One" in errors[0]["error"]

    report, errors = gir.evaluate_oracle(bush_index, questions, (1, 5))
    assert report.n_questions == 3
    assert [e["question_id"] for e in errors] == ["q3"]


def test_evaluate_pipeline(bush_index, bush_questions):
    generators = [gir.QuestionGenerator()] * 2
    config = gir.PipelineConfig(n=2)
    report, runs, errors = gir.evaluate_pipeline(
        bush_index, bush_questions, generators, config
    )
    assert report.ks == (1, 2)
    assert report.budget == 4
    assert len(runs) == 2
    assert errors == []
    contexts = {r.question.question_id: r.context.titles for r in runs}
    pairs = [gir.GoldPair.from_question(q) for q in bush_questions]
    assert report.both_gold_pct == gir.both_gold_pct(contexts, pairs)


def test_evaluate_pipeline_keeps_error_text(bush_index, bush_questions):
    generator = gir.OracleGenerator(bush_index)
    missing = gir.DatasetQuestion(
        "q3",
        "Who wrote Ready Player One?",
        gold_titles=("Armada (novel)", "Ready Player One"),
    )
    report, runs, errors = gir.evaluate_pipeline(
        bush_index, [*bush_questions, missing], [generator, generator]
    )
    assert len(runs) == 2
    assert [e["question_id"] for e in errors] == ["q3"]
    assert "Ready Player One" in errors[0]["error"]
    assert report.n_questions == 3


def test_run_ablation(bush_index, bush_questions):
    reports = gir.run_ablation(bush_index, bush_questions, k=5)
    assert list(reports) == list(gir.RankingParams.ablations())
    table = gir.format_ablation_table(reports, k=5)
    lines = table.splitlines()
    assert lines[0] == "setting\td_1 R@5\td_2 R@5"
    assert lines[1].startswith("final\t")
    assert len(lines) == 5


def test_plot_recall_curves():
    pytest.importorskip("matplotlib")
    import matplotlib

    matplotlib.use("Agg")
    report = gir.recall_curves(_random_results(0), PAIRS, name="r")
    ax = gir.plot_recall_curves([report])
    assert len(ax.get_lines()) == 2
    assert ax.get_xscale() == "log"
