import json

import pytest

from coherank.data import (
    Dataset,
    Document,
    Qrels,
    Query,
    RankedList,
    TrainingExample,
    load_corpus,
    load_dataset,
    load_qrels,
    load_queries,
    load_triplets,
    read_run,
    write_corpus,
    write_dataset,
    write_qrels,
    write_queries,
    write_run,
    write_triplets,
)
from coherank.errors import (
    ClusterError,
    DuplicateIdError,
    FormatError,
    InvalidTripletError,
    ParseError,
)


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# corpus


def test_load_corpus_basic(tmp_path):
    p = tmp_path / "c.jsonl"
    _write(p, ['{"doc_id":"d1","text":"abc"}'])
    docs = load_corpus(p)
    assert docs == {"d1": Document("d1", "abc")}


def test_load_corpus_duplicate_id(tmp_path):
    p = tmp_path / "c.jsonl"
    _write(p, ['{"doc_id":"d1","text":"a"}', '{"doc_id":"d1","text":"b"}'])
    with pytest.raises(DuplicateIdError):
        load_corpus(p)


def test_load_corpus_empty_file(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text("", encoding="utf-8")
    assert load_corpus(p) == {}


def test_load_corpus_blank_lines_skipped(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"doc_id":"d1","text":"a"}\n\n{"doc_id":"d2","text":"b"}\n', encoding="utf-8")
    assert len(load_corpus(p)) == 2


def test_load_corpus_malformed_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    _write(p, ['{"doc_id":"d1","text":"a"}', '{broken'])
    with pytest.raises(ParseError) as exc:
        load_corpus(p)
    assert exc.value.line_no == 2


def test_load_corpus_empty_text_policy(tmp_path):
    p = tmp_path / "c.jsonl"
    _write(p, ['{"doc_id":"d1","text":""}'])
    with pytest.raises(ParseError):
        load_corpus(p)
    assert load_corpus(p, allow_empty_text=True)["d1"].text == ""


# ---------------------------------------------------------------------------
# queries and clusters


def _query_line(qid, cid, canonical, text="t"):
    return json.dumps({"query_id": qid, "text": text, "cluster_id": cid,
                       "is_canonical": canonical})


def test_load_queries_assembles_clusters(tmp_path):
    p = tmp_path / "q.jsonl"
    _write(p, [_query_line("q0", "c1", True),
               _query_line("q1", "c1", False),
               _query_line("q2", "c1", False)])
    queries, clusters = load_queries(p)
    assert clusters["c1"].canonical_query_id == "q0"
    assert clusters["c1"].variant_query_ids == ("q1", "q2")
    assert queries["q1"].cluster_id == "c1"


def test_load_queries_no_canonical(tmp_path):
    p = tmp_path / "q.jsonl"
    _write(p, [_query_line("q1", "c1", False)])
    with pytest.raises(ClusterError):
        load_queries(p)


def test_load_queries_two_canonicals(tmp_path):
    p = tmp_path / "q.jsonl"
    _write(p, [_query_line("q0", "c1", True), _query_line("q1", "c1", True)])
    with pytest.raises(ClusterError):
        load_queries(p)


def test_load_queries_ten_variants(tmp_path):
    p = tmp_path / "q.jsonl"
    lines = [_query_line("q0", "c1", True)]
    lines += [_query_line(f"g{i}", "c1", False) for i in range(10)]
    _write(p, lines)
    _, clusters = load_queries(p)
    assert len(clusters["c1"].variant_query_ids) == 10


def test_load_queries_duplicate_id(tmp_path):
    p = tmp_path / "q.jsonl"
    _write(p, [_query_line("q0", "c1", True), _query_line("q0", "c2", True)])
    with pytest.raises(DuplicateIdError):
        load_queries(p)


# ---------------------------------------------------------------------------
# qrels


def test_load_qrels_basic(tmp_path):
    p = tmp_path / "qrels.txt"
    _write(p, ["q1 0 d7 1"])
    qrels = load_qrels(p)
    assert qrels.grades == {"q1": {"d7": 1}}


def test_load_qrels_non_integer_grade(tmp_path):
    p = tmp_path / "qrels.txt"
    _write(p, ["q1 0 d7 x"])
    with pytest.raises(ParseError):
        load_qrels(p)


def test_load_qrels_duplicate_last_wins(tmp_path):
    p = tmp_path / "qrels.txt"
    _write(p, ["q1 0 d7 0", "q1 0 d7 1"])
    qrels = load_qrels(p)
    assert qrels.grade("q1", "d7") == 1
    assert qrels.duplicate_warnings == 1


def test_load_qrels_negative_grade(tmp_path):
    p = tmp_path / "qrels.txt"
    _write(p, ["q1 0 d7 -2"])
    with pytest.raises(ParseError):
        load_qrels(p)


def test_qrels_roundtrip(tmp_path):
    qrels = Qrels()
    qrels.set("q1", "d1", 2)
    qrels.set("q1", "d2", 0)
    qrels.set("q2", "d3", 1)
    p = tmp_path / "qrels.txt"
    write_qrels(qrels, p)
    assert load_qrels(p).grades == qrels.grades


# ---------------------------------------------------------------------------
# runs


def test_write_run_exact_lines(tmp_path):
    p = tmp_path / "run.txt"
    write_run([RankedList("q1", [("d3", 0.9), ("d1", 0.5)])], "t", p)
    assert p.read_text().splitlines() == [
        "q1 Q0 d3 1 0.900000 t",
        "q1 Q0 d1 2 0.500000 t",
    ]


def test_run_roundtrip_identity(tmp_path):
    lists = [RankedList("q1", [("d3", 0.912345), ("d1", 0.5)]),
             RankedList("q2", [("d2", -0.25)])]
    p = tmp_path / "run.txt"
    write_run(lists, "tag", p)
    loaded = read_run(p)
    assert [(r.query_id, r.doc_ids()) for r in loaded] == \
        [(r.query_id, r.doc_ids()) for r in lists]
    for got, want in zip(loaded, lists):
        for (d1, s1), (d2, s2) in zip(got.entries, want.entries):
            assert d1 == d2 and abs(s1 - s2) < 1e-6


def test_read_run_non_consecutive_ranks(tmp_path):
    p = tmp_path / "run.txt"
    _write(p, ["q1 Q0 d3 1 0.900000 t", "q1 Q0 d1 3 0.500000 t"])
    with pytest.raises(FormatError):
        read_run(p)


def test_read_run_increasing_scores_rejected(tmp_path):
    p = tmp_path / "run.txt"
    _write(p, ["q1 Q0 d3 1 0.100000 t", "q1 Q0 d1 2 0.500000 t"])
    with pytest.raises(FormatError):
        read_run(p)


def test_ranked_list_duplicate_doc():
    with pytest.raises(FormatError):
        RankedList("q", [("d1", 0.9), ("d1", 0.8)])


def test_ranked_list_score_out_of_range():
    with pytest.raises(FormatError):
        RankedList("q", [("d1", 1.5)])


# ---------------------------------------------------------------------------
# triplets


def _triplet_line(qid="q0", pos="d1", negs=("d2", "d3"), variants=("q1",)):
    return json.dumps({"query_id": qid, "positive_doc_id": pos,
                       "negative_doc_ids": list(negs),
                       "variant_query_ids": list(variants)})


def test_load_triplets_negative_counts(tmp_path):
    p = tmp_path / "t.jsonl"
    _write(p, [_triplet_line(negs=[f"n{i}" for i in range(5)]),
               _triplet_line(qid="q9", negs=[f"m{i}" for i in range(10)])])
    examples = load_triplets(p)
    assert len(examples[0].negative_doc_ids) == 5
    assert len(examples[1].negative_doc_ids) == 10


def test_load_triplets_positive_among_negatives(tmp_path):
    p = tmp_path / "t.jsonl"
    _write(p, [_triplet_line(pos="d2")])
    with pytest.raises(InvalidTripletError):
        load_triplets(p)


def test_training_example_duplicate_negatives():
    with pytest.raises(InvalidTripletError):
        TrainingExample("q", "d1", ("d2", "d2"))


def test_load_triplets_strict_validation(tmp_path):
    p = tmp_path / "t.jsonl"
    _write(p, [_triplet_line()])
    corpus = {"d1": Document("d1", "x"), "d2": Document("d2", "y"),
              "d3": Document("d3", "z")}
    queries = {"q0": Query("q0", "t", "c1", True),
               "q1": Query("q1", "t", "c1", False)}
    examples = load_triplets(p, corpus=corpus, queries=queries, strict=True)
    assert examples[0].variant_query_ids == ("q1",)
    # variant from a different cluster fails
    queries_bad = dict(queries)
    queries_bad["q1"] = Query("q1", "t", "OTHER", False)
    with pytest.raises(InvalidTripletError):
        load_triplets(p, corpus=corpus, queries=queries_bad, strict=True)


# ---------------------------------------------------------------------------
# dataset bundle round-trip


def test_dataset_roundtrip(tmp_path, tiny_dataset):
    write_dataset(tiny_dataset, tmp_path)
    loaded = load_dataset(tmp_path, strict=True)
    assert set(loaded.corpus) == set(tiny_dataset.corpus)
    assert set(loaded.queries) == set(tiny_dataset.queries)
    assert loaded.qrels.grades == tiny_dataset.qrels.grades
    assert loaded.triplets == tiny_dataset.triplets
    for cid, cluster in tiny_dataset.clusters.items():
        got = loaded.clusters[cid]
        assert got.canonical_query_id == cluster.canonical_query_id
        assert got.variant_query_ids == cluster.variant_query_ids


def test_cluster_partition_property(tiny_dataset):
    seen = set()
    for cluster in tiny_dataset.clusters.values():
        members = {cluster.canonical_query_id, *cluster.variant_query_ids}
        assert not (members & seen)
        seen |= members
    assert seen == set(tiny_dataset.queries)
