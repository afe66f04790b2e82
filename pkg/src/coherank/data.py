"""Domain types and dataset file I/O.

Corpus, queries, and triplets are JSONL; qrels and runs use the TREC text
formats. All text is UTF-8. Loaded structures are plain immutable-by-practice
containers, safe to share across threads.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ClusterError,
    DuplicateIdError,
    FormatError,
    InvalidTripletError,
    ParseError,
)

CORPUS_FILE = "corpus.jsonl"
QUERIES_FILE = "queries.jsonl"
QRELS_FILE = "qrels.txt"
TRIPLETS_FILE = "triplets.jsonl"

RUN_RESERVED = "Q0"
_SCORE_EPS = 1e-9


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    cluster_id: str
    is_canonical: bool


@dataclass(frozen=True)
class QueryCluster:
    cluster_id: str
    canonical_query_id: str
    variant_query_ids: tuple

    @property
    def size(self) -> int:
        return 1 + len(self.variant_query_ids)


@dataclass
class Qrels:
    """Graded relevance judgments: query_id -> doc_id -> grade >= 0."""

    grades: dict = field(default_factory=dict)
    duplicate_warnings: int = 0

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.grades.get(query_id, {}).get(doc_id, 0)

    def relevant_docs(self, query_id: str, min_grade: int = 1):
        return {d for d, g in self.grades.get(query_id, {}).items() if g >= min_grade}

    def set(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError("relevance grades must be >= 0")
        self.grades.setdefault(query_id, {})[doc_id] = int(grade)


@dataclass(frozen=True)
class TrainingExample:
    query_id: str
    positive_doc_id: str
    negative_doc_ids: tuple
    variant_query_ids: tuple = ()

    def __post_init__(self):
        negs = self.negative_doc_ids
        if len(set(negs)) != len(negs):
            raise InvalidTripletError(f"{self.query_id}: negatives are not pairwise distinct")
        if self.positive_doc_id in negs:
            raise InvalidTripletError(
                f"{self.query_id}: positive {self.positive_doc_id} listed among negatives")


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


class RankedList:
    """Descending (doc_id, score) list for one query."""

    __slots__ = ("query_id", "entries")

    def __init__(self, query_id: str, entries):
        entries = tuple((str(d), float(s)) for d, s in entries)
        seen = set()
        prev = None
        for doc_id, score in entries:
            if doc_id in seen:
                raise FormatError(f"{query_id}: duplicate doc_id {doc_id} in ranked list")
            seen.add(doc_id)
            if not (-1.0 - _SCORE_EPS <= score <= 1.0 + _SCORE_EPS):
                raise FormatError(f"{query_id}: score {score} outside [-1, 1]")
            if prev is not None and score > prev + _SCORE_EPS:
                raise FormatError(f"{query_id}: scores increase at doc {doc_id}")
            prev = score
        self.query_id = query_id
        self.entries = entries

    def doc_ids(self):
        return [d for d, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return (isinstance(other, RankedList)
                and self.query_id == other.query_id and self.entries == other.entries)

    def __repr__(self):
        return f"RankedList({self.query_id!r}, {len(self.entries)} entries)"


@dataclass
class Dataset:
    corpus: dict
    queries: dict
    clusters: dict
    qrels: Qrels
    triplets: list


# ---------------------------------------------------------------------------
# JSONL helpers


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, line_no) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path, line_no)
            yield line_no, obj


def _require(obj, key, types, path, line_no):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", path, line_no)
    value = obj[key]
    if not isinstance(value, types):
        raise ParseError(f"field {key!r} has wrong type", path, line_no)
    return value


# ---------------------------------------------------------------------------
# corpus


def load_corpus(path, allow_empty_text: bool = False):
    """Load a JSONL corpus into doc_id -> Document (insertion-ordered)."""
    docs = {}
    for line_no, obj in _iter_jsonl(path):
        doc_id = _require(obj, "doc_id", str, path, line_no)
        text = _require(obj, "text", str, path, line_no)
        if not doc_id:
            raise ParseError("doc_id must be non-empty", path, line_no)
        if not text and not allow_empty_text:
            raise ParseError(f"document {doc_id} has empty text", path, line_no)
        if doc_id in docs:
            raise DuplicateIdError(f"duplicate doc_id {doc_id!r} at {path}:{line_no}")
        docs[doc_id] = Document(doc_id, text)
    return docs


def write_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs.values() if isinstance(docs, dict) else docs:
            fh.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text},
                                ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# queries and clusters


def load_queries(path):
    """Load queries and assemble clusters; exactly one canonical per cluster."""
    queries = {}
    members = {}
    for line_no, obj in _iter_jsonl(path):
        query_id = _require(obj, "query_id", str, path, line_no)
        text = _require(obj, "text", str, path, line_no)
        cluster_id = _require(obj, "cluster_id", str, path, line_no)
        is_canonical = _require(obj, "is_canonical", bool, path, line_no)
        if query_id in queries:
            raise DuplicateIdError(f"duplicate query_id {query_id!r} at {path}:{line_no}")
        queries[query_id] = Query(query_id, text, cluster_id, is_canonical)
        members.setdefault(cluster_id, []).append(queries[query_id])

    clusters = {}
    for cluster_id, qs in members.items():
        canonicals = [q.query_id for q in qs if q.is_canonical]
        if len(canonicals) != 1:
            raise ClusterError(
                f"cluster {cluster_id!r} has {len(canonicals)} canonical queries (need 1)")
        variants = tuple(q.query_id for q in qs if not q.is_canonical)
        clusters[cluster_id] = QueryCluster(cluster_id, canonicals[0], variants)
    return queries, clusters


def write_queries(queries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries.values() if isinstance(queries, dict) else queries:
            fh.write(json.dumps({
                "query_id": q.query_id,
                "text": q.text,
                "cluster_id": q.cluster_id,
                "is_canonical": q.is_canonical,
            }, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# qrels


def load_qrels(path) -> Qrels:
    """TREC qrels ("qid 0 docid grade"); later duplicates overwrite with a warning count."""
    qrels = Qrels()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"expected 4 columns, got {len(parts)}", path, line_no)
            query_id, _, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError as exc:
                raise ParseError(f"non-integer grade {grade_s!r}", path, line_no) from exc
            if grade < 0:
                raise ParseError(f"negative grade {grade}", path, line_no)
            row = qrels.grades.setdefault(query_id, {})
            if doc_id in row:
                qrels.duplicate_warnings += 1
            row[doc_id] = grade
    return qrels


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query_id, row in qrels.grades.items():
            for doc_id, grade in row.items():
                fh.write(f"{query_id} 0 {doc_id} {grade}\n")


# ---------------------------------------------------------------------------
# runs


def write_run(lists, tag: str, path) -> None:
    """TREC run file; scores fixed at 6 decimals for bit-exact golden tests."""
    with open(path, "w", encoding="utf-8") as fh:
        for ranked in lists:
            for rank, (doc_id, score) in enumerate(ranked.entries, start=1):
                fh.write(f"{ranked.query_id} {RUN_RESERVED} {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(path):
    """Parse a run file back to RankedLists, validating rank contiguity."""
    per_query = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(f"expected 6 columns, got {len(parts)}", path, line_no)
            query_id, _, doc_id, rank_s, score_s, _tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as exc:
                raise ParseError(f"bad rank/score {rank_s!r}/{score_s!r}", path, line_no) from exc
            if query_id not in per_query:
                per_query[query_id] = []
                order.append(query_id)
            expected = len(per_query[query_id]) + 1
            if rank != expected:
                raise FormatError(
                    f"{path}:{line_no}: rank {rank} for {query_id} (expected {expected})")
            per_query[query_id].append((doc_id, score))
    return [RankedList(qid, per_query[qid]) for qid in order]


# ---------------------------------------------------------------------------
# triplets


def load_triplets(path, corpus=None, queries=None, clusters=None, strict: bool = False):
    """Load training triplets; strict mode validates every id reference."""
    examples = []
    for line_no, obj in _iter_jsonl(path):
        query_id = _require(obj, "query_id", str, path, line_no)
        positive = _require(obj, "positive_doc_id", str, path, line_no)
        negatives = _require(obj, "negative_doc_ids", list, path, line_no)
        variants = _require(obj, "variant_query_ids", list, path, line_no)
        example = TrainingExample(query_id, positive, tuple(negatives), tuple(variants))
        if strict:
            _validate_example(example, corpus, queries, clusters)
        examples.append(example)
    return examples


def _validate_example(example, corpus, queries, clusters):
    if queries is not None and example.query_id not in queries:
        raise InvalidTripletError(f"unknown query_id {example.query_id!r}")
    if corpus is not None:
        for doc_id in (example.positive_doc_id, *example.negative_doc_ids):
            if doc_id not in corpus:
                raise InvalidTripletError(f"{example.query_id}: unknown doc_id {doc_id!r}")
    if queries is not None:
        anchor_cluster = queries[example.query_id].cluster_id
        for vid in example.variant_query_ids:
            if vid not in queries or queries[vid].cluster_id != anchor_cluster:
                raise InvalidTripletError(
                    f"{example.query_id}: variant {vid!r} not in cluster {anchor_cluster!r}")


def write_triplets(examples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "query_id": ex.query_id,
                "positive_doc_id": ex.positive_doc_id,
                "negative_doc_ids": list(ex.negative_doc_ids),
                "variant_query_ids": list(ex.variant_query_ids),
            }, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# dataset bundles


def write_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(dataset.corpus, out / CORPUS_FILE)
    write_queries(dataset.queries, out / QUERIES_FILE)
    write_qrels(dataset.qrels, out / QRELS_FILE)
    write_triplets(dataset.triplets, out / TRIPLETS_FILE)


def load_dataset(data_dir, strict: bool = False) -> Dataset:
    root = Path(data_dir)
    corpus = load_corpus(root / CORPUS_FILE)
    queries, clusters = load_queries(root / QUERIES_FILE)
    qrels = load_qrels(root / QRELS_FILE)
    if strict:
        for query_id, row in qrels.grades.items():
            if query_id not in queries:
                raise ParseError(f"qrels reference unknown query {query_id!r}")
            for doc_id in row:
                if doc_id not in corpus:
                    raise ParseError(f"qrels reference unknown doc {doc_id!r}")
    triplets = load_triplets(root / TRIPLETS_FILE, corpus=corpus, queries=queries,
                             clusters=clusters, strict=strict)
    return Dataset(corpus, queries, clusters, qrels, triplets)
