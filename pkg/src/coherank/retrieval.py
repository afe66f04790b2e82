"""Exact top-k retrieval over an in-memory vector index, plus train-free
reformulation strategies (centroid-of-rewrites and best-per-document scoring).

Searches are brute force by design: desk-scale corpora do not justify ANN
structures, and exactness keeps coherence measurements attributable to the
model rather than to index approximation. Ties break by ascending doc_id.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .autodiff import EPS_NORM
from .data import RankedList
from .encoder import EncoderParams, encode, params_digest, tokenize
from .errors import DegenerateCentroidError, EmptyTextError, FormatError

INDEX_MAGIC = b"COHIDX01"
INDEX_VERSION = 1
_INDEX_HEADER = struct.Struct("<8sIQQd")


@dataclass
class VectorIndex:
    doc_ids: tuple
    matrix: np.ndarray = field(repr=False)
    checkpoint_digest: str = ""
    built_at: float = 0.0

    def __post_init__(self):
        if len(self.doc_ids) != self.matrix.shape[0]:
            raise ValueError("doc_ids and matrix rows are misaligned")
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        self.matrix.flags.writeable = False

    def __len__(self):
        return len(self.doc_ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def index_from_embeddings(doc_ids, matrix, checkpoint_digest: str = "") -> VectorIndex:
    """Assemble an index from already-encoded rows, re-sorting by doc_id."""
    order = np.argsort(np.asarray(doc_ids, dtype=object), kind="stable")
    doc_ids = tuple(doc_ids[i] for i in order)
    return VectorIndex(doc_ids, np.asarray(matrix)[order],
                       checkpoint_digest, built_at=time.time())


def build_index(corpus, params: EncoderParams, chunk_size: int = 1024) -> VectorIndex:
    """Encode every document into a unit-norm row; deterministic given params."""
    docs = list(corpus.values()) if isinstance(corpus, dict) else list(corpus)
    docs.sort(key=lambda d: d.doc_id)
    empty = [d.doc_id for d in docs if not tokenize(d.text)]
    if empty:
        raise EmptyTextError(f"documents with no encodable text: {empty}")
    rows = []
    for start in range(0, len(docs), chunk_size):
        chunk = docs[start:start + chunk_size]
        rows.append(encode([d.text for d in chunk], params).values)
    matrix = np.concatenate(rows) if rows else np.empty((0, params.dim))
    return VectorIndex(tuple(d.doc_id for d in docs), matrix,
                       checkpoint_digest=params_digest(params), built_at=time.time())


def _as_unit_vector(index: VectorIndex, query, params) -> np.ndarray:
    if isinstance(query, str):
        if params is None:
            raise ValueError("text queries require encoder params")
        return encode([query], params).values[0]
    vec = np.asarray(query, dtype=np.float64).reshape(-1)
    if vec.shape[0] != index.dim:
        raise ValueError(f"query dim {vec.shape[0]} != index dim {index.dim}")
    norm = float(np.linalg.norm(vec))
    if norm < EPS_NORM:
        raise DegenerateCentroidError("query embedding has (near-)zero norm")
    if abs(norm - 1.0) < 1e-12:
        # already unit (e.g. a centroid of identical embeddings): dividing by
        # 1-ulp-off norms would break exact equivalence with text search
        return vec
    return vec / norm


def _topk_list(index: VectorIndex, query_id: str, scores: np.ndarray, k: int) -> RankedList:
    idx = _kernels.topk_indices(np.ascontiguousarray(scores), k)
    return RankedList(query_id, [(index.doc_ids[i], float(scores[i])) for i in idx])


def search_topk(index: VectorIndex, query, k: int,
                params: EncoderParams = None, query_id: str = "q") -> RankedList:
    """Exact k highest cosine scores, descending; k > corpus size returns all."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    vec = _as_unit_vector(index, query, params)
    scores = index.matrix @ vec
    return _topk_list(index, query_id, scores, k)


def search_centroid(index: VectorIndex, query_texts, k: int,
                    params: EncoderParams = None, query_id: str = "q") -> RankedList:
    """Search with the unit-normalized unweighted mean of the query embeddings
    (original plus reformulations)."""
    if not query_texts:
        raise ValueError("need at least one query text")
    if params is None:
        raise ValueError("text queries require encoder params")
    embs = encode(query_texts, params).values
    return search_topk(index, embs.mean(axis=0), k, query_id=query_id)


def search_best_reform(index: VectorIndex, query_texts, k: int,
                       params: EncoderParams = None, query_id: str = "q") -> RankedList:
    """Score each document by its best cosine over the query variants, then
    take the top k of those maxima."""
    if not query_texts:
        raise ValueError("need at least one query text")
    if params is None:
        raise ValueError("text queries require encoder params")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("index is empty")
    embs = encode(query_texts, params).values
    # one matrix-vector product per variant: bit-identical to search_topk on
    # a single query, which the one-reformulation case must reproduce exactly
    best = np.maximum.reduce([index.matrix @ emb for emb in embs])
    return _topk_list(index, query_id, best, k)


# ---------------------------------------------------------------------------
# persistence


def save_index(index: VectorIndex, path) -> None:
    digest = index.checkpoint_digest.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_INDEX_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, len(index),
                                    index.dim, index.built_at))
        fh.write(struct.pack("<H", len(digest)))
        fh.write(digest)
        for doc_id in index.doc_ids:
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(index.matrix, dtype="<f8").tobytes())


def load_index(path) -> VectorIndex:
    with open(path, "rb") as fh:
        head = fh.read(_INDEX_HEADER.size)
        if len(head) < _INDEX_HEADER.size:
            raise FormatError("index file truncated")
        magic, version, m, dim, built_at = _INDEX_HEADER.unpack(head)
        if magic != INDEX_MAGIC:
            raise FormatError(f"bad index magic {magic!r}")
        if version != INDEX_VERSION:
            raise FormatError(f"unsupported index version {version}")
        (digest_len,) = struct.unpack("<H", fh.read(2))
        digest = fh.read(digest_len).decode("ascii")
        doc_ids = []
        for _ in range(m):
            (n,) = struct.unpack("<I", fh.read(4))
            doc_ids.append(fh.read(n).decode("utf-8"))
        body = fh.read(m * dim * 8)
        if len(body) != m * dim * 8:
            raise FormatError("index matrix truncated")
        matrix = np.frombuffer(body, dtype="<f8").reshape(m, dim).astype(np.float64)
    return VectorIndex(tuple(doc_ids), matrix, digest, built_at)
