import numpy as np
import pytest

from coherank.data import Dataset, Document, Qrels, Query, QueryCluster, TrainingExample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_tiny_dataset():
    """Hand-built dataset: 6 docs, 2 train + 1 dev + 1 test cluster.

    Queries share tokens with their positive docs; negatives are disjoint,
    so ranking is learnable from lexical overlap.
    """
    docs = {
        "d1": Document("d1", "apple orchard fruit harvest autumn red"),
        "d2": Document("d2", "river salmon fishing stream water cold"),
        "d3": Document("d3", "desert cactus sand dune heat dry"),
        "d4": Document("d4", "glacier ice mountain snow peak climb"),
        "d5": Document("d5", "violin concert music string melody bow"),
        "d6": Document("d6", "castle knight armor sword shield stone"),
    }
    spec = [
        ("train-00", "apple orchard harvest", ["fruit orchard picking", "red apple crop"], "d1", ["d3", "d5"]),
        ("train-01", "river salmon fishing", ["salmon stream angling", "cold water fish"], "d2", ["d6", "d4"]),
        ("dev-00", "glacier ice mountain", ["snow peak climbing", "ice mountain trek"], "d4", ["d1", "d2"]),
        ("test-00", "violin concert music", ["string melody player", "music bow recital"], "d5", ["d3", "d6"]),
    ]
    queries, clusters, triplets = {}, {}, []
    qrels = Qrels()
    for cid, canon_text, variant_texts, pos, negs in spec:
        canon_id = f"{cid}-q0"
        queries[canon_id] = Query(canon_id, canon_text, cid, True)
        vids = []
        for i, vt in enumerate(variant_texts, start=1):
            vid = f"{cid}-q{i}"
            queries[vid] = Query(vid, vt, cid, False)
            vids.append(vid)
        clusters[cid] = QueryCluster(cid, canon_id, tuple(vids))
        qrels.set(canon_id, pos, 1)
        if cid.startswith("train-"):
            triplets.append(TrainingExample(canon_id, pos, tuple(negs), tuple(vids)))
    return Dataset(docs, queries, clusters, qrels, triplets)


@pytest.fixture
def tiny_dataset():
    return make_tiny_dataset()
