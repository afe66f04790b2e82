import numpy as np
import pytest

from coherank.data import write_dataset
from coherank.encoder import encode, init_params, tokenize
from coherank.errors import GenerationError
from coherank.synth import (
    DEV_PREFIX,
    TEST_PREFIX,
    TRAIN_PREFIX,
    GeneratorConfig,
    generate,
    generate_with_meta,
    verify_dataset,
)

SMALL = GeneratorConfig(seed=11, concepts=40, docs=120, train_clusters=20,
                        test_clusters=8, variants_per_query=3, hard_negatives=4)


@pytest.fixture(scope="module")
def small_dataset():
    return generate(SMALL)


def test_variant_count_matches_config(small_dataset):
    for cluster in small_dataset.clusters.values():
        assert len(cluster.variant_query_ids) == SMALL.variants_per_query


def test_split_sizes(small_dataset):
    ids = list(small_dataset.clusters)
    assert sum(1 for c in ids if c.startswith(TRAIN_PREFIX)) == SMALL.train_clusters
    assert sum(1 for c in ids if c.startswith(TEST_PREFIX)) == SMALL.test_clusters
    assert sum(1 for c in ids if c.startswith(DEV_PREFIX)) == SMALL.dev_clusters
    # triplets exist for the training split only
    assert len(small_dataset.triplets) == SMALL.train_clusters
    assert all(t.query_id.startswith(TRAIN_PREFIX) for t in small_dataset.triplets)


def test_hard_negative_count(small_dataset):
    for t in small_dataset.triplets:
        assert len(t.negative_doc_ids) == SMALL.hard_negatives
        assert t.positive_doc_id not in t.negative_doc_ids


def test_generation_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_dataset(generate(SMALL), a)
    write_dataset(generate(SMALL), b)
    for name in ("corpus.jsonl", "queries.jsonl", "qrels.txt", "triplets.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_different_seed_differs():
    other = generate(GeneratorConfig(**{**SMALL.__dict__, "seed": 99}))
    base = generate(SMALL)
    assert any(base.corpus[d].text != other.corpus[d].text for d in base.corpus)


def test_verify_fresh_dataset_clean(small_dataset):
    report = verify_dataset(small_dataset)
    assert report.ok
    assert report.violations == []
    assert 0.0 <= report.stats["canonical_variant_token_overlap_mean"] <= 1.0


def test_verify_detects_broken_qrels(small_dataset):
    broken = generate(SMALL)
    victim = next(iter(broken.clusters.values())).canonical_query_id
    del broken.qrels.grades[victim]
    report = verify_dataset(broken)
    assert len(report.violations) == 1
    assert victim in report.violations[0]


def test_disjoint_form_mode_zero_overlap():
    cfg = GeneratorConfig(**{**SMALL.__dict__, "disjoint_variant_forms": True})
    ds = generate(cfg)
    for cluster in ds.clusters.values():
        canon = set(tokenize(ds.queries[cluster.canonical_query_id].text))
        for vid in cluster.variant_query_ids:
            assert not (canon & set(tokenize(ds.queries[vid].text)))
    report = verify_dataset(ds)
    assert report.stats["canonical_variant_token_overlap_mean"] == 0.0


def test_default_mode_partial_overlap(small_dataset):
    report = verify_dataset(small_dataset)
    assert report.stats["canonical_variant_token_overlap_mean"] > 0.0


def test_relevance_signal_oracle_default_scale():
    # at the default corpus density the concept-overlap oracle must place the
    # target in its top-5 almost always, or the retrieval task is unlearnable
    dataset, meta = generate_with_meta(GeneratorConfig())
    doc_concepts = meta["doc_concepts"]
    hits = 0
    for cm in meta["cluster_meta"].values():
        qset = set(cm["query_concepts"])
        ranked = sorted(dataset.corpus,
                        key=lambda d: (-len(qset & doc_concepts[d]), d))
        hits += cm["target"] in ranked[:5]
    assert hits / len(meta["cluster_meta"]) >= 0.95


def test_variation_signal_under_random_encoder(small_dataset):
    params = init_params(1024, 64, seed=5)
    cos = []
    for cluster in list(small_dataset.clusters.values())[:20]:
        texts = [small_dataset.queries[cluster.canonical_query_id].text]
        texts += [small_dataset.queries[v].text for v in cluster.variant_query_ids]
        emb = encode(texts, params).values
        cos.extend((emb[0] @ emb[1:].T).tolist())
    assert float(np.mean(cos)) < 0.9


def test_qrels_mark_target_relevant():
    dataset, meta = generate_with_meta(SMALL)
    for cid, cm in meta["cluster_meta"].items():
        canon = dataset.clusters[cid].canonical_query_id
        assert dataset.qrels.grade(canon, cm["target"]) == 1


def test_too_many_clusters_raises():
    cfg = GeneratorConfig(seed=0, concepts=20, docs=10, train_clusters=30,
                          test_clusters=10, concepts_per_doc=5)
    with pytest.raises(GenerationError):
        generate(cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(surface_forms_per_concept=1)
    with pytest.raises(ValueError):
        GeneratorConfig(concepts=4, concepts_per_doc=8)
