"""Deterministic synthetic benchmark generator.

Builds a concept vocabulary in which every concept has several lexically
disjoint surface forms. Documents are bags of surface forms of sampled
concepts; a cluster's canonical query reuses the target document's own form
choices, while its variants swap in alternate forms (zero token overlap with
the canonical) under different style templates. This makes retrieval
learnable from token overlap and makes lexical variation genuinely perturb a
hashed encoder, so coherence training is non-vacuous.
"""

import string
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Document, Qrels, Query, QueryCluster, TrainingExample
from .encoder import tokenize
from .errors import GenerationError

TRAIN_PREFIX = "train-"
DEV_PREFIX = "dev-"
TEST_PREFIX = "test-"

DEV_FRACTION = 0.1
NEAR_DUP_CONCEPT_SHARE = 0.75
CONCEPT_ZIPF_EXPONENT = 0.9
QUERY_POP_BIAS = 1.0
QUERY_RARE_BIAS = 2.0
COMPLEX_CLUSTER_FRACTION = 0.3
VARIANT_KEEP_FORM_PROB = 0.35
_WORD_LEN = 8  # longer than any template token, so templates never collide

# The first template is the canonical style; its words double as document
# boilerplate, giving every query-document pair a shared component so that
# score profiles are realistically compressed. Variant templates share no
# word with the canonical one, keeping canonical/variant token overlap at
# exactly zero.
DEFAULT_TEMPLATES = (
    ("hello there friends my name happens to be alice today and i am now carefully "
     "searching around for one single document or web page that could hopefully "
     "tell us almost all of the truly critical plus missing details about", ""),
    ("what is", ""),
    ("define quickly", ""),
    ("can you explain", ""),
    ("need facts on", ""),
    ("show summary regarding", "please"),
)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    concepts: int = 300
    surface_forms_per_concept: int = 3
    docs: int = 1000
    concepts_per_doc: int = 8
    train_clusters: int = 300
    test_clusters: int = 100
    variants_per_query: int = 4
    hard_negatives: int = 5
    style_templates: tuple = DEFAULT_TEMPLATES
    # disjoint-form mode: variants never reuse the canonical's surface forms,
    # making the canonical/variant token intersection exactly empty. Off by
    # default: natural paraphrases keep some wording, and an untrained model
    # then has non-zero baseline coherence.
    disjoint_variant_forms: bool = False

    def __post_init__(self):
        if self.surface_forms_per_concept < 2:
            raise ValueError("surface_forms_per_concept must be >= 2 (variation must exist)")
        if self.concepts_per_doc > self.concepts:
            raise ValueError("concepts_per_doc cannot exceed the concept count")
        if self.variants_per_query >= 1 and len(self.style_templates) < 2:
            raise ValueError("need at least two style templates to vary variants")

    @property
    def dev_clusters(self) -> int:
        return max(1, int(round(DEV_FRACTION * self.train_clusters)))

    @property
    def query_concepts(self) -> int:
        return max(2, self.concepts_per_doc // 2)


@dataclass
class VerifyReport:
    violations: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def _make_words(rng, count):
    letters = np.array(list(string.ascii_lowercase))
    seen = set()
    words = []
    while len(words) < count:
        word = "".join(rng.choice(letters, size=_WORD_LEN))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def generate_with_meta(config: GeneratorConfig):
    """Generate a dataset plus construction metadata (concept assignments),
    used by verification oracles."""
    rng = np.random.default_rng(config.seed)

    # vocabulary: concept c, form f -> unique word
    words = _make_words(rng, config.concepts * config.surface_forms_per_concept)
    forms = np.array(words).reshape(config.concepts, config.surface_forms_per_concept)

    # concept popularity is Zipf-skewed so that some queries face many
    # near-tied documents (the retrieval-complexity regime)
    popularity = 1.0 / np.arange(1, config.concepts + 1) ** CONCEPT_ZIPF_EXPONENT
    popularity /= popularity.sum()

    # documents: concept surface forms plus the canonical template's words as
    # boilerplate (every query-document pair then shares a common component)
    boilerplate = [w for part in config.style_templates[0] for w in part.split()]
    corpus = {}
    doc_concepts = {}
    doc_form_choice = {}
    for i in range(config.docs):
        doc_id = f"d{i:05d}"
        concepts = np.sort(rng.choice(config.concepts, size=config.concepts_per_doc,
                                      replace=False, p=popularity))
        picks = rng.integers(0, config.surface_forms_per_concept,
                             size=config.concepts_per_doc)
        tokens = [forms[c, f] for c, f in zip(concepts, picks)] + boilerplate
        order = rng.permutation(len(tokens))
        corpus[doc_id] = Document(doc_id, " ".join(tokens[j] for j in order))
        doc_concepts[doc_id] = frozenset(int(c) for c in concepts)
        doc_form_choice[doc_id] = {int(c): int(f) for c, f in zip(concepts, picks)}

    concept_to_docs = {}
    for doc_id, cset in doc_concepts.items():
        for c in cset:
            concept_to_docs.setdefault(c, []).append(doc_id)

    # cluster roster: train, dev (held out for early stopping), test
    cluster_ids = (
        [f"{TRAIN_PREFIX}{i:04d}" for i in range(config.train_clusters)]
        + [f"{DEV_PREFIX}{i:04d}" for i in range(config.dev_clusters)]
        + [f"{TEST_PREFIX}{i:04d}" for i in range(config.test_clusters)]
    )
    if len(cluster_ids) > config.docs:
        raise GenerationError(
            f"{len(cluster_ids)} clusters need distinct target docs but only "
            f"{config.docs} documents exist")
    doc_id_list = sorted(corpus)
    targets = [doc_id_list[i] for i in rng.permutation(config.docs)[:len(cluster_ids)]]

    queries = {}
    clusters = {}
    qrels = Qrels()
    triplets = []
    cluster_meta = {}

    sorted_doc_ids = sorted(corpus)
    for cluster_id, target in zip(cluster_ids, targets):
        target_concepts = sorted(doc_concepts[target])
        # most queries ask about the target's popular concepts; a slice asks
        # about its rarest ones, whose weak signal leaves many near-tied
        # documents (the retrieval-complexity regime)
        if rng.random() < COMPLEX_CLUSTER_FRACTION:
            bias = -QUERY_RARE_BIAS
        else:
            bias = QUERY_POP_BIAS
        weights = popularity[target_concepts] ** bias
        weights = weights / weights.sum()
        picked = rng.choice(len(target_concepts), size=config.query_concepts,
                            replace=False, p=weights)
        q_concepts = [target_concepts[j] for j in np.sort(picked)]

        # canonical query samples its own surface form per concept, so the
        # lexical gap between query and document has to be learned
        canonical_forms = {c: int(rng.integers(0, config.surface_forms_per_concept))
                           for c in q_concepts}
        canonical_tokens = [forms[c, canonical_forms[c]] for c in q_concepts]
        canonical_id = f"{cluster_id}-q0"
        canonical_text = _apply_template(config.style_templates[0],
                                         _shuffled(rng, canonical_tokens))
        queries[canonical_id] = Query(canonical_id, canonical_text, cluster_id, True)

        # variants mostly swap in alternate surface forms; unless disjoint-form
        # mode is on, each concept keeps the canonical wording now and then
        variant_ids = []
        n_alt_templates = len(config.style_templates) - 1
        for v in range(1, config.variants_per_query + 1):
            v_tokens = []
            for c in q_concepts:
                keep = (not config.disjoint_variant_forms
                        and rng.random() < VARIANT_KEEP_FORM_PROB)
                if keep:
                    v_tokens.append(forms[c, canonical_forms[c]])
                    continue
                banned = canonical_forms[c]
                options = [f for f in range(config.surface_forms_per_concept) if f != banned]
                v_tokens.append(forms[c, options[rng.integers(0, len(options))]])
            template = config.style_templates[1 + (v - 1) % n_alt_templates]
            vid = f"{cluster_id}-q{v}"
            queries[vid] = Query(vid, _apply_template(template, _shuffled(rng, v_tokens)),
                                 cluster_id, False)
            variant_ids.append(vid)
        clusters[cluster_id] = QueryCluster(cluster_id, canonical_id, tuple(variant_ids))

        # relevance: the target plus near-duplicates sharing most of its concepts
        need = int(np.ceil(NEAR_DUP_CONCEPT_SHARE * len(doc_concepts[target])))
        share_counts = {}
        for c in doc_concepts[target]:
            for doc_id in concept_to_docs[c]:
                share_counts[doc_id] = share_counts.get(doc_id, 0) + 1
        relevant = {d for d, n in share_counts.items() if n >= need}
        relevant.add(target)
        for doc_id in sorted(relevant):
            qrels.set(canonical_id, doc_id, 1)

        cluster_meta[cluster_id] = {
            "target": target,
            "query_concepts": list(q_concepts),
            "relevant": sorted(relevant),
        }

        if cluster_id.startswith(TEST_PREFIX) or cluster_id.startswith(DEV_PREFIX):
            continue

        # hard negatives: highest query-concept overlap among non-relevant docs
        q_set = set(q_concepts)
        overlap = {}
        for c in q_concepts:
            for doc_id in concept_to_docs[c]:
                overlap[doc_id] = overlap.get(doc_id, 0) + 1
        candidates = [d for d in overlap if d not in relevant]
        candidates.sort(key=lambda d: (-overlap[d], d))
        if len(candidates) < config.hard_negatives:
            extras = [d for d in sorted_doc_ids if d not in relevant and d not in overlap]
            candidates.extend(extras)
        if len(candidates) < config.hard_negatives:
            raise GenerationError(
                f"cluster {cluster_id}: only {len(candidates)} hard-negative candidates")
        negatives = tuple(candidates[:config.hard_negatives])
        triplets.append(TrainingExample(canonical_id, target, negatives, tuple(variant_ids)))

    dataset = Dataset(corpus, queries, clusters, qrels, triplets)
    meta = {"doc_concepts": doc_concepts, "cluster_meta": cluster_meta,
            "forms": forms}
    return dataset, meta


def generate(config: GeneratorConfig) -> Dataset:
    """Deterministic dataset: same config (incl. seed) -> identical output."""
    dataset, _ = generate_with_meta(config)
    return dataset


def _shuffled(rng, tokens):
    order = rng.permutation(len(tokens))
    return [tokens[i] for i in order]


def _apply_template(template, content_tokens):
    prefix, suffix = template
    parts = [p for p in (prefix, " ".join(content_tokens), suffix) if p]
    return " ".join(parts)


# ---------------------------------------------------------------------------
# verification


def verify_dataset(dataset: Dataset) -> VerifyReport:
    """Structural checks plus lexical-divergence statistics; violations are
    collected rather than raised."""
    report = VerifyReport()
    v = report.violations

    # cluster partition: each query in exactly one cluster that lists it
    listed = {}
    for cluster in dataset.clusters.values():
        for qid in (cluster.canonical_query_id, *cluster.variant_query_ids):
            if qid in listed:
                v.append(f"query {qid} listed by clusters {listed[qid]} and {cluster.cluster_id}")
            listed[qid] = cluster.cluster_id
            if qid not in dataset.queries:
                v.append(f"cluster {cluster.cluster_id} references unknown query {qid}")
            elif dataset.queries[qid].cluster_id != cluster.cluster_id:
                v.append(f"query {qid} carries cluster {dataset.queries[qid].cluster_id}, "
                         f"listed by {cluster.cluster_id}")
    for qid in dataset.queries:
        if qid not in listed:
            v.append(f"query {qid} not covered by any cluster")

    # qrels coverage: every canonical query needs at least one relevant doc
    for cluster in dataset.clusters.values():
        if not dataset.qrels.relevant_docs(cluster.canonical_query_id):
            v.append(f"canonical query {cluster.canonical_query_id} has no relevant document")

    # triplets reference valid ids and stay inside their cluster
    for ex in dataset.triplets:
        if ex.query_id not in dataset.queries:
            v.append(f"triplet references unknown query {ex.query_id}")
            continue
        cluster_id = dataset.queries[ex.query_id].cluster_id
        for doc_id in (ex.positive_doc_id, *ex.negative_doc_ids):
            if doc_id not in dataset.corpus:
                v.append(f"triplet {ex.query_id} references unknown doc {doc_id}")
        for vid in ex.variant_query_ids:
            if vid not in dataset.queries or dataset.queries[vid].cluster_id != cluster_id:
                v.append(f"triplet {ex.query_id} variant {vid} outside cluster {cluster_id}")

    # lexical divergence between canonical and variant queries
    overlaps = []
    for cluster in dataset.clusters.values():
        canonical = dataset.queries.get(cluster.canonical_query_id)
        if canonical is None:
            continue
        base = set(tokenize(canonical.text))
        for vid in cluster.variant_query_ids:
            if vid not in dataset.queries:
                continue
            other = set(tokenize(dataset.queries[vid].text))
            union = base | other
            overlaps.append(len(base & other) / len(union) if union else 0.0)
    report.stats["canonical_variant_token_overlap_mean"] = (
        float(np.mean(overlaps)) if overlaps else float("nan"))
    report.stats["clusters"] = len(dataset.clusters)
    report.stats["documents"] = len(dataset.corpus)
    report.stats["queries"] = len(dataset.queries)
    report.stats["triplets"] = len(dataset.triplets)
    return report
