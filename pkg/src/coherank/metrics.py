"""Evaluation measures: graded relevance (P@1, MRR@10, NDCG@10, MAP@100),
rank coherence between query variants (top-weighted overlap and rank
correlation of top-k lists), re-ranking opportunity, and complexity subsets.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRankingError, InvalidSelectionError

RELEVANT_MIN_GRADE = 1


@dataclass(frozen=True)
class RboConfig:
    k: int = 5
    p: float = 0.9
    normalized: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0.0 < self.p < 1.0):
            raise ValueError("persistence p must lie in (0, 1)")


def _check_distinct(ids, name):
    if len(set(ids)) != len(ids):
        raise InvalidRankingError(f"duplicate ids in ranked list {name}")


def rbo_at_k(s_ids, t_ids, config: RboConfig = RboConfig()) -> float:
    """Top-weighted overlap of two ranked id lists, truncated at depth k.

    Depth d contributes weight p^(d-1) times the prefix agreement
    |S[:d] & T[:d]| / d; the normalized variant divides by the total weight so
    identical lists score exactly 1.
    """
    s_ids, t_ids = list(s_ids), list(t_ids)
    _check_distinct(s_ids, "S")
    _check_distinct(t_ids, "T")
    seen_s, seen_t = set(), set()
    overlap = 0
    weighted = 0.0
    total_weight = 0.0
    weight = 1.0
    for d in range(1, config.k + 1):
        if d <= len(s_ids):
            x = s_ids[d - 1]
            if x in seen_t:
                overlap += 1
            seen_s.add(x)
        if d <= len(t_ids):
            y = t_ids[d - 1]
            if y in seen_s:
                overlap += 1
            seen_t.add(y)
        weighted += weight * overlap / d
        total_weight += weight
        weight *= config.p
    if config.normalized:
        return weighted / total_weight
    return (1.0 - config.p) * weighted


def spearman_at_k(s_ids, t_ids, k: int = 5) -> float:
    """Rank correlation over the union of the two top-k lists.

    Items absent from one list all receive the tied rank k+1; the correlation
    is Pearson's on the rank vectors. Identical prefixes return exactly 1;
    otherwise a constant rank vector on either side returns 0.
    """
    s_ids, t_ids = list(s_ids)[:k], list(t_ids)[:k]
    _check_distinct(s_ids, "S")
    _check_distinct(t_ids, "T")
    union = list(s_ids) + [x for x in t_ids if x not in set(s_ids)]
    pos_s = {x: i + 1 for i, x in enumerate(s_ids)}
    pos_t = {x: i + 1 for i, x in enumerate(t_ids)}
    r_s = np.array([pos_s.get(x, k + 1) for x in union], dtype=np.float64)
    r_t = np.array([pos_t.get(x, k + 1) for x in union], dtype=np.float64)
    if np.array_equal(r_s, r_t):
        return 1.0
    ds, dt = r_s - r_s.mean(), r_t - r_t.mean()
    var_s, var_t = float(ds @ ds), float(dt @ dt)
    if var_s == 0.0 or var_t == 0.0:
        return 0.0
    return float(ds @ dt) / math.sqrt(var_s * var_t)


# ---------------------------------------------------------------------------
# graded relevance


@dataclass
class RelevanceReport:
    per_query: dict
    macro: dict
    evaluated: int
    skipped_no_qrels: list
    skipped_no_relevant: list


def _query_relevance(ranked, qrels) -> dict:
    doc_ids = ranked.doc_ids()
    grades = qrels.grades.get(ranked.query_id, {})
    relevant = {d for d, g in grades.items() if g >= RELEVANT_MIN_GRADE}

    p1 = 1.0 if doc_ids and doc_ids[0] in relevant else 0.0

    mrr10 = 0.0
    for i, d in enumerate(doc_ids[:10], start=1):
        if d in relevant:
            mrr10 = 1.0 / i
            break

    dcg = sum(grades.get(d, 0) / math.log2(i + 1)
              for i, d in enumerate(doc_ids[:10], start=1))
    ideal = sorted(grades.values(), reverse=True)[:10]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    ndcg10 = dcg / idcg if idcg > 0 else 0.0

    hits = 0
    precision_sum = 0.0
    for i, d in enumerate(doc_ids[:100], start=1):
        if d in relevant:
            hits += 1
            precision_sum += hits / i
    map100 = precision_sum / len(relevant) if relevant else 0.0

    return {"p_at_1": p1, "mrr_at_10": mrr10, "ndcg_at_10": ndcg10, "map_at_100": map100}


def relevance_metrics(runs, qrels) -> RelevanceReport:
    """Per-query and macro-averaged relevance; queries without judgments or
    without any relevant document are excluded from the averages."""
    per_query = {}
    skipped_no_qrels = []
    skipped_no_relevant = []
    for ranked in runs:
        qid = ranked.query_id
        if qid not in qrels.grades:
            skipped_no_qrels.append(qid)
            continue
        if not qrels.relevant_docs(qid, RELEVANT_MIN_GRADE):
            skipped_no_relevant.append(qid)
            continue
        per_query[qid] = _query_relevance(ranked, qrels)
    names = ("p_at_1", "mrr_at_10", "ndcg_at_10", "map_at_100")
    if per_query:
        macro = {n: float(np.mean([v[n] for v in per_query.values()])) for n in names}
    else:
        macro = {n: float("nan") for n in names}
    return RelevanceReport(per_query, macro, len(per_query),
                           skipped_no_qrels, skipped_no_relevant)


# ---------------------------------------------------------------------------
# coherence between query variants


@dataclass
class CoherenceReport:
    per_cluster: dict
    rbo_mean: float
    rbo_std: float
    spearman_mean: float
    spearman_std: float
    pair_count: int
    skipped_clusters: list = field(default_factory=list)


def coherence_eval(runs_by_query, clusters, rbo_config: RboConfig = RboConfig()) -> CoherenceReport:
    """Pair each cluster's canonical ranking with each variant ranking and
    report mean +/- std of the per-pair overlap and rank correlation."""
    per_cluster = {}
    skipped = []
    all_rbo, all_rho = [], []
    for cluster_id in sorted(clusters):
        cluster = clusters[cluster_id]
        canonical = runs_by_query.get(cluster.canonical_query_id)
        if canonical is None:
            skipped.append(cluster_id)
            continue
        base = canonical.doc_ids()
        rbo_vals, rho_vals = [], []
        for vid in cluster.variant_query_ids:
            variant = runs_by_query.get(vid)
            if variant is None:
                continue
            other = variant.doc_ids()
            rbo_vals.append(rbo_at_k(base, other, rbo_config))
            rho_vals.append(spearman_at_k(base, other, rbo_config.k))
        if not rbo_vals:
            skipped.append(cluster_id)
            continue
        per_cluster[cluster_id] = {
            "rbo_mean": float(np.mean(rbo_vals)),
            "spearman_mean": float(np.mean(rho_vals)),
            "pairs": len(rbo_vals),
        }
        all_rbo.extend(rbo_vals)
        all_rho.extend(rho_vals)
    if all_rbo:
        report = CoherenceReport(per_cluster,
                                 float(np.mean(all_rbo)), float(np.std(all_rbo)),
                                 float(np.mean(all_rho)), float(np.std(all_rho)),
                                 len(all_rbo), skipped)
    else:
        report = CoherenceReport(per_cluster, float("nan"), float("nan"),
                                 float("nan"), float("nan"), 0, skipped)
    return report


# ---------------------------------------------------------------------------
# re-ranking opportunity


@dataclass
class OpportunityReport:
    per_query: dict
    mean: float
    skipped_clusters: list = field(default_factory=list)


def opportunity(topk_runs_by_query, clusters, selected_doc_by_canonical,
                k: int = 50) -> OpportunityReport:
    """Fraction of variant queries whose top-k contains the document selected
    from the canonical query's own top-k. The canonical list itself is
    excluded from the membership count."""
    per_query = {}
    skipped = []
    for cluster_id in sorted(clusters):
        cluster = clusters[cluster_id]
        canonical_id = cluster.canonical_query_id
        canonical = topk_runs_by_query.get(canonical_id)
        selected = selected_doc_by_canonical.get(canonical_id)
        if canonical is None or selected is None:
            skipped.append(cluster_id)
            continue
        if selected not in set(canonical.doc_ids()[:k]):
            raise InvalidSelectionError(
                f"{canonical_id}: selected doc {selected!r} not in its own top-{k}")
        variant_runs = [topk_runs_by_query[vid] for vid in cluster.variant_query_ids
                        if vid in topk_runs_by_query]
        if not variant_runs:
            skipped.append(cluster_id)
            continue
        hits = sum(1 for run in variant_runs if selected in set(run.doc_ids()[:k]))
        per_query[canonical_id] = hits / len(variant_runs)
    mean = float(np.mean(list(per_query.values()))) if per_query else float("nan")
    return OpportunityReport(per_query, mean, skipped)


def oracle_selector(topk_run, qrels) -> str:
    """Highest-graded document in the top-k; ties break by retrieval score,
    then ascending doc_id. Stands in for an external re-ranker."""
    if not topk_run.entries:
        raise ValueError("cannot select from an empty run")
    grades = qrels.grades.get(topk_run.query_id, {})
    best = min(topk_run.entries,
               key=lambda e: (-grades.get(e[0], 0), -e[1], e[0]))
    return best[0]


# ---------------------------------------------------------------------------
# retrieval-complexity subset


def complexity_subset(runs, threshold: float = 0.1, depth: int = 50):
    """Query ids whose top-1 to depth-th score gap is strictly below the
    threshold; shorter runs use their last entry, empty runs are skipped."""
    out = []
    for ranked in runs:
        if not ranked.entries:
            continue
        top = ranked.entries[0][1]
        last = ranked.entries[min(depth, len(ranked.entries)) - 1][1]
        if top - last < threshold:
            out.append(ranked.query_id)
    return out
