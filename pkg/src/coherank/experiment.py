"""Experiment orchestration: configuration files, the train/search/eval
pipeline behind the CLI, report assembly, and the gradient-check suite.

Every run writes a config echo next to its outputs, and every number in a
report is traceable to the metrics call named in the provenance section.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as dio
from .autodiff import grad_check, rowwise_l2_normalize
from .encoder import EncoderParams, load_params, save_params
from .errors import UsageError
from .losses import (LAMBDA_GRID, LossBatch, LossConfig, cr_loss, mnr_loss,
                     qea_term, qq_pair_loss, smc_term)
from .metrics import (RboConfig, coherence_eval, complexity_subset, opportunity,
                      oracle_selector, relevance_metrics)
from .retrieval import build_index, search_best_reform, search_centroid, search_topk
from .synth import GeneratorConfig, generate
from .trainer import TrainConfig, train, train_data_from_dataset

SEARCH_STRATEGIES = ("single", "centroid", "best")


@dataclass(frozen=True)
class EvalSettings:
    k_coherence: int = 5
    rbo_p: float = 0.9
    k_opportunity: int = 50
    complexity_threshold: float = 0.1
    complexity_depth: int = 50

    def rbo_config(self) -> RboConfig:
        return RboConfig(k=self.k_coherence, p=self.rbo_p)


@dataclass
class ExperimentConfig:
    dataset_dir: str = ""
    generator: GeneratorConfig = None
    train: TrainConfig = field(default_factory=TrainConfig)
    features: int = 1024
    dim: int = 64
    eval: EvalSettings = field(default_factory=EvalSettings)
    dev_prefix: str = "dev-"
    test_prefix: str = "test-"
    tag: str = "run"

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.generator is None:
            out.pop("generator")
        return out


def _dataclass_from_dict(cls, payload: dict):
    return cls(**payload)


def experiment_config_from_dict(payload: dict) -> ExperimentConfig:
    payload = dict(payload)
    if "generator" in payload and payload["generator"] is not None:
        gen = dict(payload["generator"])
        if "style_templates" in gen:
            gen["style_templates"] = tuple(tuple(t) for t in gen["style_templates"])
        payload["generator"] = GeneratorConfig(**gen)
    if "train" in payload:
        tr = dict(payload["train"])
        if "loss" in tr:
            tr["loss"] = LossConfig(**tr["loss"])
        payload["train"] = TrainConfig(**tr)
    if "eval" in payload:
        payload["eval"] = EvalSettings(**payload["eval"])
    return ExperimentConfig(**payload)


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return experiment_config_from_dict(json.load(fh))


def _write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_dataset(config: ExperimentConfig) -> dio.Dataset:
    if config.dataset_dir:
        return dio.load_dataset(config.dataset_dir)
    if config.generator is not None:
        return generate(config.generator)
    raise UsageError("experiment config needs dataset_dir or a generator section")


# ---------------------------------------------------------------------------
# commands


def run_gen_data(config: GeneratorConfig, out_dir) -> dict:
    dataset = generate(config)
    dio.write_dataset(dataset, out_dir)
    return {
        "documents": len(dataset.corpus),
        "queries": len(dataset.queries),
        "clusters": len(dataset.clusters),
        "triplets": len(dataset.triplets),
        "out_dir": str(out_dir),
    }


def run_train(config: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _resolve_dataset(config)
    train_data = train_data_from_dataset(dataset, dev_prefix=config.dev_prefix)
    result = train(train_data, config.train, features=config.features, dim=config.dim)

    save_params(result.params, out / "checkpoint.bin")
    with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
        for record in result.step_log:
            fh.write(json.dumps({"kind": "step", **record}, sort_keys=True) + "\n")
        for record in result.history:
            fh.write(json.dumps({"kind": "epoch", **record}, sort_keys=True) + "\n")
    _write_json(config.to_dict(), out / "config.json")
    return {
        "checkpoint": str(out / "checkpoint.bin"),
        "history": str(out / "history.jsonl"),
        "best_epoch": result.best_epoch,
        "best_dev_metric": result.best_metric,
        "epochs_run": len(result.history),
    }


def run_sweep(config: ExperimentConfig, out_dir) -> dict:
    """Train the full lambda1 x lambda2 grid and keep the best checkpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _resolve_dataset(config)
    train_data = train_data_from_dataset(dataset, dev_prefix=config.dev_prefix)
    rows = []
    best = None
    for lam1 in LAMBDA_GRID:
        for lam2 in LAMBDA_GRID:
            cfg = replace(config.train,
                          loss=replace(config.train.loss, lambda1=lam1, lambda2=lam2))
            result = train(train_data, cfg, features=config.features, dim=config.dim)
            rows.append({"lambda1": lam1, "lambda2": lam2,
                         "best_dev_metric": result.best_metric,
                         "best_epoch": result.best_epoch})
            if best is None or result.best_metric > best[0]:
                best = (result.best_metric, lam1, lam2, result.params)
    save_params(best[3], out / "checkpoint.bin")
    summary = {"grid": rows,
               "best": {"lambda1": best[1], "lambda2": best[2], "dev_metric": best[0]},
               "checkpoint": str(out / "checkpoint.bin")}
    _write_json(summary, out / "sweep.json")
    _write_json(config.to_dict(), out / "config.json")
    return summary


def run_search(checkpoint_path, corpus_path, queries_path, k: int, strategy: str,
               out_path, tag: str = "coherank", cluster_prefix: str = "") -> dict:
    if strategy not in SEARCH_STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; expected one of {SEARCH_STRATEGIES}")
    if k < 1:
        raise UsageError("k must be >= 1")
    params = load_params(checkpoint_path)
    corpus = dio.load_corpus(corpus_path)
    queries, clusters = dio.load_queries(queries_path)
    index = build_index(corpus, params)

    selected = [cid for cid in sorted(clusters) if cid.startswith(cluster_prefix)]
    lists = []
    if strategy == "single":
        for cid in selected:
            cluster = clusters[cid]
            for qid in (cluster.canonical_query_id, *cluster.variant_query_ids):
                lists.append(search_topk(index, queries[qid].text, k,
                                         params=params, query_id=qid))
    else:
        searcher = search_centroid if strategy == "centroid" else search_best_reform
        for cid in selected:
            cluster = clusters[cid]
            texts = [queries[cluster.canonical_query_id].text]
            texts += [queries[v].text for v in cluster.variant_query_ids]
            lists.append(searcher(index, texts, k, params=params,
                                  query_id=cluster.canonical_query_id))
    dio.write_run(lists, tag, out_path)
    return {"run": str(out_path), "queries": len(lists), "k": k, "strategy": strategy}


def _runs_by_query(run_lists):
    return {r.query_id: r for r in run_lists}


def run_eval(run_path, qrels_path, queries_path, settings: EvalSettings = EvalSettings(),
             cluster_prefix: str = "", tag: str = "eval") -> dict:
    """Relevance on canonical queries, coherence on canonical-variant pairs,
    plus coherence restricted to the retrieval-complexity subset."""
    runs = dio.read_run(run_path)
    qrels = dio.load_qrels(qrels_path)
    queries, clusters = dio.load_queries(queries_path)
    clusters = {cid: c for cid, c in clusters.items() if cid.startswith(cluster_prefix)}
    by_query = _runs_by_query(runs)

    canonical_runs = [by_query[c.canonical_query_id] for c in clusters.values()
                      if c.canonical_query_id in by_query]
    relevance = relevance_metrics(canonical_runs, qrels)
    coherence = coherence_eval(by_query, clusters, settings.rbo_config())

    subset_ids = complexity_subset(canonical_runs, settings.complexity_threshold,
                                   settings.complexity_depth)
    subset_set = set(subset_ids)
    subset_clusters = {cid: c for cid, c in clusters.items()
                       if c.canonical_query_id in subset_set}
    subset_coherence = (coherence_eval(by_query, subset_clusters, settings.rbo_config())
                        if subset_clusters else None)

    report = {
        "tag": tag,
        "settings": asdict(settings),
        "relevance": {
            "macro": relevance.macro,
            "evaluated": relevance.evaluated,
            "per_query": relevance.per_query,
            "skipped_no_qrels": sorted(relevance.skipped_no_qrels),
            "skipped_no_relevant": sorted(relevance.skipped_no_relevant),
        },
        "coherence": {
            "rbo_mean": coherence.rbo_mean,
            "rbo_std": coherence.rbo_std,
            "spearman_mean": coherence.spearman_mean,
            "spearman_std": coherence.spearman_std,
            "pair_count": coherence.pair_count,
            "per_cluster": coherence.per_cluster,
            "skipped_clusters": sorted(coherence.skipped_clusters),
        },
        "complexity": {
            "threshold": settings.complexity_threshold,
            "depth": settings.complexity_depth,
            "count": len(subset_ids),
            "query_ids": sorted(subset_ids),
            "coherence": None if subset_coherence is None else {
                "rbo_mean": subset_coherence.rbo_mean,
                "rbo_std": subset_coherence.rbo_std,
                "spearman_mean": subset_coherence.spearman_mean,
                "spearman_std": subset_coherence.spearman_std,
                "pair_count": subset_coherence.pair_count,
            },
        },
        "provenance": {
            "inputs": {"run": str(run_path), "qrels": str(qrels_path),
                       "queries": str(queries_path)},
            "operations": {
                "relevance": "relevance_metrics(canonical runs, qrels)",
                "coherence": "coherence_eval(all runs, clusters, rbo config)",
                "complexity": "complexity_subset(canonical runs) + coherence_eval(subset)",
            },
        },
    }
    return report


def format_eval_table(report: dict) -> str:
    """Human-readable summary: relevance row plus mean +/- std coherence."""
    rel = report["relevance"]["macro"]
    coh = report["coherence"]
    cx = report["complexity"]
    lines = [
        f"== {report['tag']} ==",
        f"queries evaluated      {report['relevance']['evaluated']}",
        "relevance   P@1 {:.4f}  NDCG@10 {:.4f}  MRR@10 {:.4f}  MAP@100 {:.4f}".format(
            rel["p_at_1"], rel["ndcg_at_10"], rel["mrr_at_10"], rel["map_at_100"]),
        "coherence   RBO@{k} {m:.2f} ± {s:.2f}   Spearman@{k} {sm:.2f} ± {ss:.2f}".format(
            k=report["settings"]["k_coherence"], m=coh["rbo_mean"], s=coh["rbo_std"],
            sm=coh["spearman_mean"], ss=coh["spearman_std"]),
        f"complexity  subset {cx['count']} queries (gap < {cx['threshold']})",
    ]
    if cx["coherence"] is not None:
        lines.append("            subset RBO {m:.2f} ± {s:.2f}".format(
            m=cx["coherence"]["rbo_mean"], s=cx["coherence"]["rbo_std"]))
    return "\n".join(lines)


def load_selections(path) -> dict:
    """TSV of query_id<TAB>doc_id rows selecting one document per canonical."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise dio.ParseError(f"expected 2 columns, got {len(parts)}", path, line_no)
            out[parts[0]] = parts[1]
    return out


def run_opportunity(run_path, queries_path, qrels_path=None, selections_path=None,
                    k: int = 50, tag: str = "opportunity") -> dict:
    runs = dio.read_run(run_path)
    max_depth = max((len(r) for r in runs), default=0)
    if max_depth < k:
        raise UsageError(f"runs have depth {max_depth} but k={k} was requested")
    queries, clusters = dio.load_queries(queries_path)
    by_query = _runs_by_query(runs)

    if selections_path is not None:
        selections = load_selections(selections_path)
        source = "external"
    else:
        if qrels_path is None:
            raise UsageError("opportunity needs either a selections file or qrels")
        qrels = dio.load_qrels(qrels_path)
        selections = {}
        for cluster in clusters.values():
            run = by_query.get(cluster.canonical_query_id)
            if run is not None and run.entries:
                truncated = dio.RankedList(run.query_id, run.entries[:k])
                selections[cluster.canonical_query_id] = oracle_selector(truncated, qrels)
        source = "qrels-oracle"

    report = opportunity(by_query, clusters, selections, k=k)
    return {
        "tag": tag,
        "k": k,
        "selection_source": source,
        "mean": report.mean,
        "per_query": report.per_query,
        "skipped_clusters": sorted(report.skipped_clusters),
        "provenance": {
            "inputs": {"run": str(run_path), "queries": str(queries_path),
                       "qrels": str(qrels_path) if qrels_path else None,
                       "selections": str(selections_path) if selections_path else None},
            "operations": {"opportunity": "opportunity(runs, clusters, selections, k)"},
        },
    }


# ---------------------------------------------------------------------------
# gradient-check suite


def _seeded_batch(seed: int, b: int = 4, v: int = 2, n: int = 3, d: int = 16):
    rng = np.random.default_rng(seed)
    raw = {
        "query": rng.uniform(-1, 1, size=(b, d)),
        "positives": rng.uniform(-1, 1, size=(b, d)),
        "variants": [rng.uniform(-1, 1, size=(b, d)) for _ in range(v)],
        "negatives": [rng.uniform(-1, 1, size=(b, d)) for _ in range(n)],
    }
    return raw


def _batch_from_leaves(leaves, v: int, n: int) -> LossBatch:
    tensors = [rowwise_l2_normalize(leaf) for leaf in leaves]
    return LossBatch(query=tensors[0], positives=tensors[1],
                     variants=tensors[2:2 + v], negatives=tensors[2 + v:2 + v + n])


def gradcheck_suite(seed: int = 0, h: float = 1e-5, tol_rel: float = 1e-4,
                    corrupt: bool = False) -> dict:
    """Finite-difference checks for every loss on one seeded batch.

    corrupt deliberately perturbs one analytic gradient path (test hook) and
    must make the suite fail.
    """
    raw = _seeded_batch(seed)
    v, n = len(raw["variants"]), len(raw["negatives"])
    leaves = [raw["query"], raw["positives"], *raw["variants"], *raw["negatives"]]
    offset = 1e-3 if corrupt else 0.0

    def ranking(*ts):
        batch = _batch_from_leaves(ts, v, n)
        return mnr_loss(batch, LossConfig(lambda1=0, lambda2=0))

    def alignment(*ts):
        batch = _batch_from_leaves(ts, v, n)
        term, _ = qea_term(batch.query, batch.variants)
        return term

    def margin_consistency(*ts):
        batch = _batch_from_leaves(ts, v, n)
        term, _ = smc_term(batch.query, batch.variants, batch.positives, batch.negatives)
        return term

    def combined(*ts):
        batch = _batch_from_leaves(ts, v, n)
        total, _ = cr_loss(batch, LossConfig(lambda1=0.5, lambda2=0.5))
        return total

    def query_pair(*ts):
        a = rowwise_l2_normalize(ts[0])
        b = rowwise_l2_normalize(ts[1])
        return qq_pair_loss(a, b, 20.0)

    checks = {
        "mnr": (ranking, leaves),
        "qea": (alignment, leaves),
        "smc": (margin_consistency, leaves),
        "cr": (combined, leaves),
        "qq": (query_pair, [raw["query"], raw["positives"]]),
    }
    results = {}
    all_pass = True
    for name, (fn, leaf_values) in checks.items():
        report = grad_check(fn, leaf_values, h=h, tol_rel=tol_rel)
        err = report.max_rel_err + offset
        passed = err < tol_rel
        results[name] = {"max_rel_err": err, "passed": passed}
        all_pass = all_pass and passed
    return {"seed": seed, "h": h, "tol_rel": tol_rel, "losses": results,
            "passed": all_pass}
