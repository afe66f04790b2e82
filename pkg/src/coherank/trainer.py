"""Optimization loop covering every experiment configuration: plain
fine-tuning, query augmentation, round-robin query-pair multi-tasking, the
coherence-regularized loss, their combination, and single-term ablations.

Training is deterministic: (seed, config, dataset) fully determine the
resulting checkpoint bit for bit.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, tensor
from .data import Dataset
from .encoder import EncoderParams, encode_bags, init_params, text_feature_indices
from .errors import InvalidBatchError, MissingVariantsError, NumericalError
from .losses import LossBatch, LossConfig, cr_loss, qq_pair_loss
from .metrics import relevance_metrics
from .retrieval import index_from_embeddings, search_topk

MODES = ("FT", "AUG", "QQ", "CR", "FULL", "QEA_ONLY", "SMC_ONLY")
_METRIC_DEPTH = {"p_at_1": 10, "mrr_at_10": 10, "ndcg_at_10": 10, "map_at_100": 100}


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "CR"
    loss: LossConfig = field(default_factory=LossConfig)
    lr_peak: float = 0.02
    batch_size: int = 32
    max_epochs: int = 15
    patience: int = 5
    warmup_frac: float = 0.10
    seed: int = 0
    variants_per_anchor: int = 4
    dev_metric: str = "ndcg_at_10"
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.warmup_frac < 1.0):
            raise ValueError("warmup_frac must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if _normalize_metric(self.dev_metric) not in _METRIC_DEPTH:
            raise ValueError(f"unknown dev metric {self.dev_metric!r}")

    def effective_loss(self) -> LossConfig:
        """Loss weights after mode consistency is applied."""
        if self.mode in ("FT", "AUG", "QQ"):
            return replace(self.loss, lambda1=0.0, lambda2=0.0)
        if self.mode == "QEA_ONLY":
            return replace(self.loss, lambda2=0.0)
        if self.mode == "SMC_ONLY":
            return replace(self.loss, lambda1=0.0)
        return self.loss

    def uses_variants(self) -> bool:
        return self.mode in ("QQ", "CR", "FULL", "QEA_ONLY", "SMC_ONLY")


def _normalize_metric(name: str) -> str:
    return name.strip().lower().replace("@", "_at_")


@dataclass
class OptimizerState:
    """Decoupled-weight-decay Adam accumulators."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_shape(cls, shape, weight_decay: float = 0.01) -> "OptimizerState":
        return cls(np.zeros(shape), np.zeros(shape), weight_decay=weight_decay)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState, lr: float):
    """One update, in place: decay is applied to the parameters before the
    bias-corrected moment update."""
    if not np.isfinite(grads).all():
        raise NumericalError(
            f"non-finite gradient at optimizer step {state.step + 1} "
            f"(|grad|_max={np.abs(grads[np.isfinite(grads)]).max(initial=0.0):.3e})")
    if state.weight_decay:
        params -= lr * state.weight_decay * params
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def lr_at_step(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup from 0 to lr_peak, then linear decay to 0."""
    if not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = config.warmup_frac * total_steps
    if warmup_steps > 0 and step <= warmup_steps:
        return config.lr_peak * step / warmup_steps
    if total_steps == warmup_steps:
        return config.lr_peak
    return config.lr_peak * (total_steps - step) / (total_steps - warmup_steps)


# ---------------------------------------------------------------------------
# batching


@dataclass
class BatchItem:
    query_id: str
    query_text: str
    positive_text: str
    negative_texts: list
    candidate_variants: list  # (variant_query_id, text) pool for sampling


@dataclass
class Batch:
    items: list
    variant_texts: list = field(default_factory=list)  # V lists of b texts

    @property
    def size(self) -> int:
        return len(self.items)


@dataclass
class TrainData:
    """Training view of a dataset: triplets plus a held-out dev split whose
    canonical queries drive early stopping."""

    corpus: dict
    queries: dict
    clusters: dict
    qrels: object
    triplets: list
    dev_query_ids: list


def train_data_from_dataset(dataset: Dataset, dev_prefix: str = "dev-") -> TrainData:
    dev_ids = [c.canonical_query_id for cid, c in sorted(dataset.clusters.items())
               if cid.startswith(dev_prefix)]
    return TrainData(dataset.corpus, dataset.queries, dataset.clusters,
                     dataset.qrels, dataset.triplets, dev_ids)


def _expand_examples(data: TrainData, config: TrainConfig):
    """Resolve triplets to text; AUG/FULL additionally promote every variant
    to a standalone anchor over the same positive and negatives."""
    items = []
    for ex in data.triplets:
        if not ex.negative_doc_ids:
            raise InvalidBatchError(f"{ex.query_id}: training needs >= 1 hard negative")
        anchor = data.queries[ex.query_id]
        negatives = [data.corpus[d].text for d in ex.negative_doc_ids]
        positive = data.corpus[ex.positive_doc_id].text
        members = [(ex.query_id, anchor.text)]
        members += [(vid, data.queries[vid].text) for vid in ex.variant_query_ids]
        pool_all = members
        items.append(BatchItem(ex.query_id, anchor.text, positive, negatives,
                               [m for m in pool_all if m[0] != ex.query_id]))
        if config.mode in ("AUG", "FULL"):
            for vid, vtext in members[1:]:
                items.append(BatchItem(vid, vtext, positive, negatives,
                                       [m for m in pool_all if m[0] != vid]))
    return items


def build_batches(data: TrainData, config: TrainConfig, epoch: int):
    """Deterministically shuffled batches for one epoch; CR/FULL batches carry
    V sampled variant texts per anchor, QQ batches carry one pair partner."""
    items = _expand_examples(data, config)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((config.seed, epoch, 17))))
    order = rng.permutation(len(items))
    batches = []
    for start in range(0, len(items), config.batch_size):
        chunk = [items[i] for i in order[start:start + config.batch_size]]
        if config.mode == "QQ" and len(chunk) < 2:
            continue  # a query-pair step needs in-batch negatives
        batch = Batch(chunk)
        if config.uses_variants():
            batch.variant_texts = _sample_variants(chunk, config, epoch, len(batches))
        batches.append(batch)
    return batches


def _sample_variants(chunk, config: TrainConfig, epoch: int, batch_index: int):
    want = 1 if config.mode == "QQ" else config.variants_per_anchor
    available = min(len(item.candidate_variants) for item in chunk)
    if available < 1:
        bad = [i.query_id for i in chunk if not i.candidate_variants]
        raise MissingVariantsError(
            f"mode {config.mode} needs >= 1 variant per anchor; missing for {bad}")
    v_used = min(want, available)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((config.seed, epoch, batch_index, 29))))
    per_anchor = []
    for item in chunk:
        picks = rng.choice(len(item.candidate_variants), size=v_used, replace=False)
        per_anchor.append([item.candidate_variants[p][1] for p in picks])
    # transpose to V lists of b texts
    return [[per_anchor[i][v] for i in range(len(chunk))] for v in range(v_used)]


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: EncoderParams
    history: list
    step_log: list
    best_epoch: int
    best_metric: float


class _BagCache:
    def __init__(self, feature_count: int):
        self.feature_count = feature_count
        self._cache = {}

    def __call__(self, text: str):
        bag = self._cache.get(text)
        if bag is None:
            bag = text_feature_indices(text, self.feature_count)
            self._cache[text] = bag
        return bag

    def many(self, texts):
        return [self(t) for t in texts]


def _dev_value(params: EncoderParams, data: TrainData, bags: "_BagCache",
               metric: str, doc_ids, doc_bags) -> float:
    weights = tensor(params.matrix)
    doc_matrix = encode_bags(doc_bags, weights).values
    index = index_from_embeddings(doc_ids, doc_matrix)
    depth = _METRIC_DEPTH[metric]
    runs = []
    for qid in data.dev_query_ids:
        q_emb = encode_bags([bags(data.queries[qid].text)], weights).values[0]
        runs.append(search_topk(index, q_emb, depth, query_id=qid))
    report = relevance_metrics(runs, data.qrels)
    if report.evaluated == 0:
        raise RuntimeError(
            f"dev evaluation failed: none of the {len(runs)} dev queries were "
            f"evaluable (no qrels: {len(report.skipped_no_qrels)}, "
            f"no relevant: {len(report.skipped_no_relevant)})")
    return report.macro[metric]


def train(data: TrainData, config: TrainConfig,
          features: int = 1024, dim: int = 64) -> TrainResult:
    """Run the configured mode with early stopping on the dev metric and
    return the best checkpoint plus per-epoch/per-step histories."""
    if not data.triplets:
        raise InvalidBatchError("no training triplets")
    if not data.dev_query_ids:
        raise RuntimeError("a dev split is required for early stopping")

    metric = _normalize_metric(config.dev_metric)
    loss_cfg = config.effective_loss()
    params = init_params(features, dim, seed=config.seed)
    opt = OptimizerState.for_shape(params.matrix.shape, weight_decay=config.weight_decay)
    bags = _BagCache(features)

    doc_ids = sorted(data.corpus)
    doc_bags = bags.many([data.corpus[d].text for d in doc_ids])

    n_batches = len(build_batches(data, config, epoch=1))
    if n_batches == 0:
        raise InvalidBatchError("dataset produced zero usable batches")
    steps_per_batch = 2 if config.mode == "QQ" else 1
    total_steps = n_batches * steps_per_batch * config.max_epochs

    history = []
    step_log = []
    best_metric = -math.inf
    best_epoch = 0
    best_matrix = params.matrix.copy()
    bad_epochs = 0
    step = 0

    for epoch in range(1, config.max_epochs + 1):
        epoch_records = []
        for batch in build_batches(data, config, epoch):
            step += 1
            lr = lr_at_step(step, total_steps, config)
            breakdown = _ranking_step(batch, params, opt, loss_cfg, bags, lr)
            breakdown["step"] = step
            step_log.append(breakdown)
            epoch_records.append(breakdown)
            if config.mode == "QQ":
                step += 1
                lr = lr_at_step(step, total_steps, config)
                qq_value = _qq_step(batch, params, opt, loss_cfg, bags, lr)
                step_log.append({"step": step, "qq": qq_value})
                epoch_records.append({"qq": qq_value})

        dev = _dev_value(params, data, bags, metric, doc_ids, doc_bags)
        record = {
            "epoch": epoch,
            "dev_metric": dev,
            "steps": step,
        }
        for key in ("total", "mnr", "qea", "smc", "qq"):
            vals = [r[key] for r in epoch_records if key in r]
            if vals:
                record[f"loss_{key}"] = float(np.mean(vals))
        history.append(record)

        if dev > best_metric:
            best_metric = dev
            best_epoch = epoch
            best_matrix = params.matrix.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= config.patience:
            break

    best = EncoderParams(features, dim, config.seed, best_matrix)
    return TrainResult(best, history, step_log, best_epoch, best_metric)


def _ranking_step(batch: Batch, params: EncoderParams, opt: OptimizerState,
                  loss_cfg: LossConfig, bags: _BagCache, lr: float) -> dict:
    tape = Tape()
    with tape:
        weights = tape.leaf(params.matrix)
        loss_batch = LossBatch(
            query=encode_bags(bags.many([i.query_text for i in batch.items]), weights),
            variants=[encode_bags(bags.many(texts), weights)
                      for texts in batch.variant_texts],
            positives=encode_bags(bags.many([i.positive_text for i in batch.items]), weights),
            negatives=[encode_bags(bags.many([i.negative_texts[j] for i in batch.items]),
                                   weights)
                       for j in range(min(len(i.negative_texts) for i in batch.items))],
        )
        total, breakdown = cr_loss(loss_batch, loss_cfg)
    if not math.isfinite(breakdown["total"]):
        raise NumericalError(f"divergent ranking loss: {breakdown['total']}")
    tape.backward(total)
    adam_step(params.matrix, tape.grad(weights), opt, lr)
    return {k: breakdown[k] for k in ("total", "mnr", "qea", "smc")}


def _qq_step(batch: Batch, params: EncoderParams, opt: OptimizerState,
             loss_cfg: LossConfig, bags: _BagCache, lr: float) -> float:
    partners = batch.variant_texts[0]
    tape = Tape()
    with tape:
        weights = tape.leaf(params.matrix)
        anchors = encode_bags(bags.many([i.query_text for i in batch.items]), weights)
        pairs = encode_bags(bags.many(partners), weights)
        loss = qq_pair_loss(anchors, pairs, loss_cfg.scale)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalError(f"divergent query-pair loss: {value}")
    tape.backward(loss)
    adam_step(params.matrix, tape.grad(weights), opt, lr)
    return value
