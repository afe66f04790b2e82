"""Training objectives for the coherence workbench.

All losses are built from autodiff primitives on unit-norm embedding
tensors, so gradients flow back to the encoder weights through the batch.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat_cols,
    elementwise_sub,
    matmul,
    mean_all,
    rowwise_dot,
    rowwise_sum_squares,
    scale,
    softmax_cross_entropy_rows,
    tensor,
    transpose,
)
from .errors import InvalidBatchError, ShapeError

LAMBDA_GRID = (0.0, 0.2, 0.5, 0.8, 1.0)


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 0.5          # weight of the embedding-alignment term
    lambda2: float = 0.5          # weight of the margin-consistency term
    scale: float = 20.0           # similarity multiplier inside the softmax
    include_in_batch_negatives: bool = True
    normalize_smc: bool = False   # divide the margin term by V*N

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and self.lambda1 >= 0):
            raise ValueError("lambda1 must be finite and >= 0")
        if not (np.isfinite(self.lambda2) and self.lambda2 >= 0):
            raise ValueError("lambda2 must be finite and >= 0")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be finite and > 0")


@dataclass
class LossBatch:
    """Unit-norm embeddings for one step: b anchors, V variants and N hard
    negatives per anchor (variants/negatives as lists of b x D tensors)."""

    query: Tensor
    variants: list = field(default_factory=list)
    positives: Tensor = None
    negatives: list = field(default_factory=list)

    def __post_init__(self):
        b, d = self.query.shape
        for t in (self.positives, *self.variants, *self.negatives):
            if t is not None and t.shape != (b, d):
                raise ShapeError(f"batch tensors must all be {b}x{d}, got {t.shape}")

    @property
    def batch_size(self) -> int:
        return self.query.rows


def margin(q_emb: Tensor, pos_emb: Tensor, neg_emb: Tensor) -> Tensor:
    """Per-anchor cosine gap cos(q, d+) - cos(q, d-), as a b x 1 column."""
    return elementwise_sub(rowwise_dot(q_emb, pos_emb), rowwise_dot(q_emb, neg_emb))


def mnr_loss(batch: LossBatch, config: LossConfig) -> Tensor:
    """Softmax cross-entropy ranking the positive above hard (and optionally
    in-batch) negatives, mean over anchors."""
    b = batch.batch_size
    if batch.positives is None or not batch.negatives:
        raise InvalidBatchError("ranking loss needs a positive and at least one negative")
    cols = []
    if config.include_in_batch_negatives:
        # b x b block: diagonal is each anchor's own positive
        cols.append(matmul(batch.query, transpose(batch.positives)))
        targets = np.arange(b)
    else:
        cols.append(rowwise_dot(batch.query, batch.positives))
        targets = np.zeros(b, dtype=np.int64)
    for neg in batch.negatives:
        cols.append(rowwise_dot(batch.query, neg))
    scores = concat_cols(cols)
    return softmax_cross_entropy_rows(scores, targets, config.scale)


def qea_term(q_emb: Tensor, variant_embs):
    """Mean over anchors of the variant-averaged squared embedding distance.

    Returns (scalar tensor, skipped); skipped is True when there are no
    variants and the term is an exact zero.
    """
    if not variant_embs:
        return tensor([[0.0]]), True
    acc = None
    for v in variant_embs:
        dist = rowwise_sum_squares(elementwise_sub(q_emb, v))
        acc = dist if acc is None else add(acc, dist)
    return mean_all(scale(acc, 1.0 / len(variant_embs))), False


def smc_term(q_emb: Tensor, variant_embs, pos_emb: Tensor, neg_embs,
             normalize: bool = False):
    """Mean over anchors of the summed squared margin gaps between the anchor
    and each variant, across all negatives. Unnormalized over V*N unless
    normalize is set.

    Returns (scalar tensor, skipped) like qea_term.
    """
    if not variant_embs or not neg_embs:
        return tensor([[0.0]]), True
    anchor_margins = [margin(q_emb, pos_emb, neg) for neg in neg_embs]
    acc = None
    for v in variant_embs:
        v_pos = rowwise_dot(v, pos_emb)
        for j, neg in enumerate(neg_embs):
            v_margin = elementwise_sub(v_pos, rowwise_dot(v, neg))
            gap = rowwise_sum_squares(elementwise_sub(anchor_margins[j], v_margin))
            acc = gap if acc is None else add(acc, gap)
    if normalize:
        acc = scale(acc, 1.0 / (len(variant_embs) * len(neg_embs)))
    return mean_all(acc), False


def cr_loss(batch: LossBatch, config: LossConfig):
    """Weighted alignment + margin-consistency penalties added to the ranking
    loss; returns (total, breakdown dict with component values and flags)."""
    mnr = mnr_loss(batch, config)
    total = mnr
    breakdown = {"mnr": mnr.item(), "qea": 0.0, "smc": 0.0,
                 "qea_skipped": True, "smc_skipped": True}
    if config.lambda1 != 0.0:
        qea, skipped = qea_term(batch.query, batch.variants)
        breakdown["qea"] = qea.item()
        breakdown["qea_skipped"] = skipped
        if not skipped:
            total = add(total, scale(qea, config.lambda1))
    if config.lambda2 != 0.0:
        smc, skipped = smc_term(batch.query, batch.variants, batch.positives,
                                batch.negatives, normalize=config.normalize_smc)
        breakdown["smc"] = smc.item()
        breakdown["smc_skipped"] = skipped
        if not skipped:
            total = add(total, scale(smc, config.lambda2))
    breakdown["total"] = total.item()
    return total, breakdown


def qq_pair_loss(query_embs_a: Tensor, query_embs_b: Tensor, scale_value: float) -> Tensor:
    """Ranking loss over aligned query pairs: row i of b is the positive for
    row i of a, every other row of b is an in-batch negative."""
    b = query_embs_a.rows
    if b < 2:
        raise InvalidBatchError("query-pair loss needs >= 2 rows for in-batch negatives")
    if query_embs_a.shape != query_embs_b.shape:
        raise ShapeError("query-pair loss needs aligned equal-shape inputs")
    scores = matmul(query_embs_a, transpose(query_embs_b))
    return softmax_cross_entropy_rows(scores, np.arange(b), scale_value)
