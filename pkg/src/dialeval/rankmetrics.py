"""Legacy rank-based evaluation: mean rank, mean reciprocal rank, recall@k,
relevance-weighted NDCG, and the ground-truth rank histogram.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError

RECALL_CUTOFFS = (1, 5, 10)


@dataclass(frozen=True)
class RankRecord:
    """Outcome of ranking one round's candidates.

    full_ranking lists candidate positions best-first; gt_rank is the
    1-based position of the ground truth within it.
    """

    image_id: int
    round: int
    gt_rank: int
    full_ranking: tuple


def rank_suite(records) -> dict:
    """MR, MRR and recall@{1,5,10} (recalls as percentages)."""
    ranks = np.asarray([r.gt_rank for r in records], dtype=np.float64)
    if ranks.size == 0:
        raise DataError("rank_suite needs at least one record")
    out = {"mr": float(ranks.mean()), "mrr": float((1.0 / ranks).mean())}
    for k in RECALL_CUTOFFS:
        out[f"r_at_{k}"] = float(100.0 * (ranks <= k).mean())
    return out


def ndcg(predicted_ranking, relevance) -> float:
    """Relevance-weighted gain of a predicted ranking against the ideal one.

    predicted_ranking holds candidate positions best-first; relevance is
    aligned to candidate positions. The discounted gain sums relevance over
    every scored position with a log2(rank+1) discount and is normalized by
    the same sum under the descending-relevance ordering. All-zero
    relevance leaves the ratio undefined and raises DataError.
    """
    relevance = np.asarray(relevance, dtype=np.float64)
    order = np.asarray(predicted_ranking, dtype=np.int64)
    if order.shape != relevance.shape or not np.array_equal(
        np.sort(order), np.arange(relevance.size)
    ):
        raise ContractError("predicted_ranking must be a permutation of the candidate positions")
    if not (relevance > 0).any():
        raise DataError("NDCG undefined: no candidate has positive relevance")
    discounts = np.log2(np.arange(2, relevance.size + 2))
    dcg = float(np.sum(relevance[order] / discounts))
    ideal = float(np.sum(np.sort(relevance)[::-1] / discounts))
    # summation-order noise can tip the ratio a few ulp past 1
    return float(min(dcg / ideal, 1.0))


def rank_histogram(records) -> np.ndarray:
    """Counts of ground-truth ranks; bin b-1 counts gt_rank == b."""
    records = list(records)
    if not records:
        raise DataError("rank_histogram needs at least one record")
    n_bins = max(len(r.full_ranking) for r in records)
    counts = np.zeros(n_bins, dtype=np.int64)
    for r in records:
        counts[r.gt_rank - 1] += 1
    return counts


def histogram_csv(counts) -> str:
    """Render histogram counts as "rank,count" CSV for plotting."""
    lines = ["rank,count"]
    lines += [f"{rank + 1},{int(c)}" for rank, c in enumerate(counts)]
    return "\n".join(lines) + "\n"
