"""Reference-set construction: human sets from relevance annotations and
automatic sets from candidate-set correlations (stdev band, mean-shift,
agglomerative), plus the intersection metrics used to verify them.

All standard deviations here follow the population convention (ddof=0);
this is recorded in the report fingerprints so runs stay comparable.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import AgglomerativeClustering

from . import cca
from .corpus import DenseAnnotation, DialogueRound
from .errors import ConfigError, ContractError, DataError, SchemaError

SOURCES = ("human", "sigma", "meanshift", "agglomerative")
METHODS = ("sigma", "meanshift", "agglomerative")
ANCHORS = ("gt", "max")


class DegenerateClusterWarning(UserWarning):
    """Clustering collapsed (zero spread or too few distinct values)."""


@dataclass(frozen=True)
class ReferenceSet:
    """A subset of one round's candidates deemed valid answers.

    members always contain the ground-truth answer index and are a subset
    of the round's candidate indices. correlations maps member answer
    indices to their anchor correlation where one was computed (the
    unioned ground truth has none in the gt-anchored constructions).
    gt_in_cluster records whether the ground truth sat inside the selected
    cluster before the final union.
    """

    image_id: int
    round: int
    members: tuple
    source: str
    correlations: dict | None = None
    gt_in_cluster: bool = True
    degenerate: bool = False

    def key(self):
        return (self.image_id, self.round)


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float


@dataclass(frozen=True)
class IntersectionReport:
    """Corpus-level agreement between automatic sets C and human sets H."""

    iou: Stat  # all three as percentages
    precision: Stat
    recall: Stat
    size: Stat
    corr_mean: Stat
    corr_std: Stat
    pct_contains_gt: float  # A_gt in C before union
    n_joined: int
    n_missing: int


def _require_gt(rnd: DialogueRound):
    if rnd.gt_answer_idx is None:
        raise DataError(
            f"image {rnd.image_id} round {rnd.round}: reference sets need a ground truth"
        )


def build_human_refset(rnd: DialogueRound, annotation: DenseAnnotation) -> ReferenceSet:
    """All candidates any annotator accepted, plus the ground truth."""
    _require_gt(rnd)
    if (annotation.image_id, annotation.round) != (rnd.image_id, rnd.round):
        raise ContractError("annotation does not belong to this round")
    members = {a for a, rel in zip(rnd.candidate_idxs, annotation.relevance) if rel > 0.0}
    members.add(rnd.gt_answer_idx)
    return ReferenceSet(
        image_id=rnd.image_id,
        round=rnd.round,
        members=tuple(sorted(members)),
        source="human",
    )


# --- correlation-level clustering primitives ------------------------------


def sigma_band(corrs: np.ndarray):
    """Boolean mask of values within one population stdev of the max.

    A zero stdev (all values equal) is degenerate: the band covers
    everything and the caller is warned.
    """
    corrs = np.asarray(corrs, dtype=np.float64)
    cmax = corrs.max()
    spread = float(np.std(corrs))
    # detect the all-equal case exactly: np.std of identical values can be
    # a few ulp above zero when their mean is not binary-representable
    degenerate = cmax == corrs.min()
    if degenerate:
        warnings.warn(
            "all correlations equal; stdev band covers the full candidate set",
            DegenerateClusterWarning,
            stacklevel=2,
        )
    mask = corrs >= cmax - spread
    return mask, degenerate


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule-of-thumb bandwidth for scalar data."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 0.9 * spread * n ** (-0.2)


def meanshift_1d(values: np.ndarray, bandwidth: float, max_iter: int = 300) -> np.ndarray:
    """Flat-kernel mean-shift on scalar data; returns integer labels.

    Every point seeds a mode search; converged modes within one bandwidth
    of a better-supported mode are suppressed, and points are labelled by
    their nearest surviving mode.
    """
    if bandwidth <= 0:
        raise ConfigError(f"mean-shift bandwidth must be positive, got {bandwidth}")
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        return np.zeros(0, dtype=int)
    sorted_vals = np.sort(values)
    csum = np.concatenate([[0.0], np.cumsum(sorted_vals)])
    modes = values.copy()
    tol = bandwidth * 1e-6
    for _ in range(max_iter):
        lo = np.searchsorted(sorted_vals, modes - bandwidth, side="left")
        hi = np.searchsorted(sorted_vals, modes + bandwidth, side="right")
        new_modes = (csum[hi] - csum[lo]) / (hi - lo)
        if np.abs(new_modes - modes).max() < tol:
            modes = new_modes
            break
        modes = new_modes
    support = (
        np.searchsorted(sorted_vals, modes + bandwidth, side="right")
        - np.searchsorted(sorted_vals, modes - bandwidth, side="left")
    )
    # suppress weaker modes within one bandwidth of a stronger one
    order = np.lexsort((modes, -support))
    kept = []
    for i in order:
        if all(abs(modes[i] - modes[j]) > bandwidth for j in kept):
            kept.append(i)
    centers = np.sort(modes[kept])
    labels = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    return labels


def agglomerative_1d(values: np.ndarray, n_clusters: int) -> np.ndarray:
    """Average-linkage agglomerative clustering on scalar data."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters={n_clusters} outside [1, {n}]")
    distinct = np.unique(values).size
    if n_clusters > distinct:
        warnings.warn(
            f"n_clusters={n_clusters} exceeds the {distinct} distinct values; "
            "falling back to singleton clusters",
            DegenerateClusterWarning,
            stacklevel=2,
        )
        return np.arange(n)
    if n_clusters == n:
        return np.arange(n)
    model = AgglomerativeClustering(n_clusters=n_clusters, linkage="average", metric="euclidean")
    return model.fit(values.reshape(-1, 1)).labels_


# --- automatic reference-set builders -------------------------------------


def _gt_anchored_corrs(rnd: DialogueRound, model: cca.CcaModel, answer_vectors: np.ndarray):
    """Correlations between the ground truth and the other 99 candidates."""
    _require_gt(rnd)
    others = [a for a in rnd.candidate_idxs if a != rnd.gt_answer_idx]
    gt_vec = answer_vectors[rnd.gt_answer_idx]
    corrs = cca.correlate_many(gt_vec, answer_vectors[others], model, views=(1, 1))
    return others, corrs


def _finish(rnd, others, corrs, member_positions, source, degenerate=False):
    members = {others[i] for i in member_positions}
    members.add(rnd.gt_answer_idx)
    return ReferenceSet(
        image_id=rnd.image_id,
        round=rnd.round,
        members=tuple(sorted(members)),
        source=source,
        correlations={others[i]: float(corrs[i]) for i in member_positions},
        gt_in_cluster=True,
        degenerate=degenerate,
    )


def build_sigma(rnd: DialogueRound, model: cca.CcaModel, answer_vectors: np.ndarray) -> ReferenceSet:
    """Candidates whose correlation with the ground truth falls within one
    population stdev of the maximum, unioned with the ground truth."""
    others, corrs = _gt_anchored_corrs(rnd, model, answer_vectors)
    mask, degenerate = sigma_band(corrs)
    return _finish(rnd, others, corrs, np.nonzero(mask)[0], "sigma", degenerate)


def build_meanshift(rnd: DialogueRound, model: cca.CcaModel, answer_vectors: np.ndarray,
                    bandwidth: float | None = None) -> ReferenceSet:
    """Mean-shift cluster containing the best-correlated candidate, unioned
    with the ground truth. bandwidth defaults to Silverman's rule."""
    others, corrs = _gt_anchored_corrs(rnd, model, answer_vectors)
    labels, degenerate = _meanshift_labels(corrs, bandwidth)
    top = labels == labels[int(np.argmax(corrs))]
    return _finish(rnd, others, corrs, np.nonzero(top)[0], "meanshift", degenerate)


def _meanshift_labels(corrs, bandwidth):
    if bandwidth is not None and bandwidth <= 0:
        raise ConfigError(f"mean-shift bandwidth must be positive, got {bandwidth}")
    degenerate = False
    if bandwidth is None:
        bandwidth = silverman_bandwidth(corrs)
        if bandwidth <= 0:  # zero-spread data: a single trivial cluster
            warnings.warn(
                "degenerate Silverman bandwidth; treating all values as one cluster",
                DegenerateClusterWarning,
                stacklevel=3,
            )
            return np.zeros(len(corrs), dtype=int), True
    return meanshift_1d(corrs, bandwidth), degenerate


def build_agglomerative(rnd: DialogueRound, model: cca.CcaModel, answer_vectors: np.ndarray,
                        n_clusters: int = 5) -> ReferenceSet:
    """Average-linkage cluster containing the best-correlated candidate,
    unioned with the ground truth."""
    others, corrs = _gt_anchored_corrs(rnd, model, answer_vectors)
    if not 1 <= n_clusters <= len(others):
        raise ConfigError(f"n_clusters={n_clusters} outside [1, {len(others)}]")
    labels = agglomerative_1d(corrs, n_clusters)
    top = labels == labels[int(np.argmax(corrs))]
    return _finish(rnd, others, corrs, np.nonzero(top)[0], "agglomerative")


def build_from_question(rnd: DialogueRound, model: cca.CcaModel, question_vector,
                        answer_vectors: np.ndarray, anchor: str = "gt",
                        method: str = "sigma", bandwidth: float | None = None,
                        n_clusters: int = 5) -> ReferenceSet:
    """Cluster question-to-candidate correlations over the full candidate
    set and keep the cluster containing the anchor.

    anchor "gt" selects the cluster holding the ground truth; "max" the one
    holding the best-correlated candidate. The result is unioned with the
    ground truth either way; gt_in_cluster reports membership before that
    union.
    """
    _require_gt(rnd)
    if anchor not in ANCHORS:
        raise ContractError(f"anchor must be one of {ANCHORS}, got {anchor!r}")
    cands = list(rnd.candidate_idxs)
    corrs = cca.correlate_many(
        question_vector, answer_vectors[cands], model, views=(2, 1)
    )
    degenerate = False
    if method == "sigma":
        mask, degenerate = sigma_band(corrs)
        labels = mask.astype(int)
    elif method == "meanshift":
        labels, degenerate = _meanshift_labels(corrs, bandwidth)
    elif method == "agglomerative":
        labels = agglomerative_1d(corrs, n_clusters)
    else:
        raise ContractError(f"method must be one of {METHODS}, got {method!r}")

    gt_position = rnd.gt_position()
    anchor_position = gt_position if anchor == "gt" else int(np.argmax(corrs))
    in_cluster = labels == labels[anchor_position]
    members = {cands[i] for i in np.nonzero(in_cluster)[0]}
    gt_in_cluster = rnd.gt_answer_idx in members
    members.add(rnd.gt_answer_idx)
    return ReferenceSet(
        image_id=rnd.image_id,
        round=rnd.round,
        members=tuple(sorted(members)),
        source=method,
        correlations={cands[i]: float(corrs[i]) for i in np.nonzero(in_cluster)[0]},
        gt_in_cluster=gt_in_cluster,
        degenerate=degenerate,
    )


# --- verification ----------------------------------------------------------


def intersection_metrics(auto_sets, human_sets) -> IntersectionReport:
    """Per-round IOU / precision / recall / size of auto sets against human
    sets joined on (image_id, round), averaged with standard deviations."""
    human_by_key = {s.key(): s for s in human_sets}
    ious, precisions, recalls, sizes = [], [], [], []
    corr_means, corr_stds, gt_flags = [], [], []
    n_missing = 0
    for auto in auto_sets:
        human = human_by_key.get(auto.key())
        if human is None:
            n_missing += 1
            continue
        c = set(auto.members)
        h = set(human.members)
        if not c or not h:
            raise DataError(f"empty reference set at {auto.key()}")
        inter = len(c & h)
        ious.append(100.0 * inter / len(c | h))
        precisions.append(100.0 * inter / len(c))
        recalls.append(100.0 * inter / len(h))
        sizes.append(float(len(c)))
        if auto.correlations:
            vals = np.fromiter(auto.correlations.values(), dtype=np.float64)
            corr_means.append(float(vals.mean()))
            corr_stds.append(float(np.std(vals)))
        gt_flags.append(100.0 if auto.gt_in_cluster else 0.0)
    if not ious:
        raise DataError("no (image_id, round) keys joined between auto and human sets")

    def stat(xs):
        arr = np.asarray(xs, dtype=np.float64)
        if arr.size == 0:
            return Stat(mean=float("nan"), std=float("nan"))
        return Stat(mean=float(arr.mean()), std=float(np.std(arr)))

    return IntersectionReport(
        iou=stat(ious),
        precision=stat(precisions),
        recall=stat(recalls),
        size=stat(sizes),
        corr_mean=stat(corr_means),
        corr_std=stat(corr_stds),
        pct_contains_gt=float(np.mean(gt_flags)),
        n_joined=len(ious),
        n_missing=n_missing,
    )


def correlation_cluster_audit(corpus, model: cca.CcaModel, answer_vectors: np.ndarray):
    """Corpus-wide stdev-band cluster statistics: average in-cluster mean
    correlation, correlation spread, and cluster size."""
    means, stds, sizes = [], [], []
    for rnd in corpus.iter_rounds():
        if not rnd.answered:
            continue
        refset = build_sigma(rnd, model, answer_vectors)
        vals = np.fromiter(refset.correlations.values(), dtype=np.float64)
        means.append(float(vals.mean()))
        stds.append(float(np.std(vals)))
        sizes.append(float(len(refset.members)))
    if not means:
        raise DataError("corpus has no answered rounds to audit")
    return {
        "mean_correlation": float(np.mean(means)),
        "mean_correlation_std": float(np.mean(stds)),
        "mean_cluster_size": float(np.mean(sizes)),
        "n_rounds": len(means),
    }


# --- densified-corpus wire format ------------------------------------------


def save_refsets(refsets, path) -> None:
    """Write reference sets as a JSON list of
    {image_id, round_id, ref_answer_idxs, source, correlations} records.

    correlations align with ref_answer_idxs; members without a correlation
    (the unioned ground truth) carry null.
    """
    records = []
    for s in refsets:
        corrs = s.correlations or {}
        records.append(
            {
                "image_id": s.image_id,
                "round_id": s.round,
                "ref_answer_idxs": list(s.members),
                "source": s.source,
                "correlations": [corrs.get(a) for a in s.members],
                "gt_in_cluster": s.gt_in_cluster,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, sort_keys=True)


def load_refsets(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise SchemaError(f"{path}: expected a JSON list of reference-set records")
    out = []
    for rec in records:
        try:
            members = tuple(rec["ref_answer_idxs"])
            corr_list = rec.get("correlations") or [None] * len(members)
            out.append(
                ReferenceSet(
                    image_id=int(rec["image_id"]),
                    round=int(rec["round_id"]),
                    members=members,
                    source=rec.get("source", "unknown"),
                    correlations={
                        a: float(c) for a, c in zip(members, corr_list) if c is not None
                    },
                    gt_in_cluster=bool(rec.get("gt_in_cluster", True)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: malformed reference-set record") from exc
    return out


def check_refset_invariants(refset: ReferenceSet, rnd: DialogueRound) -> None:
    """Raise unless the set contains the ground truth and stays within the
    round's candidates. Used by tests and by the verify command."""
    if rnd.gt_answer_idx not in refset.members:
        raise DataError(f"reference set at {refset.key()} is missing the ground truth")
    if not set(refset.members) <= set(rnd.candidate_idxs):
        raise DataError(f"reference set at {refset.key()} leaves the candidate set")
    if not refset.members:
        raise DataError(f"reference set at {refset.key()} is empty")
