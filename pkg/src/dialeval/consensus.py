"""Consensus metrics between generated answers and reference sets:
tf-idf n-gram cosine overlap, unigram-alignment F-score with fragmentation
penalty, clipped n-gram precision with brevity penalty, and embedding
distances. Includes the best-case reference baseline and k-sample
aggregation (mean / population std / best score per round).
"""

import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .stem import stem

# fixed aligner parameters: F-weight alpha, fragmentation exponent beta,
# fragmentation weight; a single contiguous matched chunk carries no penalty
# so a sentence scores 1.0 against itself
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

BLEU_EPSILON = 1e-7
MAX_NGRAM = 4

OVERLAP_METRICS = tuple(
    [f"cider{n}" for n in range(1, MAX_NGRAM + 1)]
    + [f"bleu{n}" for n in range(1, MAX_NGRAM + 1)]
    + ["meteor"]
)


class EmptyCandidateWarning(UserWarning):
    """A candidate had no usable tokens; its overlap score is 0."""


@dataclass(frozen=True)
class GeneratedAnswerSet:
    """k sampled generations for one round."""

    image_id: int
    round: int
    generations: tuple
    model_tag: str = ""

    def key(self):
        return (self.image_id, self.round)


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class IdfCorpus:
    """Document frequencies of 1..4-grams over a reference-answer corpus;
    every reference answer counts as one document."""

    n_docs: int
    df: dict  # n -> {ngram: document frequency}

    def idf(self, gram) -> float:
        return math.log(self.n_docs / max(self.df[len(gram)].get(gram, 0), 1))


def build_idf(reference_token_lists, max_n: int = MAX_NGRAM) -> IdfCorpus:
    """Count, per n-gram size, how many documents contain each n-gram."""
    docs = list(reference_token_lists)
    if not docs:
        raise DataError("idf corpus needs at least one document")
    df = {n: Counter() for n in range(1, max_n + 1)}
    for tokens in docs:
        for n in range(1, max_n + 1):
            df[n].update(set(ngram_counts(tokens, n)))
    return IdfCorpus(n_docs=len(docs), df={n: dict(c) for n, c in df.items()})


def _tfidf_cosine(cand_counts, ref_counts, idf, n) -> float:
    keys = set(cand_counts) | set(ref_counts)
    dot = cnorm = rnorm = 0.0
    for g in keys:
        w = idf.idf(g)
        c = cand_counts.get(g, 0) * w
        r = ref_counts.get(g, 0) * w
        dot += c * r
        cnorm += c * c
        rnorm += r * r
    if cnorm == 0.0 or rnorm == 0.0:
        return 0.0
    return dot / math.sqrt(cnorm * rnorm)


def cider(candidate_tokens, reference_token_lists, idf: IdfCorpus, n: int = MAX_NGRAM) -> float:
    """tf-idf m-gram cosine against each reference, averaged over the
    references and then over m = 1..n."""
    if not 1 <= n <= MAX_NGRAM:
        raise ContractError(f"cider order must be in [1, {MAX_NGRAM}], got {n}")
    refs = list(reference_token_lists)
    if not refs:
        raise ContractError("cider needs at least one reference")
    if not candidate_tokens:
        warnings.warn("empty candidate scores 0", EmptyCandidateWarning, stacklevel=2)
        return 0.0
    per_order = []
    for m in range(1, n + 1):
        cand_counts = ngram_counts(candidate_tokens, m)
        sims = [
            _tfidf_cosine(cand_counts, ngram_counts(ref, m), idf, m) for ref in refs
        ]
        per_order.append(sum(sims) / len(sims))
    return sum(per_order) / len(per_order)


def _align(hyp, ref):
    """Two-stage unigram alignment: exact surface match, then stem match.

    Returns matched (hyp_pos, ref_pos) pairs; each position is used at
    most once, earliest free occurrence first.
    """
    pairs = []
    used_ref = [False] * len(ref)
    matched_hyp = [False] * len(hyp)
    for i, tok in enumerate(hyp):
        for j, rtok in enumerate(ref):
            if not used_ref[j] and tok == rtok:
                pairs.append((i, j))
                used_ref[j] = True
                matched_hyp[i] = True
                break
    hyp_stems = [stem(t) for t in hyp]
    ref_stems = [stem(t) for t in ref]
    for i, st in enumerate(hyp_stems):
        if matched_hyp[i]:
            continue
        for j, rst in enumerate(ref_stems):
            if not used_ref[j] and st == rst:
                pairs.append((i, j))
                used_ref[j] = True
                break
    return sorted(pairs)


def _chunks(pairs) -> int:
    """Contiguous runs of matches that advance by one on both sides."""
    count = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            count += 1
        prev = (i, j)
    return count


def meteor(candidate_tokens, reference_token_lists) -> float:
    """Alignment F-score with a fragmentation penalty, best over references.

    F = P*R / (alpha*P + (1-alpha)*R) over aligned unigrams; the penalty is
    gamma * (chunks/matches)^beta, waived when the alignment forms a single
    contiguous chunk (identical sentences therefore score exactly 1).
    """
    refs = list(reference_token_lists)
    if not refs:
        raise ContractError("meteor needs at least one reference")
    if not candidate_tokens:
        warnings.warn("empty candidate scores 0", EmptyCandidateWarning, stacklevel=2)
        return 0.0
    best = 0.0
    for ref in refs:
        if not ref:
            continue
        pairs = _align(candidate_tokens, ref)
        m = len(pairs)
        if m == 0:
            continue
        precision = m / len(candidate_tokens)
        recall = m / len(ref)
        fmean = (precision * recall) / (
            METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall
        )
        ch = _chunks(pairs)
        penalty = 0.0 if ch == 1 else METEOR_GAMMA * (ch / m) ** METEOR_BETA
        best = max(best, fmean * (1.0 - penalty))
    return best


def bleu(candidate_tokens, reference_token_lists, n: int = MAX_NGRAM,
         epsilon: float = BLEU_EPSILON) -> float:
    """Clipped m-gram precision geometric mean with a brevity penalty
    against the closest (shorter on ties) reference length.

    Orders the candidate is too short to populate are skipped; zero clipped
    counts are smoothed to epsilon so one- and two-word answers do not hard
    zero the geometric mean.
    """
    if not 1 <= n <= MAX_NGRAM:
        raise ContractError(f"bleu order must be in [1, {MAX_NGRAM}], got {n}")
    refs = [list(r) for r in reference_token_lists if r]
    if not refs:
        raise ContractError("bleu needs at least one non-empty reference")
    c = len(candidate_tokens)
    if c == 0:
        warnings.warn("empty candidate scores 0", EmptyCandidateWarning, stacklevel=2)
        return 0.0
    r = min((len(ref) for ref in refs), key=lambda L: (abs(L - c), L))
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    log_sum = 0.0
    n_orders = 0
    for m in range(1, n + 1):
        cand_counts = ngram_counts(candidate_tokens, m)
        total = sum(cand_counts.values())
        if total == 0:
            continue
        ref_counts = [ngram_counts(ref, m) for ref in refs]
        clipped = sum(
            min(v, max(rc.get(g, 0) for rc in ref_counts))
            for g, v in cand_counts.items()
        )
        log_sum += math.log((clipped if clipped > 0 else epsilon) / total)
        n_orders += 1
    return brevity * math.exp(log_sum / n_orders)


def embedding_distance(candidate: str, references, embedder) -> dict:
    """Mean L2 distance and cosine similarity between the candidate's
    sentence vector and each reference's, via ``embedder(text) -> vector``."""
    refs = list(references)
    if not refs:
        raise ContractError("embedding_distance needs at least one reference")
    cand = np.asarray(embedder(candidate), dtype=np.float64)
    l2s, cosines = [], []
    cnorm = np.linalg.norm(cand)
    for ref in refs:
        rv = np.asarray(embedder(ref), dtype=np.float64)
        l2s.append(float(np.linalg.norm(cand - rv)))
        rnorm = np.linalg.norm(rv)
        if cnorm == 0.0 or rnorm == 0.0:
            cosines.append(0.0)
        elif np.array_equal(cand, rv):
            cosines.append(1.0)  # spare the self-cosine a norm-rounding ulp
        else:
            cosines.append(float(cand @ rv / (cnorm * rnorm)))
    return {"l2": sum(l2s) / len(l2s), "cs": sum(cosines) / len(cosines)}


class ConsensusScorer:
    """Uniform front end over every metric, so the baselines and k-sample
    aggregation can treat them interchangeably.

    Metric names: cider1..cider4, bleu1..bleu4, meteor, and per named
    embedder "<tag>_l2" / "<tag>_cs". Lower-is-better holds for the L2
    names only.
    """

    def __init__(self, tokenizer, idf: IdfCorpus | None = None, embedders: dict | None = None):
        self.tokenizer = tokenizer
        self.idf = idf
        self.embedders = dict(embedders or {})

    def metric_names(self):
        names = []
        if self.idf is not None:
            names += [f"cider{n}" for n in range(1, MAX_NGRAM + 1)]
        names += [f"bleu{n}" for n in range(1, MAX_NGRAM + 1)]
        names += ["meteor"]
        for tag in self.embedders:
            names += [f"{tag}_l2", f"{tag}_cs"]
        return names

    @staticmethod
    def higher_better(name: str) -> bool:
        return not name.endswith("_l2")

    def score(self, name: str, candidate: str, references) -> float:
        refs = list(references)
        if name.startswith("cider"):
            if self.idf is None:
                raise ContractError("cider requires an idf corpus")
            return cider(
                self.tokenizer(candidate),
                [self.tokenizer(r) for r in refs],
                self.idf,
                n=int(name[len("cider"):]),
            )
        if name.startswith("bleu"):
            return bleu(
                self.tokenizer(candidate),
                [self.tokenizer(r) for r in refs],
                n=int(name[len("bleu"):]),
            )
        if name == "meteor":
            return meteor(self.tokenizer(candidate), [self.tokenizer(r) for r in refs])
        for tag, embedder in self.embedders.items():
            if name == f"{tag}_l2":
                return embedding_distance(candidate, refs, embedder)["l2"]
            if name == f"{tag}_cs":
                return embedding_distance(candidate, refs, embedder)["cs"]
        raise ContractError(f"unknown metric {name!r}")


def gamma_baseline(reference_texts, scorer: ConsensusScorer, metric: str) -> float:
    """Best-case score over the set: each member plays the candidate
    against the full set, keeping the best value (max, or min for L2)."""
    refs = list(reference_texts)
    if not refs:
        raise ContractError("gamma_baseline needs a non-empty reference set")
    scores = [scorer.score(metric, member, refs) for member in refs]
    return max(scores) if scorer.higher_better(metric) else min(scores)


@dataclass(frozen=True)
class MetricSummary:
    mu: float
    sigma: float
    gamma: float
    higher_better: bool


@dataclass
class ConsensusReport:
    """Corpus means of the per-round k-sample statistics."""

    metrics: dict
    n_rounds_scored: int
    n_rounds_excluded: int  # every generation empty
    n_generations_excluded: int
    n_missing_refsets: int


def round_sample_stats(generations, reference_texts, scorer: ConsensusScorer, metrics):
    """Per-round mu/sigma/gamma over the retained (non-empty) generations.

    Returns (stats, n_excluded) or (None, n_excluded) when nothing remains.
    sigma is the population std and hence 0 for a single generation; gamma
    is the best score (max, or min for lower-is-better metrics).
    """
    generations = list(generations)
    retained = [g for g in generations if g.strip()]
    n_excluded = len(generations) - len(retained)
    if not retained:
        return None, n_excluded
    stats = {}
    for name in metrics:
        scores = np.array(
            [scorer.score(name, g, reference_texts) for g in retained], dtype=np.float64
        )
        best = scores.max() if scorer.higher_better(name) else scores.min()
        stats[name] = (float(scores.mean()), float(np.std(scores)), float(best))
    return stats, n_excluded


def k_sample_report(generated_sets, refset_texts_by_key, scorer: ConsensusScorer,
                    metrics=None) -> ConsensusReport:
    """Aggregate per-round k-sample statistics over the corpus.

    refset_texts_by_key maps (image_id, round) to the reference answer
    strings; generated sets without a reference set are skipped and
    counted.
    """
    metrics = list(metrics) if metrics is not None else scorer.metric_names()
    sums = {name: np.zeros(3) for name in metrics}
    n_scored = n_excluded_rounds = n_excluded_gens = n_missing = 0
    for gen in generated_sets:
        refs = refset_texts_by_key.get(gen.key())
        if refs is None:
            n_missing += 1
            continue
        stats, dropped = round_sample_stats(gen.generations, refs, scorer, metrics)
        n_excluded_gens += dropped
        if stats is None:
            n_excluded_rounds += 1
            continue
        n_scored += 1
        for name in metrics:
            sums[name] += np.asarray(stats[name])
    if n_scored == 0:
        raise DataError("no generated answer set could be scored")
    summaries = {
        name: MetricSummary(
            mu=float(sums[name][0] / n_scored),
            sigma=float(sums[name][1] / n_scored),
            gamma=float(sums[name][2] / n_scored),
            higher_better=scorer.higher_better(name),
        )
        for name in metrics
    }
    return ConsensusReport(
        metrics=summaries,
        n_rounds_scored=n_scored,
        n_rounds_excluded=n_excluded_rounds,
        n_generations_excluded=n_excluded_gens,
        n_missing_refsets=n_missing,
    )
