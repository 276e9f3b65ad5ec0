"""Corpus-level wiring: vectorizing a corpus, assembling training pairs,
and the batch loops behind the CLI commands.

View convention throughout the toolkit: view 1 = answers, view 2 =
questions.
"""

from dataclasses import dataclass

import numpy as np

from . import cca, refsets as refsets_mod
from .consensus import ConsensusScorer, k_sample_report
from .corpus import Corpus
from .embed import MAX_SENTENCE_TOKENS, EmbeddingTable, embed_text, tokenize
from .errors import ContractError, DataError
from .rankmetrics import RankRecord, ndcg, rank_histogram, rank_suite

ANSWER_VIEW = 1
QUESTION_VIEW = 2

PAIRINGS = ("gt", "h", "refsets")


@dataclass
class CorpusVectors:
    """Sentence embeddings for every question and answer string."""

    questions: np.ndarray
    answers: np.ndarray
    fingerprint: str


def embedding_fingerprint(table: EmbeddingTable) -> str:
    return f"mean{MAX_SENTENCE_TOKENS}/dim={table.dim}/oov={table.oov_policy}"


def embed_corpus(corpus: Corpus, table: EmbeddingTable) -> CorpusVectors:
    questions = np.stack([embed_text(q, table).values for q in corpus.questions])
    answers = np.stack([embed_text(a, table).values for a in corpus.answers])
    return CorpusVectors(
        questions=questions, answers=answers, fingerprint=embedding_fingerprint(table)
    )


def build_pairs(corpus: Corpus, pairing: str, annotations=None, refsets=None):
    """(question_idx, answer_idx) training pairs for the chosen pairing.

    "gt" pairs each answered round's question with its ground truth; "h"
    pairs annotated rounds' questions with every human-set member;
    "refsets" does the same with an externally built reference-set file.
    """
    if pairing == "gt":
        return [
            (rnd.question_idx, rnd.gt_answer_idx)
            for rnd in corpus.iter_rounds()
            if rnd.answered
        ]
    if pairing == "h":
        if not annotations:
            raise ContractError("pairing 'h' needs dense annotations")
        pairs = []
        for ann in annotations:
            rnd = corpus.get_round(ann.image_id, ann.round)
            human = refsets_mod.build_human_refset(rnd, ann)
            pairs.extend((rnd.question_idx, a) for a in human.members)
        return pairs
    if pairing == "refsets":
        if not refsets:
            raise ContractError("pairing 'refsets' needs a reference-set list")
        pairs = []
        for s in refsets:
            rnd = corpus.get_round(s.image_id, s.round)
            pairs.extend((rnd.question_idx, a) for a in s.members)
        return pairs
    raise ContractError(f"pairing must be one of {PAIRINGS}, got {pairing!r}")


def fit_cca(corpus: Corpus, vectors: CorpusVectors, pairing: str = "gt",
            k: int | None = None, p: float = 0.0, ridge: float = 1e-8,
            annotations=None, refsets=None):
    """Fit the answer/question CCA model on the selected pairing."""
    pairs = build_pairs(corpus, pairing, annotations=annotations, refsets=refsets)
    if len(pairs) < 2:
        raise DataError(f"pairing {pairing!r} yields {len(pairs)} pairs; need at least 2")
    q_idx = [q for q, _ in pairs]
    a_idx = [a for _, a in pairs]
    model = cca.fit(
        vectors.answers[a_idx], vectors.questions[q_idx], k=k, p=p, ridge=ridge
    )
    model.embedding_fingerprint = vectors.fingerprint
    return model, len(pairs)


def rank_rounds(corpus: Corpus, vectors: CorpusVectors, model: cca.CcaModel):
    """RankRecord per answered round, via candidate/question correlation."""
    records = []
    for rnd in corpus.iter_rounds():
        if not rnd.answered:
            continue
        order, gt_rank = cca.rank_candidates(
            vectors.questions[rnd.question_idx],
            vectors.answers[list(rnd.candidate_idxs)],
            model,
            gt_index=rnd.gt_position(),
            question_view=QUESTION_VIEW,
        )
        records.append(
            RankRecord(
                image_id=rnd.image_id,
                round=rnd.round,
                gt_rank=gt_rank,
                full_ranking=tuple(int(i) for i in order),
            )
        )
    if not records:
        raise DataError("corpus has no answered rounds to rank")
    return records


def rank_eval(corpus: Corpus, vectors: CorpusVectors, model: cca.CcaModel,
              annotations=None):
    """Rank-metric suite, histogram counts, and (if annotations are given)
    the mean NDCG with its undefined-round count."""
    records = rank_rounds(corpus, vectors, model)
    result = {
        "suite": rank_suite(records),
        "histogram": rank_histogram(records).tolist(),
        "n_rounds": len(records),
    }
    if annotations:
        by_key = {(r.image_id, r.round): r for r in records}
        scores = []
        undefined = 0
        missing = 0
        for ann in annotations:
            rec = by_key.get((ann.image_id, ann.round))
            if rec is None:
                missing += 1
                continue
            try:
                scores.append(ndcg(rec.full_ranking, ann.relevance))
            except DataError:
                undefined += 1
        result["ndcg"] = {
            "mean": float(np.mean(scores)) if scores else None,
            "n_scored": len(scores),
            "n_undefined": undefined,
            "n_unmatched": missing,
        }
    return records, result


def human_refsets(corpus: Corpus, annotations):
    out = []
    for ann in annotations:
        rnd = corpus.get_round(ann.image_id, ann.round)
        out.append(refsets_mod.build_human_refset(rnd, ann))
    return out


def build_auto_refsets(corpus: Corpus, vectors: CorpusVectors, model: cca.CcaModel,
                       method: str = "sigma", variant: str = "gt", anchor: str = "gt",
                       bandwidth: float | None = None, n_clusters: int = 5,
                       keys=None):
    """Automatic reference sets for every answered round (or the rounds in
    ``keys``). variant "gt" clusters ground-truth/candidate correlations;
    "question" clusters question/candidate correlations with the given
    anchor."""
    out = []
    for rnd in corpus.iter_rounds():
        if not rnd.answered:
            continue
        if keys is not None and (rnd.image_id, rnd.round) not in keys:
            continue
        if variant == "question":
            refset = refsets_mod.build_from_question(
                rnd, model, vectors.questions[rnd.question_idx], vectors.answers,
                anchor=anchor, method=method, bandwidth=bandwidth, n_clusters=n_clusters,
            )
        elif method == "sigma":
            refset = refsets_mod.build_sigma(rnd, model, vectors.answers)
        elif method == "meanshift":
            refset = refsets_mod.build_meanshift(rnd, model, vectors.answers, bandwidth=bandwidth)
        elif method == "agglomerative":
            refset = refsets_mod.build_agglomerative(rnd, model, vectors.answers, n_clusters=n_clusters)
        else:
            raise ContractError(f"method must be one of {refsets_mod.METHODS}, got {method!r}")
        out.append(refset)
    if not out:
        raise DataError("no rounds eligible for reference-set construction")
    return out


def refset_texts(corpus: Corpus, refset) -> list:
    return [corpus.answer_text(a) for a in refset.members]


def gen_eval(corpus: Corpus, refsets, generated_sets, scorer: ConsensusScorer,
             metrics=None):
    texts_by_key = {s.key(): refset_texts(corpus, s) for s in refsets}
    return k_sample_report(generated_sets, texts_by_key, scorer, metrics=metrics)


def make_scorer(corpus: Corpus, refsets, embedders=None) -> ConsensusScorer:
    """Scorer whose idf corpus is the evaluation split's reference answers
    (one document per member occurrence)."""
    from .consensus import build_idf

    docs = [
        tokenize(corpus.answer_text(a)) for s in refsets for a in s.members
    ]
    return ConsensusScorer(tokenize, idf=build_idf(docs), embedders=embedders)


def baseline_rows(corpus: Corpus, refsets, scorer: ConsensusScorer, metrics=None):
    """Corpus-mean best-case (gamma) and ground-truth-as-candidate rows."""
    from .consensus import gamma_baseline

    metrics = list(metrics) if metrics is not None else scorer.metric_names()
    gamma_sums = np.zeros(len(metrics))
    gt_sums = np.zeros(len(metrics))
    n = n_gt = 0
    for s in refsets:
        texts = refset_texts(corpus, s)
        for col, name in enumerate(metrics):
            gamma_sums[col] += gamma_baseline(texts, scorer, name)
        n += 1
        rnd = corpus.get_round(s.image_id, s.round)
        if rnd.answered:
            gt_text = corpus.answer_text(rnd.gt_answer_idx)
            for col, name in enumerate(metrics):
                gt_sums[col] += scorer.score(name, gt_text, texts)
            n_gt += 1
    if n == 0:
        raise DataError("no reference sets to compute baselines over")
    rows = {"gamma": {m: float(gamma_sums[i] / n) for i, m in enumerate(metrics)}}
    if n_gt:
        rows["gt_answer"] = {m: float(gt_sums[i] / n_gt) for i, m in enumerate(metrics)}
    return rows
