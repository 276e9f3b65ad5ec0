"""Baseline answer producers: a correlation-proportional sampler over
nearest-neighbour train answers, and a raw-embedding nearest-neighbour
candidate ranker.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import cca
from .consensus import GeneratedAnswerSet
from .errors import ContractError, SchemaError

DEFAULT_NEIGHBOURS = 100


class UniformFallbackWarning(UserWarning):
    """All neighbour correlations were non-positive; sampled uniformly."""


@dataclass
class AnswerBank:
    """Aligned train questions and their ground-truth answers.

    question_vectors hold centred projections for the correlation sampler
    (kind="cca") or raw sentence embeddings for the nearest-neighbour
    ranker (kind="raw").
    """

    question_vectors: np.ndarray
    answer_strings: tuple
    answer_vectors: np.ndarray
    kind: str = "cca"

    def __post_init__(self):
        n = self.question_vectors.shape[0]
        if n == 0:
            raise ContractError("answer bank must be non-empty")
        if len(self.answer_strings) != n or self.answer_vectors.shape[0] != n:
            raise ContractError("bank questions and answers must align 1:1")

    def __len__(self):
        return self.question_vectors.shape[0]


def build_cca_bank(question_vectors, answer_strings, answer_vectors,
                   model: cca.CcaModel) -> AnswerBank:
    """Bank for the sampler: stores centred question projections."""
    projected = cca.center(cca.project_many(question_vectors, 2, model), 2, model)
    return AnswerBank(
        question_vectors=projected,
        answer_strings=tuple(answer_strings),
        answer_vectors=np.asarray(answer_vectors, dtype=np.float64),
        kind="cca",
    )


def build_raw_bank(question_vectors, answer_strings, answer_vectors) -> AnswerBank:
    """Bank for the nearest-neighbour ranker: raw sentence embeddings."""
    return AnswerBank(
        question_vectors=np.asarray(question_vectors, dtype=np.float64),
        answer_strings=tuple(answer_strings),
        answer_vectors=np.asarray(answer_vectors, dtype=np.float64),
        kind="raw",
    )


def _bank_correlations(question, bank: AnswerBank, model: cca.CcaModel) -> np.ndarray:
    """Cosine between the centred projected test question and each stored
    (already centred, projected) bank question."""
    q = cca.center(cca.project(question, 2, model), 2, model)
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(bank.question_vectors, axis=1)
    out = bank.question_vectors @ q
    ok = (norms > 0) & (qn > 0)
    out[ok] /= qn * norms[ok]
    out[~ok] = 0.0
    return out


def generate_cca_aq_g(question, bank: AnswerBank, model: cca.CcaModel, k: int,
                      seed: int, n_neighbours: int = DEFAULT_NEIGHBOURS) -> list:
    """Sample k answers from the nearest-neighbour pseudo-candidate set.

    The n_neighbours most question-correlated train questions contribute
    their ground-truth answers; sampling is with replacement, proportional
    to max(correlation, 0). If every correlation is non-positive the draw
    falls back to uniform (warned). Fixed seed gives a fixed sequence.
    """
    if bank.kind != "cca":
        raise ContractError("generate_cca_aq_g needs a bank built with build_cca_bank")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    corrs = _bank_correlations(question, bank, model)
    n_neighbours = min(n_neighbours, len(bank))
    neighbours = np.argsort(-corrs, kind="stable")[:n_neighbours]
    weights = np.clip(corrs[neighbours], 0.0, None)
    total = weights.sum()
    if total == 0.0:
        warnings.warn(
            "all neighbour correlations non-positive; sampling uniformly",
            UniformFallbackWarning,
            stacklevel=2,
        )
        probs = np.full(len(neighbours), 1.0 / len(neighbours))
    else:
        probs = weights / total
    rng = np.random.default_rng(seed)
    draws = rng.choice(len(neighbours), size=k, replace=True, p=probs)
    return [bank.answer_strings[neighbours[i]] for i in draws]


def rank_nn_aq(question, candidates, bank: AnswerBank, k_nn: int,
               gt_index: int | None = None):
    """Rank candidates by L2 distance to a canonical answer vector.

    The canonical vector is the mean answer embedding of the k_nn train
    questions nearest (L2, raw embeddings) to the test question. Returns
    the stable ascending-distance ordering plus the 1-based rank of
    gt_index.
    """
    if bank.kind != "raw":
        raise ContractError("rank_nn_aq needs a bank built with build_raw_bank")
    if k_nn < 1:
        raise ContractError(f"k_nn must be >= 1, got {k_nn}")
    if k_nn > len(bank):
        warnings.warn(
            f"k_nn={k_nn} exceeds bank size {len(bank)}; clamping", UserWarning, stacklevel=2
        )
        k_nn = len(bank)
    q = np.asarray(question.values if hasattr(question, "values") else question, dtype=np.float64)
    dists = np.linalg.norm(bank.question_vectors - q, axis=1)
    nearest = np.argsort(dists, kind="stable")[:k_nn]
    canonical = bank.answer_vectors[nearest].mean(axis=0)
    cand = np.asarray(
        [c.values if hasattr(c, "values") else c for c in candidates], dtype=np.float64
    )
    cand_dists = np.linalg.norm(cand - canonical, axis=1)
    order = np.argsort(cand_dists, kind="stable")
    gt_rank = None
    if gt_index is not None:
        gt_rank = int(np.nonzero(order == gt_index)[0][0]) + 1
    return order, gt_rank


def save_generations(sets, path) -> None:
    """Write generated answer sets as JSON lines
    {image_id, round_id, generations, model_tag}."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in sets:
            rec = {
                "image_id": s.image_id,
                "round_id": s.round,
                "generations": list(s.generations),
            }
            if s.model_tag:
                rec["model_tag"] = s.model_tag
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_generations(path) -> list:
    sets = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                generations = tuple(str(g) for g in rec["generations"])
                if not generations:
                    raise ValueError("empty generations list")
                sets.append(
                    GeneratedAnswerSet(
                        image_id=int(rec["image_id"]),
                        round=int(rec["round_id"]),
                        generations=generations,
                        model_tag=str(rec.get("model_tag", "")),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}: bad generations record at line {lineno}") from exc
    return sets
