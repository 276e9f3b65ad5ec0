"""Shared fixtures: a deterministic synthetic VisDial-style corpus, dense
annotations, a small word-embedding file, and a fitted CCA model.
"""

import json

import numpy as np
import pytest

from dialeval import cca, pipeline
from dialeval.corpus import load_dense_annotations, load_dialogues
from dialeval.embed import load_embedding_table

WORDS = [
    "yes", "no", "maybe", "one", "two", "three", "four", "red", "blue",
    "white", "black", "green", "man", "woman", "dog", "cat", "car", "train",
    "road", "background", "small", "large", "old", "young", "wooden",
    "metal", "sunny", "cloudy", "raining", "day", "night", "many", "few",
    "table", "chair", "grass", "water", "sky", "tree", "building", "is",
    "the", "it", "how", "what", "color", "are", "there", "any", "in",
]

N_ANSWERS = 120
N_QUESTIONS = 18
N_IMAGES = 6
ROUNDS_PER_IMAGE = 3
EMBED_DIM = 8


def _make_texts(rng):
    answers = []
    seen = set()
    while len(answers) < N_ANSWERS:
        k = int(rng.integers(1, 4))
        text = " ".join(rng.choice(WORDS, size=k, replace=False))
        if text not in seen:
            seen.add(text)
            answers.append(text)
    questions = []
    seen = set()
    while len(questions) < N_QUESTIONS:
        k = int(rng.integers(3, 6))
        text = " ".join(rng.choice(WORDS, size=k, replace=False))
        if text not in seen:
            seen.add(text)
            questions.append(text)
    return questions, answers


def make_corpus_doc(seed: int = 7) -> dict:
    """VisDial-format wire document for the synthetic fixture corpus."""
    rng = np.random.default_rng(seed)
    questions, answers = _make_texts(rng)
    dialogs = []
    q_cursor = 0
    for img in range(N_IMAGES):
        turns = []
        for _ in range(ROUNDS_PER_IMAGE):
            options = rng.permutation(N_ANSWERS)[:100].tolist()
            gt_index = int(rng.integers(0, 100))
            turns.append(
                {
                    "question": q_cursor % N_QUESTIONS,
                    "answer": options[gt_index],
                    "answer_options": options,
                    "gt_index": gt_index,
                }
            )
            q_cursor += 1
        dialogs.append({"image_id": 1000 + img, "dialog": turns})
    return {
        "version": "1.0",
        "split": "val",
        "data": {"questions": questions, "answers": answers, "dialogs": dialogs},
    }


def make_dense_doc(corpus_doc: dict, seed: int = 11) -> list:
    """One annotated round per image; round 1, varied gt relevance."""
    rng = np.random.default_rng(seed)
    records = []
    for i, dlg in enumerate(corpus_doc["data"]["dialogs"]):
        turn = dlg["dialog"][0]
        relevance = [0.0] * 100
        positive = rng.permutation(100)[:12]
        for pos in positive:
            relevance[int(pos)] = float(rng.choice([0.25, 0.5, 0.75, 1.0]))
        # vary the audit cases: some rounds lack a 1.0, some have gt at 0
        if i % 3 == 0:
            relevance = [min(v, 0.75) for v in relevance]
        if i % 2 == 0:
            relevance[turn["gt_index"]] = 0.0
        else:
            relevance[turn["gt_index"]] = max(relevance[turn["gt_index"]], 0.5)
        records.append(
            {"image_id": dlg["image_id"], "round_id": 1, "gt_relevance": relevance}
        )
    return records


def make_vec_text(seed: int = 13, dim: int = EMBED_DIM) -> str:
    rng = np.random.default_rng(seed)
    lines = [f"{len(WORDS)} {dim}"]
    for word in WORDS:
        vec = rng.normal(size=dim)
        lines.append(word + " " + " ".join(f"{v:.6f}" for v in vec))
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixture")
    corpus_doc = make_corpus_doc()
    (root / "corpus.json").write_text(json.dumps(corpus_doc))
    (root / "dense.json").write_text(json.dumps(make_dense_doc(corpus_doc)))
    (root / "vectors.vec").write_text(make_vec_text())
    return root


@pytest.fixture(scope="session")
def corpus(fixture_dir):
    return load_dialogues(fixture_dir / "corpus.json", "val")


@pytest.fixture(scope="session")
def annotations(fixture_dir, corpus):
    return load_dense_annotations(fixture_dir / "dense.json", corpus)


@pytest.fixture(scope="session")
def table(fixture_dir):
    return load_embedding_table(fixture_dir / "vectors.vec")


@pytest.fixture(scope="session")
def vectors(corpus, table):
    return pipeline.embed_corpus(corpus, table)


@pytest.fixture(scope="session")
def model(corpus, vectors):
    fitted, _ = pipeline.fit_cca(corpus, vectors, pairing="gt", ridge=1e-8)
    return fitted


def random_cca_model(rng, n1=6, n2=5, n=40, k=None, p=0.0, ridge=1e-8):
    """Small fitted model on correlated random views, for tests."""
    x = rng.normal(size=(n, n1))
    y = rng.normal(size=(n, n2))
    shared = min(n1, n2)
    y[:, :shared] += 0.6 * x[:, :shared]
    return cca.fit(x, y, k=k, p=p, ridge=ridge), x, y
