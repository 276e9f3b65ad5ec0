"""Tokenization, word-embedding tables, and the fixed sentence-embedding
policy (mean of the first 16 token vectors) used everywhere downstream.
"""

import unicodedata
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DataError, JoinError, ParseError, ValidationError

MAX_SENTENCE_TOKENS = 16
OOV_POLICIES = ("zero", "skip")


@dataclass
class EmbeddingTable:
    """Word -> vector map with a fixed dimensionality and OOV policy.

    Under ``zero`` (default), out-of-vocabulary tokens contribute a zero
    vector and still count in the averaging denominator; under ``skip``
    they are dropped entirely.
    """

    dim: int
    vocab: dict
    oov_policy: str = "zero"
    duplicate_count: int = 0  # duplicate rows skipped at load time

    def __post_init__(self):
        if self.oov_policy not in OOV_POLICIES:
            raise ValidationError(f"oov_policy {self.oov_policy!r} not in {OOV_POLICIES}")
        if not self.vocab:
            raise DataError("embedding table has an empty vocabulary")


@dataclass(frozen=True)
class SentenceVector:
    values: np.ndarray
    token_count: int


@lru_cache(maxsize=4096)
def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip Unicode punctuation to word boundaries, split.

    Digits are kept ("about 2 years old" stays four tokens). Deterministic;
    the empty string yields an empty list.
    """
    lowered = text.lower()
    cleaned = "".join(" " if _is_punct(ch) else ch for ch in lowered)
    return cleaned.split()


def load_embedding_table(path, oov_policy: str = "zero") -> EmbeddingTable:
    """Load a whitespace-separated ``.vec``-style text embedding file.

    An optional first line "count dim" (two integers) is skipped. All rows
    must share one dimensionality; a mismatch raises ParseError with the
    line number. Duplicate words keep the first occurrence and are counted.
    """
    vocab: dict = {}
    dim = None
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and _all_ints(parts):
                dim = int(parts[1])
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError(f"{path}: row has no vector values", line=lineno)
            if len(values) != dim:
                raise ParseError(
                    f"{path}: expected {dim} values, found {len(values)}", line=lineno
                )
            if word in vocab:
                duplicates += 1
                continue
            try:
                vocab[word] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric vector value", line=lineno) from exc
    if dim is None or not vocab:
        raise DataError(f"{path}: no embedding rows found")
    return EmbeddingTable(dim=dim, vocab=vocab, oov_policy=oov_policy, duplicate_count=duplicates)


def _all_ints(parts) -> bool:
    try:
        return all(int(p) >= 0 for p in parts)
    except ValueError:
        return False


def embed_sentence(tokens, table: EmbeddingTable) -> SentenceVector:
    """Mean of the vectors of the first 16 tokens.

    Padding is implicit: the mean runs over contributing tokens only, so
    pad slots never enter the denominator. An all-empty (or all-skipped)
    input yields the zero vector with token_count 0.
    """
    window = list(tokens)[:MAX_SENTENCE_TOKENS]
    total = np.zeros(table.dim, dtype=np.float64)
    count = 0
    for tok in window:
        vec = table.vocab.get(tok)
        if vec is None:
            if table.oov_policy == "zero":
                count += 1
            continue
        total += vec
        count += 1
    if count == 0:
        return SentenceVector(values=total, token_count=0)
    return SentenceVector(values=total / count, token_count=count)


def embed_text(text: str, table: EmbeddingTable) -> SentenceVector:
    """Tokenize then embed; convenience wrapper used by the pipeline."""
    return embed_sentence(tokenize(text), table)


TABLE_CACHE_VERSION = 1


def save_table_cache(table: EmbeddingTable, path) -> None:
    """Binary cache of a loaded table; much faster to reopen than .vec."""
    words = list(table.vocab)
    matrix = np.stack([table.vocab[w] for w in words])
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array([TABLE_CACHE_VERSION]),
            dim=np.array([table.dim]),
            words=np.array(words, dtype=object),
            matrix=matrix,
        )


def load_table_cache(path, oov_policy: str = "zero") -> EmbeddingTable:
    with np.load(path, allow_pickle=True) as data:
        try:
            version = int(data["version"][0])
            if version != TABLE_CACHE_VERSION:
                raise DataError(f"{path}: unsupported cache version {version}")
            dim = int(data["dim"][0])
            vocab = dict(zip(data["words"].tolist(), data["matrix"]))
        except KeyError as exc:
            raise DataError(f"{path}: not an embedding-table cache") from exc
    return EmbeddingTable(dim=dim, vocab=vocab, oov_policy=oov_policy)


class SentenceVectorStore:
    """Precomputed per-sentence vectors keyed by the exact sentence string.

    Text format: header line "count dim", then one record per line:
    sentence, a tab, then dim whitespace-separated floats. Used to ingest
    externally computed (e.g. contextual) sentence embeddings.
    """

    def __init__(self, dim: int, vectors: dict):
        self.dim = dim
        self.vectors = vectors

    @classmethod
    def load(cls, path) -> "SentenceVectorStore":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2 or not _all_ints(header):
                raise ParseError(f"{path}: expected 'count dim' header", line=1)
            dim = int(header[1])
            vectors = {}
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                sentence, _, rest = line.rstrip("\n").partition("\t")
                values = rest.split()
                if len(values) != dim:
                    raise ParseError(f"{path}: expected {dim} values, found {len(values)}", line=lineno)
                vectors[sentence] = np.array([float(v) for v in values], dtype=np.float64)
        if not vectors:
            raise DataError(f"{path}: no sentence vectors found")
        return cls(dim=dim, vectors=vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vectors)} {self.dim}\n")
            for sentence, vec in self.vectors.items():
                fh.write(sentence + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")

    def lookup(self, sentence: str) -> np.ndarray:
        try:
            return self.vectors[sentence]
        except KeyError:
            raise JoinError(f"no precomputed vector for sentence {sentence!r}") from None
