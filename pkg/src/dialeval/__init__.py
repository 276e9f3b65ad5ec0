"""dialeval: batch evaluation toolkit for generative visual-dialogue models.

Fits a question/answer CCA model, densifies sparse human relevance
annotations into per-question reference answer sets, and scores generated
answers against those sets with overlap and embedding-distance consensus
metrics, alongside the legacy rank-based suite.
"""

__version__ = "0.1.0"

from .cca import CcaModel, correlate, fit, project, rank_candidates
from .consensus import (
    ConsensusScorer,
    GeneratedAnswerSet,
    bleu,
    build_idf,
    cider,
    embedding_distance,
    gamma_baseline,
    k_sample_report,
    meteor,
)
from .corpus import (
    Corpus,
    DenseAnnotation,
    DialogueRound,
    audit_relevance,
    load_dense_annotations,
    load_dialogues,
)
from .embed import EmbeddingTable, SentenceVector, embed_sentence, load_embedding_table, tokenize
from .generator import AnswerBank, generate_cca_aq_g, rank_nn_aq
from .rankmetrics import RankRecord, ndcg, rank_histogram, rank_suite
from .refsets import (
    IntersectionReport,
    ReferenceSet,
    build_agglomerative,
    build_from_question,
    build_human_refset,
    build_meanshift,
    build_sigma,
    correlation_cluster_audit,
    intersection_metrics,
)
