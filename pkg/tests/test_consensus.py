"""Overlap metrics, embedding distances, baselines, and k-sample stats."""

import math

import numpy as np
import pytest

from dialeval.consensus import (
    ConsensusScorer,
    EmptyCandidateWarning,
    GeneratedAnswerSet,
    bleu,
    build_idf,
    cider,
    embedding_distance,
    gamma_baseline,
    k_sample_report,
    meteor,
    ngram_counts,
    round_sample_stats,
)
from dialeval.embed import tokenize
from dialeval.errors import ContractError, DataError, JoinError
from dialeval.stem import stem


def toks(*sentences):
    return [tokenize(s) for s in sentences]


@pytest.fixture(scope="module")
def idf():
    docs = toks(
        "way in the background",
        "there are few people way off in background",
        "i see a few in the background",
        "no people",
        "it s raw",
        "raw",
        "fairly large",
        "pretty large",
    )
    return build_idf(docs)


class TestIdf:
    def test_single_document_idf_zero(self):
        table = build_idf(toks("yes it is"))
        assert table.idf(("yes",)) == 0.0
        assert table.idf(("yes", "it")) == 0.0

    def test_two_disjoint_documents(self):
        table = build_idf(toks("yes", "no"))
        assert table.idf(("yes",)) == pytest.approx(math.log(2))
        assert table.idf(("no",)) == pytest.approx(math.log(2))

    def test_matches_brute_force_recount(self, idf):
        docs = toks(
            "way in the background",
            "there are few people way off in background",
            "i see a few in the background",
            "no people",
            "it s raw",
            "raw",
            "fairly large",
            "pretty large",
        )
        for n in range(1, 5):
            grams = {g for d in docs for g in ngram_counts(d, n)}
            for g in grams:
                df = sum(1 for d in docs if g in ngram_counts(d, n))
                assert idf.df[n][g] == df
                assert idf.idf(g) == pytest.approx(math.log(len(docs) / df))

    def test_unseen_gram_counts_as_one_document(self, idf):
        assert idf.idf(("zebra",)) == pytest.approx(math.log(idf.n_docs))

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            build_idf([])


class TestCider:
    def test_identity_scores_one_for_every_order(self, idf):
        cand = tokenize("way in the background")
        for n in range(1, 5):
            assert cider(cand, [cand], idf, n=n) == pytest.approx(1.0)

    def test_disjoint_vocabulary_scores_zero(self, idf):
        assert cider(tokenize("zebra stripes"), toks("no people"), idf, n=4) == 0.0

    def test_empty_candidate_flagged(self, idf):
        with pytest.warns(EmptyCandidateWarning):
            assert cider([], toks("no people"), idf, n=2) == 0.0

    def test_average_over_references_and_orders(self, idf):
        # hand oracle: unigram-only cosine averaged over two references,
        # then averaged with the bigram result
        cand = tokenize("no people")
        refs = toks("no people", "fairly large")

        def cosine(a, b, n):
            ca, cb = ngram_counts(a, n), ngram_counts(b, n)
            keys = set(ca) | set(cb)
            va = np.array([ca.get(g, 0) * idf.idf(g) for g in keys])
            vb = np.array([cb.get(g, 0) * idf.idf(g) for g in keys])
            na, nb = np.linalg.norm(va), np.linalg.norm(vb)
            return float(va @ vb / (na * nb)) if na and nb else 0.0

        expected_n1 = (cosine(cand, refs[0], 1) + cosine(cand, refs[1], 1)) / 2
        expected_n2 = (cosine(cand, refs[0], 2) + cosine(cand, refs[1], 2)) / 2
        assert cider(cand, refs, idf, n=1) == pytest.approx(expected_n1)
        assert cider(cand, refs, idf, n=2) == pytest.approx((expected_n1 + expected_n2) / 2)

    def test_bounded_by_one(self, idf):
        rng = np.random.default_rng(0)
        words = ["yes", "no", "raw", "large", "people", "background", "way"]
        for _ in range(200):
            cand = rng.choice(words, size=rng.integers(1, 6)).tolist()
            refs = [rng.choice(words, size=rng.integers(1, 6)).tolist() for _ in range(3)]
            value = cider(cand, refs, idf, n=4)
            assert 0.0 <= value <= 1.0 + 1e-12


class TestMeteor:
    def test_identity_is_exactly_one_even_single_word(self):
        assert meteor(["raw"], [["raw"]]) == 1.0
        assert meteor(tokenize("way in the background"), toks("way in the background")) == 1.0

    def test_disjoint_vocabulary_is_zero(self):
        assert meteor(["zebra"], toks("no people")) == 0.0

    def test_swapped_words_penalized(self):
        # two matches in two chunks: F = 1, penalty = 0.5 * (2/2)^3
        assert meteor(["people", "no"], toks("no people")) == pytest.approx(0.5)

    def test_stem_stage_matches_inflections(self):
        assert stem("playing") == stem("played")
        score = meteor(["playing"], [["played"]])
        assert score == 1.0  # single chunk, full precision and recall

    def test_partial_overlap_hand_oracle(self):
        # cand "it s raw" vs ref "raw": 1 match, P=1/3, R=1, single chunk
        p, r = 1 / 3, 1.0
        fmean = p * r / (0.9 * p + 0.1 * r)
        assert meteor(tokenize("it s raw"), toks("raw")) == pytest.approx(fmean)

    def test_best_reference_wins(self):
        refs = toks("no people", "it s raw")
        assert meteor(tokenize("it s raw"), refs) == 1.0

    def test_empty_candidate_flagged(self):
        with pytest.warns(EmptyCandidateWarning):
            assert meteor([], toks("no people")) == 0.0


class TestBleu:
    def test_identity_is_one_for_every_order(self):
        cand = tokenize("there are few people")
        for n in range(1, 5):
            assert bleu(cand, [cand], n=n) == 1.0
        assert bleu(["raw"], [["raw"]], n=4) == 1.0

    def test_brevity_penalty_hand_oracle(self):
        # full precision, candidate 2 tokens vs reference 3:
        # BLEU-2 = exp(1 - 3/2)
        value = bleu(["no", "people"], toks("no people here"), n=2)
        assert value == pytest.approx(math.exp(1.0 - 3.0 / 2.0))

    def test_clipping_against_best_reference(self):
        # "no no" clips to the single "no" in each reference: p1 = 1/2
        value = bleu(["no", "no"], toks("no people"), n=1)
        assert value == pytest.approx(0.5)

    def test_closest_reference_length_breaks_ties_short(self):
        # candidate length 2; references of length 1 and 3 tie on distance
        # and the shorter one wins, so no brevity penalty applies
        value = bleu(["no", "people"], toks("no", "no people sir"), n=1)
        assert value == 1.0

    def test_smoothing_keeps_score_positive(self):
        # shared unigram but no shared bigram
        value = bleu(["no", "zebra"], toks("no people"), n=2)
        assert 0.0 < value < 0.1

    def test_empty_candidate_flagged(self):
        with pytest.warns(EmptyCandidateWarning):
            assert bleu([], toks("no people"), n=4) == 0.0


class TestEmbeddingDistance:
    @staticmethod
    def embedder(mapping):
        return lambda text: np.asarray(mapping[text], dtype=np.float64)

    def test_identity(self):
        emb = self.embedder({"yes": [1.0, 0.0]})
        out = embedding_distance("yes", ["yes"], emb)
        assert out["l2"] == 0.0 and out["cs"] == 1.0

    def test_orthogonal_unit_vectors(self):
        emb = self.embedder({"yes": [1.0, 0.0], "no": [0.0, 1.0]})
        out = embedding_distance("yes", ["no"], emb)
        assert out["l2"] == pytest.approx(math.sqrt(2.0))
        assert out["cs"] == 0.0

    def test_mean_over_references(self):
        emb = self.embedder({"a": [1.0, 0.0], "b": [0.0, 2.0], "c": [1.0, 0.0]})
        out = embedding_distance("a", ["b", "c"], emb)
        assert out["l2"] == pytest.approx((math.sqrt(5.0) + 0.0) / 2)
        assert out["cs"] == pytest.approx((0.0 + 1.0) / 2)

    def test_missing_precomputed_vector_raises(self):
        from dialeval.embed import SentenceVectorStore

        store = SentenceVectorStore(dim=2, vectors={"yes": np.array([1.0, 0.0])})
        with pytest.raises(JoinError, match="unknown sentence"):
            embedding_distance("unknown sentence", ["yes"], store.lookup)


def scorer_with(idf, embeddings=None):
    embedders = {}
    if embeddings:
        embedders["wordavg"] = lambda text: np.asarray(embeddings[text], dtype=np.float64)
    return ConsensusScorer(tokenize, idf=idf, embedders=embedders)


class TestGammaBaseline:
    def test_singleton_is_self_score(self, idf):
        scorer = scorer_with(idf)
        assert gamma_baseline(["raw"], scorer, "meteor") == 1.0
        assert gamma_baseline(["raw"], scorer, "bleu4") == 1.0
        self_cider = scorer.score("cider1", "raw", ["raw"])
        assert gamma_baseline(["raw"], scorer, "cider1") == pytest.approx(self_cider)

    def test_two_member_brute_force(self, idf):
        scorer = scorer_with(idf)
        refs = ["no people", "fairly large"]
        for metric in ("cider2", "meteor", "bleu1"):
            expected = max(scorer.score(metric, r, refs) for r in refs)
            assert gamma_baseline(refs, scorer, metric) == pytest.approx(expected)

    def test_l2_takes_minimum(self, idf):
        embeddings = {"a": [1.0, 0.0], "b": [3.0, 0.0]}
        scorer = scorer_with(idf, embeddings)
        # a: mean l2 = (0 + 2)/2 = 1; b likewise; equal here, so use an
        # asymmetric set
        embeddings["c"] = [1.0, 0.5]
        expected = min(
            scorer.score("wordavg_l2", m, ["a", "b", "c"]) for m in ("a", "b", "c")
        )
        assert gamma_baseline(["a", "b", "c"], scorer, "wordavg_l2") == pytest.approx(expected)

    def test_meteor_monotone_in_set_growth(self, idf):
        # for the best-reference metric, growing the set can only help
        scorer = scorer_with(idf)
        small = ["no people"]
        large = ["no people", "fairly large", "raw"]
        assert gamma_baseline(large, scorer, "meteor") >= gamma_baseline(small, scorer, "meteor")

    def test_meteor_gamma_is_one_when_set_self_matches(self, idf):
        scorer = scorer_with(idf)
        assert gamma_baseline(["no people", "raw", "pretty large"], scorer, "meteor") == 1.0


class TestKSample:
    def test_single_generation(self, idf):
        scorer = scorer_with(idf)
        stats, dropped = round_sample_stats(["raw"], ["raw"], scorer, ["meteor"])
        mu, sigma, gamma = stats["meteor"]
        assert (mu, sigma, gamma) == (1.0, 0.0, 1.0)
        assert dropped == 0

    def test_three_scores_population_std(self):
        scores = np.array([0.2, 0.4, 0.6])
        assert float(np.std(scores)) == pytest.approx(0.163299, abs=1e-6)

        class FakeScorer:
            calls = iter([0.2, 0.4, 0.6])

            @staticmethod
            def higher_better(name):
                return True

            def score(self, name, cand, refs):
                return next(self.calls)

        stats, _ = round_sample_stats(["a", "b", "c"], ["x"], FakeScorer(), ["m"])
        mu, sigma, gamma = stats["m"]
        assert mu == pytest.approx(0.4)
        assert gamma == pytest.approx(0.6)
        assert sigma == pytest.approx(0.163299, abs=1e-6)

    def test_empty_generations_excluded_and_counted(self, idf):
        scorer = scorer_with(idf)
        stats, dropped = round_sample_stats(["raw", "", "  "], ["raw"], scorer, ["meteor"])
        assert dropped == 2
        assert stats["meteor"][0] == 1.0

    def test_all_empty_round_excluded(self, idf):
        scorer = scorer_with(idf)
        stats, dropped = round_sample_stats(["", ""], ["raw"], scorer, ["meteor"])
        assert stats is None and dropped == 2

    def test_corpus_aggregation(self, idf):
        scorer = scorer_with(idf)
        sets = [
            GeneratedAnswerSet(image_id=1, round=1, generations=("raw", "")),
            GeneratedAnswerSet(image_id=2, round=1, generations=("", "")),
            GeneratedAnswerSet(image_id=3, round=1, generations=("no people",)),
            GeneratedAnswerSet(image_id=9, round=9, generations=("raw",)),  # no refset
        ]
        refs = {(1, 1): ["raw"], (2, 1): ["raw"], (3, 1): ["no people"]}
        report = k_sample_report(sets, refs, scorer, metrics=["meteor", "bleu1"])
        assert report.n_rounds_scored == 2
        assert report.n_rounds_excluded == 1
        assert report.n_generations_excluded == 3
        assert report.n_missing_refsets == 1
        assert report.metrics["meteor"].mu == 1.0
        assert report.metrics["meteor"].sigma == 0.0
        assert report.metrics["meteor"].gamma == 1.0

    def test_gamma_at_least_mu_for_similarity_metrics(self, idf):
        scorer = scorer_with(idf)
        rng = np.random.default_rng(1)
        pool = ["no people", "fairly large", "raw", "way in the background", "pretty large"]
        for _ in range(30):
            gens = rng.choice(pool, size=rng.integers(1, 5)).tolist()
            refs = rng.choice(pool, size=rng.integers(1, 4)).tolist()
            stats, _ = round_sample_stats(gens, refs, scorer, ["cider4", "meteor", "bleu2"])
            for name, (mu, sigma, gamma) in stats.items():
                assert gamma >= mu - 1e-12
                assert sigma >= 0.0


class TestScorer:
    def test_metric_names(self, idf):
        scorer = scorer_with(idf, {"yes": [1.0]})
        names = scorer.metric_names()
        assert "cider1" in names and "bleu4" in names and "meteor" in names
        assert "wordavg_l2" in names and "wordavg_cs" in names

    def test_unknown_metric(self, idf):
        with pytest.raises(ContractError):
            scorer_with(idf).score("rouge", "yes", ["yes"])

    def test_range_bounds_fuzz(self, idf):
        rng = np.random.default_rng(2)
        words = ["yes", "no", "raw", "large", "people", "background", "way", "s", "it"]
        embeddings = {w: rng.normal(size=4).tolist() for w in words}

        def embed(text):
            parts = [embeddings[t] for t in tokenize(text) if t in embeddings]
            return np.mean(parts, axis=0) if parts else np.zeros(4)

        scorer = ConsensusScorer(tokenize, idf=idf, embedders={"wordavg": embed})
        for _ in range(100):
            cand = " ".join(rng.choice(words, size=rng.integers(1, 5)))
            refs = [" ".join(rng.choice(words, size=rng.integers(1, 5))) for _ in range(2)]
            for n in range(1, 5):
                assert 0.0 <= scorer.score(f"cider{n}", cand, refs) <= 1.0 + 1e-12
                assert 0.0 <= scorer.score(f"bleu{n}", cand, refs) <= 1.0 + 1e-12
            assert 0.0 <= scorer.score("meteor", cand, refs) <= 1.0
            assert -1.0 - 1e-12 <= scorer.score("wordavg_cs", cand, refs) <= 1.0 + 1e-12
            assert scorer.score("wordavg_l2", cand, refs) >= 0.0
