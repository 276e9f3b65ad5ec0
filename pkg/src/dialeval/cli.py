"""Command-line surface wiring the toolkit into reproducible runs.

Exit codes: 0 ok, 1 usage/config, 2 data error, 3 numeric failure. Every
report embeds the config hash, the seed, and the design-decision
fingerprint; reruns with identical config and inputs are byte-identical.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import cca, generator, pipeline, refsets as refsets_mod
from .corpus import audit_relevance, load_dense_annotations, load_dialogues
from .embed import SentenceVectorStore, embed_text, load_embedding_table
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DialevalError,
    NumericError,
)
from .reporting import write_csv, write_json_report


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


@dataclass
class RunConfig:
    """Validated invocation: input paths, parameters, seed, output dir."""

    command: str
    paths: dict
    params: dict
    seed: int
    out_dir: str
    _config: dict = field(default=None, repr=False)

    def validate(self):
        for name, path in self.paths.items():
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"--{name}: path does not exist: {path}")
        os.makedirs(self.out_dir, exist_ok=True)
        return self

    def as_dict(self) -> dict:
        # output locations are excluded so reruns elsewhere hash identically
        if self._config is None:
            self._config = {
                "command": self.command,
                "paths": {k: v for k, v in sorted(self.paths.items())},
                "params": {k: v for k, v in sorted(self.params.items())},
                "seed": self.seed,
            }
        return self._config


def _out_path(config: RunConfig, filename: str) -> str:
    return os.path.join(config.out_dir, filename)


def _emit(config: RunConfig, name: str, results: dict) -> None:
    write_json_report(
        _out_path(config, f"{name}.json"),
        config.command,
        config.as_dict(),
        config.seed,
        results,
    )


# --- shared loading --------------------------------------------------------


def _load_corpus(args):
    return load_dialogues(args.corpus, args.split)


def _load_vectors(args, corpus):
    table = load_embedding_table(args.embeddings, oov_policy=args.oov_policy)
    return table, pipeline.embed_corpus(corpus, table)


def _maybe_annotations(args, corpus):
    if getattr(args, "dense", None):
        return load_dense_annotations(args.dense, corpus)
    return None


# --- commands --------------------------------------------------------------


def cmd_fit(args) -> int:
    config = RunConfig(
        command="fit",
        paths={"corpus": args.corpus, "embeddings": args.embeddings,
               "dense": args.dense, "refsets": args.refsets},
        params={"split": args.split, "pairing": args.pairing, "cca_k": args.cca_k,
                "cca_p": args.cca_p, "ridge": args.ridge, "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    if args.pairing == "h" and not args.dense:
        raise ConfigError("--pairing h requires --dense")
    if args.pairing == "refsets" and not args.refsets:
        raise ConfigError("--pairing refsets requires --refsets")
    corpus = _load_corpus(args)
    _, vectors = _load_vectors(args, corpus)
    annotations = _maybe_annotations(args, corpus)
    refsets = refsets_mod.load_refsets(args.refsets) if args.refsets else None
    model, n_pairs = pipeline.fit_cca(
        corpus, vectors, pairing=args.pairing, k=args.cca_k, p=args.cca_p,
        ridge=args.ridge, annotations=annotations, refsets=refsets,
    )
    cca.save_model(model, args.model)
    _emit(config, "fit_report", {
        "model_path": os.path.abspath(args.model),
        "n_pairs": n_pairs,
        "k": model.k,
        "p": model.p,
        "ridge": model.ridge,
        "view_dims": [model.w1.shape[0], model.w2.shape[0]],
        "eigenvalues": [float(v) for v in model.eigenvalues],
        "embedding_fingerprint": model.embedding_fingerprint,
    })
    return 0


def cmd_audit(args) -> int:
    config = RunConfig(
        command="audit",
        paths={"corpus": args.corpus, "dense": args.dense},
        params={"split": args.split},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    annotations = load_dense_annotations(args.dense, corpus)
    report = audit_relevance(annotations, corpus)
    results = {
        "pct_no_relevance_one": report.pct_no_relevance_one,
        "pct_gt_irrelevant": report.pct_gt_irrelevant,
        "n_annotated": report.n_annotated,
        "n_no_relevance_one": report.n_no_relevance_one,
        "n_gt_irrelevant": report.n_gt_irrelevant,
        "n_with_gt": report.n_with_gt,
    }
    _emit(config, "audit_report", results)
    write_csv(
        _out_path(config, "audit_report.csv"),
        ["measure", "value"],
        sorted(results.items()),
    )
    return 0


def cmd_build_refsets(args) -> int:
    config = RunConfig(
        command="build-refsets",
        paths={"corpus": args.corpus, "embeddings": args.embeddings,
               "model": args.model, "dense": args.dense},
        params={"split": args.split, "method": args.method, "variant": args.variant,
                "anchor": args.anchor, "bandwidth": args.bandwidth,
                "n_clusters": args.n_clusters, "rounds": args.rounds,
                "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    _, vectors = _load_vectors(args, corpus)
    model = cca.load_model(args.model)
    keys = None
    if args.rounds == "annotated":
        if not args.dense:
            raise ConfigError("--rounds annotated requires --dense")
        annotations = load_dense_annotations(args.dense, corpus)
        keys = {(a.image_id, a.round) for a in annotations}
    method = {"agglo": "agglomerative"}.get(args.method, args.method)
    sets = pipeline.build_auto_refsets(
        corpus, vectors, model, method=method, variant=args.variant,
        anchor=args.anchor, bandwidth=args.bandwidth, n_clusters=args.n_clusters,
        keys=keys,
    )
    refsets_mod.save_refsets(sets, _out_path(config, "refsets.json"))
    sizes = [len(s.members) for s in sets]
    corr_means = []
    corr_stds = []
    for s in sets:
        if s.correlations:
            vals = np.fromiter(s.correlations.values(), dtype=np.float64)
            corr_means.append(float(vals.mean()))
            corr_stds.append(float(np.std(vals)))
    _emit(config, "build_refsets_report", {
        "refsets_path": os.path.abspath(_out_path(config, "refsets.json")),
        "n_sets": len(sets),
        "mean_size": float(np.mean(sizes)),
        "std_size": float(np.std(sizes)),
        "mean_correlation": float(np.mean(corr_means)) if corr_means else None,
        "mean_correlation_std": float(np.mean(corr_stds)) if corr_stds else None,
        "n_degenerate": sum(1 for s in sets if s.degenerate),
    })
    return 0


def cmd_verify_refsets(args) -> int:
    config = RunConfig(
        command="verify-refsets",
        paths={"corpus": args.corpus, "dense": args.dense, "refsets": args.refsets},
        params={"split": args.split},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    annotations = load_dense_annotations(args.dense, corpus)
    auto_sets = refsets_mod.load_refsets(args.refsets)
    for s in auto_sets:
        refsets_mod.check_refset_invariants(s, corpus.get_round(s.image_id, s.round))
    human_sets = pipeline.human_refsets(corpus, annotations)
    report = refsets_mod.intersection_metrics(auto_sets, human_sets)
    results = {
        "iou": {"mean": report.iou.mean, "std": report.iou.std},
        "precision": {"mean": report.precision.mean, "std": report.precision.std},
        "recall": {"mean": report.recall.mean, "std": report.recall.std},
        "size": {"mean": report.size.mean, "std": report.size.std},
        "corr_mean": {"mean": report.corr_mean.mean, "std": report.corr_mean.std},
        "corr_std": {"mean": report.corr_std.mean, "std": report.corr_std.std},
        "pct_contains_gt": report.pct_contains_gt,
        "n_joined": report.n_joined,
        "n_missing": report.n_missing,
    }
    _emit(config, "verify_report", results)
    rows = [
        (name, results[name]["mean"], results[name]["std"])
        for name in ("iou", "precision", "recall", "size", "corr_mean", "corr_std")
    ]
    rows.append(("pct_contains_gt", report.pct_contains_gt, 0.0))
    write_csv(_out_path(config, "verify_report.csv"), ["measure", "mean", "std"], rows)
    return 0


def cmd_rank_eval(args) -> int:
    config = RunConfig(
        command="rank-eval",
        paths={"corpus": args.corpus, "embeddings": args.embeddings,
               "model": args.model, "dense": args.dense},
        params={"split": args.split, "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    _, vectors = _load_vectors(args, corpus)
    model = cca.load_model(args.model)
    annotations = _maybe_annotations(args, corpus)
    _, results = pipeline.rank_eval(corpus, vectors, model, annotations=annotations)
    _emit(config, "rank_report", results)
    rows = sorted(results["suite"].items())
    if "ndcg" in results and results["ndcg"]["mean"] is not None:
        rows.append(("ndcg", results["ndcg"]["mean"]))
    write_csv(_out_path(config, "rank_report.csv"), ["metric", "value"], rows)
    return 0


def cmd_histogram(args) -> int:
    config = RunConfig(
        command="histogram",
        paths={"corpus": args.corpus, "embeddings": args.embeddings, "model": args.model},
        params={"split": args.split, "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    _, vectors = _load_vectors(args, corpus)
    model = cca.load_model(args.model)
    records = pipeline.rank_rounds(corpus, vectors, model)
    from .rankmetrics import rank_histogram

    counts = rank_histogram(records)
    _emit(config, "rank_histogram", {
        "counts": counts.tolist(),
        "n_records": int(counts.sum()),
    })
    write_csv(
        _out_path(config, "rank_histogram.csv"),
        ["rank", "count"],
        [(i + 1, int(c)) for i, c in enumerate(counts)],
    )
    return 0


def cmd_generate(args) -> int:
    config = RunConfig(
        command="generate",
        paths={"corpus": args.corpus, "embeddings": args.embeddings,
               "model": args.model, "bank_corpus": args.bank_corpus},
        params={"split": args.split, "bank_split": args.bank_split,
                "k_gen": args.k_gen, "n_neighbours": args.n_neighbours,
                "model_tag": args.model_tag, "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    table, vectors = _load_vectors(args, corpus)
    model = cca.load_model(args.model)

    if args.bank_corpus:
        bank_corpus = load_dialogues(args.bank_corpus, args.bank_split)
        bank_vectors = pipeline.embed_corpus(bank_corpus, table)
    else:
        bank_corpus, bank_vectors = corpus, vectors
    q_idx, a_idx = [], []
    for rnd in bank_corpus.iter_rounds():
        if rnd.answered:
            q_idx.append(rnd.question_idx)
            a_idx.append(rnd.gt_answer_idx)
    bank = generator.build_cca_bank(
        bank_vectors.questions[q_idx],
        [bank_corpus.answers[a] for a in a_idx],
        bank_vectors.answers[a_idx],
        model,
    )

    sets = []
    for rnd in corpus.iter_rounds():
        # derived per-round seed keeps generation order-independent
        round_seed = int(np.random.SeedSequence([args.seed, rnd.image_id, rnd.round]).generate_state(1)[0])
        answers = generator.generate_cca_aq_g(
            vectors.questions[rnd.question_idx], bank, model,
            k=args.k_gen, seed=round_seed, n_neighbours=args.n_neighbours,
        )
        sets.append(generator.GeneratedAnswerSet(
            image_id=rnd.image_id, round=rnd.round,
            generations=tuple(answers), model_tag=args.model_tag,
        ))
    generator.save_generations(sets, _out_path(config, "generations.jsonl"))
    _emit(config, "generate_report", {
        "generations_path": os.path.abspath(_out_path(config, "generations.jsonl")),
        "n_rounds": len(sets),
        "k": args.k_gen,
        "bank_size": len(bank),
    })
    return 0


def cmd_gen_eval(args) -> int:
    config = RunConfig(
        command="gen-eval",
        paths={"corpus": args.corpus, "refsets": args.refsets,
               "generations": args.generations, "embeddings": args.embeddings,
               "sentence_vectors": args.sentence_vectors},
        params={"split": args.split, "metrics": args.metrics,
                "baselines": args.baselines, "oov_policy": args.oov_policy},
        seed=args.seed,
        out_dir=args.out,
    ).validate()
    corpus = _load_corpus(args)
    refsets = refsets_mod.load_refsets(args.refsets)
    generated = generator.load_generations(args.generations)

    embedders = {}
    if args.embeddings:
        table = load_embedding_table(args.embeddings, oov_policy=args.oov_policy)
        embedders["wordavg"] = lambda text: embed_text(text, table).values
    if args.sentence_vectors:
        store = SentenceVectorStore.load(args.sentence_vectors)
        embedders["precomputed"] = store.lookup
    scorer = pipeline.make_scorer(corpus, refsets, embedders=embedders)
    metrics = args.metrics.split(",") if args.metrics else scorer.metric_names()
    for name in metrics:
        if name not in scorer.metric_names():
            raise ConfigError(f"unknown or unavailable metric {name!r}")

    report = pipeline.gen_eval(corpus, refsets, generated, scorer, metrics=metrics)
    results = {
        "metrics": {
            name: {"mu": s.mu, "sigma": s.sigma, "gamma": s.gamma,
                   "higher_better": s.higher_better}
            for name, s in report.metrics.items()
        },
        "n_rounds_scored": report.n_rounds_scored,
        "n_rounds_excluded": report.n_rounds_excluded,
        "n_generations_excluded": report.n_generations_excluded,
        "n_missing_refsets": report.n_missing_refsets,
    }
    baselines = None
    if args.baselines:
        baselines = pipeline.baseline_rows(corpus, refsets, scorer, metrics=metrics)
        results["baselines"] = baselines

    _emit(config, "consensus_report", results)
    header = ["metric", "mu", "sigma", "gamma"]
    if baselines:
        header += ["baseline_gamma", "baseline_gt_answer"]
    rows = []
    for name in metrics:
        s = report.metrics[name]
        row = [name, s.mu, s.sigma, s.gamma]
        if baselines:
            row += [baselines["gamma"][name], baselines.get("gt_answer", {}).get(name, "")]
        rows.append(row)
    write_csv(_out_path(config, "consensus_report.csv"), header, rows)
    return 0


# --- parser ----------------------------------------------------------------


def _add_common(sub, *, embeddings=False, model=False, dense=False):
    sub.add_argument("--corpus", required=True, help="VisDial-format dialogue JSON")
    sub.add_argument("--split", default="val", choices=("train", "val", "test"))
    if embeddings:
        sub.add_argument("--embeddings", required=True, help=".vec-style word embedding file")
        sub.add_argument("--oov-policy", default="zero", choices=("zero", "skip"))
    if model:
        sub.add_argument("--model", required=True, help="CCA model file")
    if dense:
        sub.add_argument("--dense", default=None, help="dense relevance annotations JSON")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True, help="output directory for reports")
    sub.add_argument("--error-json", action="store_true",
                     help="emit failures as JSON on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dialeval", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("fit", help="fit and persist a question/answer CCA model")
    _add_common(p, embeddings=True, model=True, dense=True)
    p.add_argument("--pairing", default="gt", choices=pipeline.PAIRINGS)
    p.add_argument("--refsets", default=None, help="reference sets for --pairing refsets")
    p.add_argument("--cca-k", type=int, default=None)
    p.add_argument("--cca-p", type=float, default=0.0)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("audit", help="relevance-annotation consistency audit")
    _add_common(p)
    p.add_argument("--dense", required=True)
    p.set_defaults(func=cmd_audit)

    p = subs.add_parser("build-refsets", help="construct automatic reference sets")
    _add_common(p, embeddings=True, model=True, dense=True)
    p.add_argument("--method", default="sigma", choices=("sigma", "meanshift", "agglo"))
    p.add_argument("--variant", default="gt", choices=("gt", "question"))
    p.add_argument("--anchor", default="gt", choices=("gt", "max"))
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--n-clusters", type=int, default=5)
    p.add_argument("--rounds", default="all", choices=("all", "annotated"))
    p.set_defaults(func=cmd_build_refsets)

    p = subs.add_parser("verify-refsets", help="intersection metrics against human sets")
    _add_common(p)
    p.add_argument("--dense", required=True)
    p.add_argument("--refsets", required=True, help="automatic reference sets JSON")
    p.set_defaults(func=cmd_verify_refsets)

    p = subs.add_parser("rank-eval", help="MR/MRR/recall@k and NDCG")
    _add_common(p, embeddings=True, model=True, dense=True)
    p.set_defaults(func=cmd_rank_eval)

    p = subs.add_parser("histogram", help="ground-truth rank histogram CSV")
    _add_common(p, embeddings=True, model=True)
    p.set_defaults(func=cmd_histogram)

    p = subs.add_parser("generate", help="sample answers from the correlation generator")
    _add_common(p, embeddings=True, model=True)
    p.add_argument("--bank-corpus", default=None, help="train corpus for the answer bank")
    p.add_argument("--bank-split", default="train", choices=("train", "val", "test"))
    p.add_argument("--k-gen", type=int, default=1)
    p.add_argument("--n-neighbours", type=int, default=generator.DEFAULT_NEIGHBOURS)
    p.add_argument("--model-tag", default="cca-sampler")
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("gen-eval", help="consensus metrics for generated answers")
    _add_common(p)
    p.add_argument("--refsets", required=True)
    p.add_argument("--generations", required=True, help="JSON-lines generations file")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--oov-policy", default="zero", choices=("zero", "skip"))
    p.add_argument("--sentence-vectors", default=None,
                   help="precomputed per-sentence vector file")
    p.add_argument("--metrics", default=None, help="comma-separated metric names")
    p.add_argument("--baselines", action="store_true",
                   help="include best-case and ground-truth baseline rows")
    p.set_defaults(func=cmd_gen_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(args, exc, 1)
    except (DataError, ContractError) as exc:
        return _fail(args, exc, 2)
    except NumericError as exc:
        return _fail(args, exc, 3)


def _fail(args, exc: DialevalError, code: int) -> int:
    if getattr(args, "error_json", False):
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        ) + "\n")
    else:
        sys.stderr.write(f"dialeval: {type(exc).__name__}: {exc}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
