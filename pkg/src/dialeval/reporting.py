"""Reproducible report emission: config hashing, the design-decision
fingerprint embedded in every report, and atomic JSON/CSV writers.

Reports carry no timestamps, so identical runs produce byte-identical
files.
"""

import hashlib
import json
import os
import tempfile

# conventions that affect published numbers; embedded in every report so
# runs remain comparable
DECISION_FINGERPRINT = {
    "stdev": "population",
    "sigma_band": "closed [cmax - std, cmax]",
    "ndcg_depth": "all scored candidates",
    "sentence_embedding": "mean of first 16 tokens, pads excluded from denominator",
    "meteor": "alpha=0.9 beta=3 gamma=0.5; exact+stem matcher; single-chunk penalty waived",
    "bleu": "epsilon=1e-07 smoothing; closest-length brevity; short orders skipped",
    "cider": "plain tf-idf cosine, mean over references, mean over orders",
    "reference_aggregation": "cider/embedding mean, meteor/bleu best reference",
    "sampler": "with replacement, negative correlations clipped to 0",
    "empty_generation": "whitespace-only strings excluded and counted",
    "ksample_gamma": "best score per round (min for *_l2)",
}


def config_hash(config: dict) -> str:
    """Stable hash of the run configuration (output paths excluded by the
    caller so reruns into different directories stay comparable)."""
    canon = json.dumps(config, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_report(path, command: str, config: dict, seed: int, results: dict) -> None:
    payload = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "decisions": DECISION_FINGERPRINT,
        "results": results,
    }
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".6f")
    return str(value)
