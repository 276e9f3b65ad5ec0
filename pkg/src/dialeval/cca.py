"""Two-view canonical correlation analysis via a generalized eigenproblem,
plus projection, train-mean-centred correlation, and candidate ranking.

Conventions: the eigenproblem is A v = lambda B v with A holding only the
inter-view covariance blocks and B the (ridge-regularized) intra-view
blocks, so the retained eigenvalues are the canonical correlations in
[0, 1]. Eigenvectors are B-orthonormal and sign-canonicalized (first
nonzero entry of each stacked eigenvector made positive), which makes the
fit deterministic.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ContractError, DataError, NumericError

MODEL_FORMAT_VERSION = 1


class DegenerateCorrelationWarning(UserWarning):
    """A centred projection had zero norm; the correlation was set to 0."""


@dataclass
class CcaModel:
    """Fitted projections for a paired two-view dataset.

    w1/w2 hold the top-k eigenvector blocks per view (columns are
    components). eigenvalues are sorted non-increasing and clamped to be
    non-negative. train_means are the per-view means of the projected
    training data and implement the centring of the correlation formula.
    """

    w1: np.ndarray
    w2: np.ndarray
    eigenvalues: np.ndarray
    p: float
    train_means: tuple
    ridge: float
    embedding_fingerprint: str = ""
    _scale: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def k(self) -> int:
        return self.w1.shape[1]

    def eig_scale(self) -> np.ndarray:
        """Elementwise eigenvalue weights lambda_j ** p."""
        if self._scale is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.power(self.eigenvalues, self.p)
            if not np.all(np.isfinite(scale)):
                raise NumericError(
                    f"eigenvalue weighting lambda**p is non-finite for p={self.p}"
                )
            self._scale = scale
        return self._scale


def _as_matrix(vectors, name):
    arr = np.asarray(
        [v.values if hasattr(v, "values") else v for v in vectors], dtype=np.float64
    )
    if arr.ndim != 2:
        raise ContractError(f"{name} must be a list of equal-length vectors")
    return arr


def _as_vector(x):
    if hasattr(x, "values"):
        x = x.values
    return np.asarray(x, dtype=np.float64)


def _canonicalize_signs(vecs: np.ndarray) -> np.ndarray:
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.nonzero(col)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def fit(view1, view2, k: int | None = None, p: float = 0.0, ridge: float = 1e-8) -> CcaModel:
    """Fit CCA on paired observation lists.

    Covariances use 1/(N-1) normalization; the intra-view blocks get
    ridge * I added for conditioning. The top-k generalized eigenpairs are
    retained, eigenvalues clamped at zero, and per-view train projection
    means stored for later centring.
    """
    X = _as_matrix(view1, "view1")
    Y = _as_matrix(view2, "view2")
    if X.shape[0] != Y.shape[0]:
        raise ContractError(f"paired views differ in length: {X.shape[0]} vs {Y.shape[0]}")
    n = X.shape[0]
    if n < 2:
        raise ContractError("need at least 2 paired observations")
    n1, n2 = X.shape[1], Y.shape[1]
    if k is None:
        k = min(n1, n2)
    if not 1 <= k <= min(n1, n2):
        raise ContractError(f"k={k} outside [1, {min(n1, n2)}]")
    if ridge < 0:
        raise ContractError("ridge must be >= 0")

    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    cxx = Xc.T @ Xc / (n - 1) + ridge * np.eye(n1)
    cyy = Yc.T @ Yc / (n - 1) + ridge * np.eye(n2)
    cxy = Xc.T @ Yc / (n - 1)

    dim = n1 + n2
    a = np.zeros((dim, dim))
    a[:n1, n1:] = cxy
    a[n1:, :n1] = cxy.T
    b = np.zeros((dim, dim))
    b[:n1, :n1] = cxx
    b[n1:, n1:] = cyy

    try:
        eigvals, eigvecs = scipy.linalg.eigh(a, b)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NumericError(
            "intra-view covariance is singular; refit with ridge > 0"
        ) from exc
    order = np.argsort(eigvals)[::-1][:k]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = _canonicalize_signs(eigvecs[:, order].copy())

    model = CcaModel(
        w1=eigvecs[:n1],
        w2=eigvecs[n1:],
        eigenvalues=eigvals,
        p=float(p),
        train_means=(np.zeros(k), np.zeros(k)),
        ridge=float(ridge),
    )
    model.train_means = (
        _project_rows(X, 1, model).mean(axis=0),
        _project_rows(Y, 2, model).mean(axis=0),
    )
    return model


def _view_matrix(model: CcaModel, view: int) -> np.ndarray:
    if view == 1:
        return model.w1
    if view == 2:
        return model.w2
    raise ContractError(f"view must be 1 or 2, got {view!r}")


def _project_rows(rows: np.ndarray, view: int, model: CcaModel) -> np.ndarray:
    w = _view_matrix(model, view)
    if rows.shape[-1] != w.shape[0]:
        raise ContractError(
            f"view {view} expects dimensionality {w.shape[0]}, got {rows.shape[-1]}"
        )
    return (rows @ w) * model.eig_scale()


def project(x, view: int, model: CcaModel) -> np.ndarray:
    """Project a vector of the given view: diag(lambda**p) @ W_view.T @ x."""
    vec = _as_vector(x)
    if vec.ndim != 1:
        raise ContractError("project expects a single vector; use project_many for batches")
    return _project_rows(vec[None, :], view, model)[0]


def project_many(xs, view: int, model: CcaModel) -> np.ndarray:
    """Project a stack of vectors (rows) of the given view."""
    return _project_rows(_as_matrix(xs, "xs"), view, model)


def center(projected, view: int, model: CcaModel) -> np.ndarray:
    """Subtract the stored train projection mean of the given view."""
    return np.asarray(projected) - model.train_means[view - 1]


def correlate(x1, x2, model: CcaModel, views=(1, 2)) -> float:
    """Cosine of the train-mean-centred projections of x1 and x2.

    Returns 0.0 (with a DegenerateCorrelationWarning) if either centred
    projection has zero norm.
    """
    p1 = center(project(x1, views[0], model), views[0], model)
    p2 = center(project(x2, views[1], model), views[1], model)
    n1 = np.linalg.norm(p1)
    n2 = np.linalg.norm(p2)
    if n1 == 0.0 or n2 == 0.0:
        warnings.warn(
            "zero-norm centred projection; correlation set to 0",
            DegenerateCorrelationWarning,
            stacklevel=2,
        )
        return 0.0
    return float(p1 @ p2 / (n1 * n2))


def correlate_many(x, ys, model: CcaModel, views=(1, 2)) -> np.ndarray:
    """Correlations of one view-``views[0]`` vector against rows of ys
    (view ``views[1]``). Zero-norm rows correlate to 0."""
    p = center(project(x, views[0], model), views[0], model)
    q = center(project_many(ys, views[1], model), views[1], model)
    pn = np.linalg.norm(p)
    qn = np.linalg.norm(q, axis=1)
    if pn == 0.0:
        warnings.warn(
            "zero-norm centred projection; correlations set to 0",
            DegenerateCorrelationWarning,
            stacklevel=2,
        )
        return np.zeros(q.shape[0])
    out = q @ p
    nonzero = qn > 0.0
    out[nonzero] /= pn * qn[nonzero]
    out[~nonzero] = 0.0
    return out


def rank_candidates(question, candidates, model: CcaModel, gt_index: int | None = None,
                    question_view: int = 2):
    """Sort candidates by descending correlation with the question.

    Ties keep the original candidate order (stable). Returns the ordering
    as positions into ``candidates`` plus the 1-based rank of gt_index
    (None when no ground truth is designated).
    """
    answer_view = 1 if question_view == 2 else 2
    corrs = correlate_many(question, candidates, model, views=(question_view, answer_view))
    order = np.argsort(-corrs, kind="stable")
    gt_rank = None
    if gt_index is not None:
        if not 0 <= gt_index < len(corrs):
            raise ContractError(f"gt_index {gt_index} outside the candidate list")
        gt_rank = int(np.nonzero(order == gt_index)[0][0]) + 1
    return order, gt_rank


def save_model(model: CcaModel, path) -> None:
    """Persist a fitted model; reload reproduces correlate() bit-exactly."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "p": model.p,
        "ridge": model.ridge,
        "embedding_fingerprint": model.embedding_fingerprint,
    }
    with open(path, "wb") as fh:  # keep the exact path (np.savez appends .npz otherwise)
        np.savez(
            fh,
            w1=model.w1,
            w2=model.w2,
            eigenvalues=model.eigenvalues,
            train_mean1=model.train_means[0],
            train_mean2=model.train_means[1],
            meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
        )


def load_model(path) -> CcaModel:
    with np.load(path) as data:
        try:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            model = CcaModel(
                w1=data["w1"],
                w2=data["w2"],
                eigenvalues=data["eigenvalues"],
                p=float(meta["p"]),
                train_means=(data["train_mean1"], data["train_mean2"]),
                ridge=float(meta["ridge"]),
                embedding_fingerprint=meta.get("embedding_fingerprint", ""),
            )
        except KeyError as exc:
            raise DataError(f"{path}: not a dialeval model file") from exc
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported model format version {meta.get('format_version')}"
        )
    return model
