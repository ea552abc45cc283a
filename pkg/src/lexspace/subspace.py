"""Subspace-projection models over frozen embeddings.

The model learns a low-dimensional projection S (s x d, s << d) jointly
with a predictor head, while the embedding matrix itself stays fixed. The
hidden representation of word i is ``h_i = sigmoid(S @ e_i)``; a softmax
head over h gives class probabilities (categorical lexicons), a linear
head ``w . h + b`` gives real scores (continuous lexicons). Training is
plain per-example SGD with the negative log-likelihood (classifier) or
summed squared error (regressor) as the objective.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .embeddings import EmbeddingMatrix
from .lexicons import DatasetSplit
from .metrics import kendall_tau_or_zero, macro_avg_f1

logger = logging.getLogger(__name__)


@dataclass
class SubspaceClassifier:
    """Projection S plus softmax weights W over an ordered class set."""

    S: np.ndarray  # (s, d)
    W: np.ndarray  # (|Y|, s)
    classes: tuple[str, ...]

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        _check_subspace_shape(self.S)
        if self.W.shape != (len(self.classes), self.S.shape[0]):
            raise ValueError(
                f"W shape {self.W.shape} does not match "
                f"({len(self.classes)}, {self.S.shape[0]})"
            )
        if not (np.all(np.isfinite(self.S)) and np.all(np.isfinite(self.W))):
            raise ValueError("parameters must be finite")

    @property
    def subspace_size(self) -> int:
        return self.S.shape[0]

    @property
    def dim(self) -> int:
        return self.S.shape[1]


@dataclass
class SubspaceRegressor:
    """Projection S plus a linear readout (w, b)."""

    S: np.ndarray  # (s, d)
    w: np.ndarray  # (s,)
    b: float

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = float(self.b)
        _check_subspace_shape(self.S)
        if self.w.shape != (self.S.shape[0],):
            raise ValueError(f"w shape {self.w.shape} != ({self.S.shape[0]},)")
        if not (
            np.all(np.isfinite(self.S))
            and np.all(np.isfinite(self.w))
            and math.isfinite(self.b)
        ):
            raise ValueError("parameters must be finite")

    @property
    def subspace_size(self) -> int:
        return self.S.shape[0]

    @property
    def dim(self) -> int:
        return self.S.shape[1]


SubspaceModel = Union[SubspaceClassifier, SubspaceRegressor]


def _check_subspace_shape(S: np.ndarray) -> None:
    if S.ndim != 2:
        raise ValueError("S must be a 2-d (s x d) matrix")
    s, d = S.shape
    if s < 1 or s > d:
        raise ValueError(f"subspace size must satisfy 1 <= s <= d, got s={s}, d={d}")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and optimizer settings for one training run."""

    subspace_size: int
    learning_rate: float
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    init_scale: Union[str, float] = "glorot"

    def __post_init__(self):
        if self.subspace_size < 1:
            raise ValueError("subspace_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")


@dataclass
class TrainTrace:
    """Per-epoch record of a training run."""

    train_losses: list[float] = field(default_factory=list)
    dev_scores: list[float] = field(default_factory=list)
    best_epoch: int = -1
    snapshot_id: str = ""
    initial_train_loss: float = math.nan
    metric: str = ""

    def to_dict(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "dev_scores": self.dev_scores,
            "best_epoch": self.best_epoch,
            "snapshot_id": self.snapshot_id,
            "initial_train_loss": self.initial_train_loss,
            "metric": self.metric,
        }


def sigmoid(a: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp for large |a|.
    out = np.empty_like(a, dtype=np.float64)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def forward_hidden(model: SubspaceModel, E: EmbeddingMatrix, token_index: int) -> np.ndarray:
    """Hidden activation ``sigmoid(S @ e_i)`` for one vocabulary column."""
    if model.S.shape[1] != E.dim:
        raise ValueError(
            f"projection expects dim {model.S.shape[1]}, embeddings have {E.dim}"
        )
    return sigmoid(model.S @ E.column(token_index))


def hidden_batch(model: SubspaceModel, X: np.ndarray) -> np.ndarray:
    """Hidden activations for rows of X, shape (n, s)."""
    return sigmoid(X @ model.S.T)


def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    return P


def classify_proba(
    model: SubspaceClassifier, E: EmbeddingMatrix, token_index: int
) -> np.ndarray:
    """Class probability vector for one token (max-logit-stable softmax)."""
    h = forward_hidden(model, E, token_index)
    z = model.W @ h
    z -= z.max()
    p = np.exp(z)
    return p / p.sum()


def classify_proba_batch(model: SubspaceClassifier, X: np.ndarray) -> np.ndarray:
    return _softmax_rows(hidden_batch(model, X) @ model.W.T)


def predict_value(
    model: SubspaceRegressor, E: EmbeddingMatrix, token_index: int
) -> float:
    """Regression output ``w . h + b`` for one token."""
    h = forward_hidden(model, E, token_index)
    return float(model.w @ h + model.b)


def predict_value_batch(model: SubspaceRegressor, X: np.ndarray) -> np.ndarray:
    return hidden_batch(model, X) @ model.w + model.b


def project_word(model: SubspaceModel, E: EmbeddingMatrix, token: str) -> np.ndarray:
    """The adapted s-dimensional representation of ``token``.

    Raises ``KeyError`` for tokens outside the embedding vocabulary.
    """
    return forward_hidden(model, E, E.position(token))


def _resolve_batch(
    model: SubspaceModel, E: EmbeddingMatrix, batch: Sequence
) -> tuple[np.ndarray, list]:
    if not batch:
        raise ValueError("batch must be non-empty")
    indices = [i for i, _ in batch]
    targets = [y for _, y in batch]
    X = E.columns(indices)
    return X, targets


def nll_loss(model: SubspaceClassifier, E: EmbeddingMatrix, batch: Sequence) -> float:
    """Negative log-likelihood (natural log) summed over (index, class) pairs."""
    X, labels = _resolve_batch(model, E, batch)
    class_pos = {c: k for k, c in enumerate(model.classes)}
    try:
        y = np.array([class_pos[c] for c in labels])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in model classes") from None
    Z = hidden_batch(model, X) @ model.W.T
    m = Z.max(axis=1)
    logsumexp = m + np.log(np.exp(Z - m[:, None]).sum(axis=1))
    return float(np.sum(logsumexp - Z[np.arange(len(y)), y]))


def mse_loss(model: SubspaceRegressor, E: EmbeddingMatrix, batch: Sequence) -> float:
    """Squared error summed over (index, target) pairs."""
    X, targets = _resolve_batch(model, E, batch)
    pred = predict_value_batch(model, X)
    return float(np.sum((np.asarray(targets, dtype=np.float64) - pred) ** 2))


def gradients(model: SubspaceModel, E: EmbeddingMatrix, batch: Sequence) -> dict:
    """Analytic gradients of the summed loss w.r.t. model parameters.

    Returns ``{"S": ..., "W": ...}`` for classifiers and
    ``{"S": ..., "w": ..., "b": ...}`` for regressors. No gradient for the
    embedding matrix exists: E is frozen by contract.
    """
    X, targets = _resolve_batch(model, E, batch)
    H = hidden_batch(model, X)  # (n, s)
    if isinstance(model, SubspaceClassifier):
        class_pos = {c: k for k, c in enumerate(model.classes)}
        y = np.array([class_pos[c] for c in targets])
        P = _softmax_rows(H @ model.W.T)
        P[np.arange(len(y)), y] -= 1.0  # dL/dlogits
        gW = P.T @ H
        dH = P @ model.W
        dA = dH * H * (1.0 - H)
        gS = dA.T @ X
        return {"S": gS, "W": gW}
    pred = H @ model.w + model.b
    g = 2.0 * (pred - np.asarray(targets, dtype=np.float64))  # (n,)
    gw = H.T @ g
    gb = float(np.sum(g))
    dA = (g[:, None] * model.w[None, :]) * H * (1.0 - H)
    gS = dA.T @ X
    return {"S": gS, "w": gw, "b": gb}


def param_digest(model) -> str:
    """Stable content hash of a model's parameters (snapshot identity)."""
    h = hashlib.sha256()
    if isinstance(model, SubspaceClassifier):
        h.update(b"subspace_classifier")
        h.update("\x00".join(model.classes).encode("utf-8"))
        h.update(np.ascontiguousarray(model.S).tobytes())
        h.update(np.ascontiguousarray(model.W).tobytes())
    elif isinstance(model, SubspaceRegressor):
        h.update(b"subspace_regressor")
        h.update(np.ascontiguousarray(model.S).tobytes())
        h.update(np.ascontiguousarray(model.w).tobytes())
        h.update(np.float64(model.b).tobytes())
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return h.hexdigest()


def _init_projection(cfg: TrainConfig, dim: int, rng: np.random.Generator) -> np.ndarray:
    s = cfg.subspace_size
    if cfg.init_scale == "glorot":
        r = math.sqrt(6.0 / (dim + s))
    else:
        r = float(cfg.init_scale)
    return rng.uniform(-r, r, size=(s, dim))


def _resolve_split_part(E: EmbeddingMatrix, part) -> tuple[np.ndarray, list]:
    try:
        positions = [E.position(t) for t, _ in part]
    except KeyError as exc:
        raise ValueError(
            f"token {exc.args[0]!r} has no embedding; drop uncovered words "
            "before splitting"
        ) from None
    return E.columns(positions), [y for _, y in part]


def train(
    model_kind: str,
    E: EmbeddingMatrix,
    split: DatasetSplit,
    cfg: TrainConfig,
    fixed_epochs: Optional[int] = None,
) -> tuple[SubspaceModel, TrainTrace]:
    """Fit a subspace model with per-example SGD and dev-based early stopping.

    ``model_kind`` is ``"classifier"`` or ``"regressor"``. Each epoch
    reshuffles the training order with the seeded generator, then scores the
    dev split (macro-F1 or Kendall tau); the parameters of the best dev
    epoch are returned, stopping early after ``cfg.patience`` epochs without
    improvement. With ``fixed_epochs`` set, exactly that many epochs run and
    the final parameters are returned (used when no dev data is held out).
    Runs are bit-for-bit reproducible for a fixed seed.
    """
    if model_kind not in ("classifier", "regressor"):
        raise ValueError(f"unknown model kind {model_kind!r}")
    if not split.train:
        raise ValueError("training split is empty")
    if cfg.subspace_size > E.dim:
        raise ValueError(
            f"subspace size {cfg.subspace_size} exceeds embedding dim {E.dim}"
        )

    X, raw_targets = _resolve_split_part(E, split.train)
    n = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    S = _init_projection(cfg, E.dim, rng)
    lr = cfg.learning_rate

    classifier = model_kind == "classifier"
    if classifier:
        classes = split.classes
        if classes is None:
            classes = tuple(dict.fromkeys(raw_targets))
        class_pos = {c: k for k, c in enumerate(classes)}
        y = np.array([class_pos[t] for t in raw_targets])
        if len(set(raw_targets)) < 2:
            raise ValueError("classifier training needs at least 2 classes present")
        W = np.zeros((len(classes), cfg.subspace_size))
        model = SubspaceClassifier(S=S, W=W, classes=tuple(classes))
        metric_name = "macro_f1"
    else:
        y = np.asarray(raw_targets, dtype=np.float64)
        w = np.zeros(cfg.subspace_size)
        model = SubspaceRegressor(S=S, w=w, b=0.0)
        metric_name = "kendall_tau"

    have_dev = len(split.dev) > 0
    if have_dev:
        X_dev, dev_targets = _resolve_split_part(E, split.dev)
        if classifier:
            dev_gold = list(dev_targets)
        else:
            dev_gold = np.asarray(dev_targets, dtype=np.float64)

    def train_loss() -> float:
        if classifier:
            P = classify_proba_batch(model, X)
            probs = np.clip(P[np.arange(n), y], 1e-300, None)
            return float(-np.mean(np.log(probs)))
        return float(np.mean((predict_value_batch(model, X) - y) ** 2))

    def dev_score() -> float:
        if classifier:
            pred_idx = np.argmax(classify_proba_batch(model, X_dev), axis=1)
            pred = [model.classes[k] for k in pred_idx]
            return macro_avg_f1(dev_gold, pred, model.classes)
        return kendall_tau_or_zero(predict_value_batch(model, X_dev), dev_gold)

    trace = TrainTrace(metric=metric_name)
    trace.initial_train_loss = train_loss()

    n_epochs = fixed_epochs if fixed_epochs is not None else cfg.max_epochs
    order = np.arange(n)
    best_score = -math.inf
    best_params = _copy_params(model)
    best_epoch = -1
    epochs_since_best = 0

    for epoch in range(n_epochs):
        rng.shuffle(order)
        if classifier:
            _sgd_epoch_classifier(model.S, model.W, X, y, order, lr)
        else:
            _sgd_epoch_regressor(model, X, y, order, lr)

        loss = train_loss()
        trace.train_losses.append(loss)
        if have_dev:
            score = dev_score()
            trace.dev_scores.append(score)
        else:
            score = -loss

        if fixed_epochs is None:
            if score > best_score and math.isfinite(loss):
                best_score = score
                best_params = _copy_params(model)
                best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= cfg.patience:
                    break
            if not math.isfinite(loss):
                logger.warning(
                    "training diverged at epoch %d (loss=%s); stopping", epoch, loss
                )
                break
        else:
            best_params = _copy_params(model)
            best_epoch = epoch

    if best_epoch < 0:  # nothing ever improved; keep the initial parameters
        best_epoch = 0 if trace.train_losses else -1
    _restore_params(model, best_params)
    trace.best_epoch = best_epoch
    trace.snapshot_id = param_digest(model)
    return model, trace


def _sgd_epoch_classifier(S, W, X, y, order, lr) -> None:
    for i in order:
        x = X[i]
        h = sigmoid(S @ x)
        z = W @ h
        z -= z.max()
        p = np.exp(z)
        p /= p.sum()
        p[y[i]] -= 1.0  # now dL/dz
        dh = W.T @ p
        W -= lr * np.outer(p, h)
        da = dh * h * (1.0 - h)
        S -= lr * np.outer(da, x)


def _sgd_epoch_regressor(model, X, y, order, lr) -> None:
    S, w = model.S, model.w
    for i in order:
        x = X[i]
        h = sigmoid(S @ x)
        g = 2.0 * (w @ h + model.b - y[i])
        dh = g * w
        w -= lr * g * h
        model.b -= lr * g
        da = dh * h * (1.0 - h)
        S -= lr * np.outer(da, x)


def _copy_params(model) -> dict:
    if isinstance(model, SubspaceClassifier):
        return {"S": model.S.copy(), "W": model.W.copy()}
    return {"S": model.S.copy(), "w": model.w.copy(), "b": model.b}


def _restore_params(model, params: dict) -> None:
    model.S[...] = params["S"]
    if isinstance(model, SubspaceClassifier):
        model.W[...] = params["W"]
    else:
        model.w[...] = params["w"]
        model.b = params["b"]
