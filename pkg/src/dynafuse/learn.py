"""Linear softmax classifier trained with Adam, one model per stream.

Features are standardized per dimension over the training split (the
statistics ride along in the model), minibatches are shuffled with a
seeded generator, and the parameters with the best validation accuracy
are kept (earliest epoch on ties).  Everything is deterministic given
data order, seed and config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 80
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class LinearModel:
    """Affine scores over standardized features: softmax(W (x-mu)/sd + b)."""

    weights: np.ndarray  # (num_classes, d)
    bias: np.ndarray  # (num_classes,)
    num_classes: int
    dim: int
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        mu = np.asarray(self.feature_mean, dtype=np.float64)
        sd = np.asarray(self.feature_scale, dtype=np.float64)
        if self.num_classes < 2 or self.dim < 1:
            raise ValueError("need num_classes >= 2 and dim >= 1")
        if w.shape != (self.num_classes, self.dim) or b.shape != (self.num_classes,):
            raise ValueError("weight/bias shapes inconsistent with num_classes and dim")
        if mu.shape != (self.dim,) or sd.shape != (self.dim,):
            raise ValueError("standardization vectors must have shape (dim,)")
        for name, arr in (("weights", w), ("bias", b), ("mean", mu), ("scale", sd)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        for key, arr in (
            ("weights", w),
            ("bias", b),
            ("feature_mean", mu),
            ("feature_scale", sd),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, key, arr)

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "LinearModel":
        return cls(
            weights=np.zeros((num_classes, dim)),
            bias=np.zeros(num_classes),
            num_classes=num_classes,
            dim=dim,
            feature_mean=np.zeros(dim),
            feature_scale=np.ones(dim),
        )


@dataclass
class TrainLog:
    """Per-epoch train loss and validation accuracy, plus the chosen epoch."""

    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("nan")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Probability vector over classes, stable under large logits."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty logit vector")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _standardized(model: LinearModel, x: np.ndarray) -> np.ndarray:
    return (x - model.feature_mean) / model.feature_scale


def _logits(model: LinearModel, x: np.ndarray) -> np.ndarray:
    return _standardized(model, x) @ model.weights.T + model.bias


def predict(model: LinearModel, feature: np.ndarray) -> np.ndarray:
    """Class probability vector for one feature vector."""
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"feature shape {x.shape} does not match model dim {model.dim}")
    return softmax(_logits(model, x))


def predict_batch(model: LinearModel, features: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities for an (n, d) feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"feature matrix shape {x.shape} does not match model dim {model.dim}")
    return softmax(_logits(model, x))


def _cross_entropy_and_grads(
    model: LinearModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch and its gradient w.r.t. (W, b)."""
    z = _standardized(model, x)
    probs = softmax(z @ model.weights.T + model.bias)
    n = x.shape[0]
    loss = float(-np.log(probs[np.arange(n), y]).mean())
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, delta.T @ z, delta.sum(axis=0)


class AdamState:
    """First/second moment accumulators for one parameter array."""

    def __init__(self, shape: tuple[int, ...], cfg: AdamConfig):
        self.cfg = cfg
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.beta1**self.t)
        v_hat = self.v / (1.0 - cfg.beta2**self.t)
        return param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def _accuracy(model: LinearModel, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.argmax(predict_batch(model, x), axis=1)
    return float((pred == y).mean())


def train(
    features: Sequence[tuple[np.ndarray, int]],
    num_classes: int,
    cfg: AdamConfig,
    val_fraction: float = 0.2,
    standardize: bool = True,
) -> tuple[LinearModel, TrainLog]:
    """Fit a linear softmax model on (vector, class_id) samples.

    The samples are shuffled once with the config seed, split
    train/validation by ``val_fraction``, standardized from the training
    split, and trained with Adam over seeded minibatch shuffles.  The
    returned model carries the parameters of the epoch with the highest
    validation accuracy (earliest epoch on ties; the final parameters
    when there is no validation split).
    """
    if not features:
        raise ValueError("no training samples")
    x = np.asarray([np.asarray(v, dtype=np.float64).ravel() for v, _ in features])
    y = np.asarray([int(c) for _, c in features])
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError("class ids must lie in [0, num_classes)")
    if x.ndim != 2:
        raise ValueError("feature vectors must share one dimension")
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    dim = x.shape[1]
    n = x.shape[0]

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    n_val = min(n_val, n - 1)
    train_idx = order[: n - n_val]
    val_idx = order[n - n_val :]
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    present = np.unique(y_train)
    if len(present) < num_classes:
        missing = sorted(set(range(num_classes)) - set(present.tolist()))
        raise ValueError(f"classes {missing} have zero samples in the training split")

    if standardize:
        mean = x_train.mean(axis=0)
        std = x_train.std(axis=0)
        scale = np.where(std > 1e-12, std, 1.0)
    else:
        mean = np.zeros(dim)
        scale = np.ones(dim)

    model = LinearModel(
        weights=np.zeros((num_classes, dim)),
        bias=np.zeros(num_classes),
        num_classes=num_classes,
        dim=dim,
        feature_mean=mean,
        feature_scale=scale,
    )
    log = TrainLog()
    if cfg.epochs == 0:
        log.best_epoch = 0
        return model, log

    w = model.weights.copy()
    b = model.bias.copy()
    adam_w = AdamState(w.shape, cfg)
    adam_b = AdamState(b.shape, cfg)
    best_w, best_b = w.copy(), b.copy()
    best_acc = -1.0
    best_epoch = 0

    n_train = len(train_idx)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            current = replace(model, weights=w, bias=b)
            loss, g_w, g_b = _cross_entropy_and_grads(current, x_train[batch], y_train[batch])
            w = adam_w.update(w, g_w)
            b = adam_b.update(b, g_b)
            batch_losses.append(loss)
        log.train_loss.append(float(np.mean(batch_losses)))
        if n_val > 0:
            acc = _accuracy(replace(model, weights=w, bias=b), x_val, y_val)
            log.val_accuracy.append(acc)
            if acc > best_acc:
                best_acc = acc
                best_epoch = epoch
                best_w, best_b = w.copy(), b.copy()
        else:
            log.val_accuracy.append(float("nan"))
            best_w, best_b = w.copy(), b.copy()
            best_epoch = epoch

    log.best_epoch = best_epoch
    log.best_val_accuracy = best_acc if n_val > 0 else float("nan")
    return replace(model, weights=best_w, bias=best_b), log


def gradient_check(model: LinearModel, batch: Sequence[tuple[np.ndarray, int]]) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses h = 1e-5 per parameter; when both gradients are below 1e-8 the
    comparison falls back to the absolute difference.
    """
    x = np.asarray([np.asarray(v, dtype=np.float64).ravel() for v, _ in batch])
    y = np.asarray([int(c) for _, c in batch])
    _, g_w, g_b = _cross_entropy_and_grads(model, x, y)

    h = 1e-5
    worst = 0.0
    for analytic, attr in ((g_w, "weights"), (g_b, "bias")):
        base = getattr(model, attr).copy()
        numeric = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            for sign in (+1.0, -1.0):
                perturbed = base.copy()
                perturbed[idx] += sign * h
                shifted = replace(model, **{attr: perturbed})
                loss, _, _ = _cross_entropy_and_grads(shifted, x, y)
                numeric[idx] += sign * loss
            numeric[idx] /= 2.0 * h
        diff = np.abs(analytic - numeric)
        denom = np.maximum(np.abs(analytic), np.abs(numeric))
        rel = np.where(denom > 1e-8, diff / np.maximum(denom, 1e-300), diff)
        worst = max(worst, float(rel.max()))
    return worst


def pool_features(vectors: np.ndarray, strategy: str = "mean") -> np.ndarray:
    """Collapse a (K, d) stack of per-frame vectors into one vector.

    ``mean`` is order-free; ``concat`` keeps temporal order and requires
    a fixed K across the dataset.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("expected a non-empty (K, d) array")
    if strategy == "mean":
        return arr.mean(axis=0)
    if strategy == "concat":
        return arr.ravel()
    raise ValueError(f"unknown pooling strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Serialization: RPT1 weight tensors plus a JSON sidecar
# ---------------------------------------------------------------------------


def save_model(
    model: LinearModel, directory, cfg: AdamConfig | None = None, extra: dict | None = None
) -> None:
    """Write weights.rpt1, bias.rpt1 and model.json into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(model.weights.astype(np.float32), None, directory / "weights.rpt1")
    write_tensor(model.bias.astype(np.float32), None, directory / "bias.rpt1")
    sidecar = {
        "num_classes": model.num_classes,
        "dim": model.dim,
        "feature_mean": model.feature_mean.tolist(),
        "feature_scale": model.feature_scale.tolist(),
    }
    if cfg is not None:
        sidecar["adam"] = {
            "learning_rate": cfg.learning_rate,
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "epsilon": cfg.epsilon,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
        }
    if extra:
        sidecar.update(extra)
    (directory / "model.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_model(directory) -> tuple[LinearModel, dict]:
    """Read a model directory back; returns (model, sidecar dict)."""
    directory = Path(directory)
    sidecar = json.loads((directory / "model.json").read_text())
    weights, _ = read_tensor(directory / "weights.rpt1")
    bias, _ = read_tensor(directory / "bias.rpt1")
    model = LinearModel(
        weights=weights.astype(np.float64),
        bias=bias.astype(np.float64).ravel(),
        num_classes=int(sidecar["num_classes"]),
        dim=int(sidecar["dim"]),
        feature_mean=np.asarray(sidecar["feature_mean"], dtype=np.float64),
        feature_scale=np.asarray(sidecar["feature_scale"], dtype=np.float64),
    )
    return model, sidecar
