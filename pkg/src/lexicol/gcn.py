"""Two-layer graph convolutional network with explicit backpropagation.

Forward pass: softmax(conv @ relu(conv @ X @ theta0) @ theta1), with inverted
dropout on the input of each convolution during training. Training runs
full-batch adaptive-moment updates; all arithmetic is 64-bit and every random
draw comes from counter-based streams keyed by (seed, epoch, layer), so runs
are reproducible bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import STREAM_DROPOUT, STREAM_INIT, make_rng
from .linalg import as_csr

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

MODEL_MAGIC = b"LXGM"
MODEL_VERSION = 1


class TrainingError(RuntimeError):
    """Training hit a non-finite loss or activation."""


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    @property
    def num_epochs(self) -> int:
        return len(self.train_loss)


def init_weights(num_features: int, hidden_units: int, num_classes: int,
                 seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform Glorot initialization, one keyed stream per layer."""
    if min(num_features, hidden_units, num_classes) < 1:
        raise ValueError("layer sizes must be positive")
    theta = []
    for layer, (fan_in, fan_out) in enumerate(
            [(num_features, hidden_units), (hidden_units, num_classes)]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        rng = make_rng(seed, STREAM_INIT, layer)
        theta.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return theta[0], theta[1]


def _dropout_scale(shape, rate: float, rng) -> np.ndarray:
    # Inverted dropout: zero with probability `rate`, survivors scaled by
    # 1/(1-rate) so evaluation needs no rescaling.
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(theta0: np.ndarray, theta1: np.ndarray, conv, features: np.ndarray,
            dropout_rate: float = 0.0, train_mode: bool = False, seed: int = 0,
            epoch: int = 0) -> tuple[np.ndarray, dict]:
    """Run the two-layer forward pass.

    Returns row-stochastic class probabilities and a cache of intermediates
    for the backward pass. Dropout applies only when ``train_mode`` is set and
    the rate is positive.
    """
    conv = as_csr(conv)
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] != conv.shape[0] or theta0.shape[0] != x.shape[1] \
            or theta1.shape[0] != theta0.shape[1]:
        raise ValueError("inconsistent shapes in forward pass")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must be in [0, 1)")
    cache: dict = {}
    drop0 = drop1 = None
    if train_mode and dropout_rate > 0.0:
        drop0 = _dropout_scale(x.shape, dropout_rate,
                               make_rng(seed, STREAM_DROPOUT, epoch, 0))
        x = x * drop0
    pre_hidden = conv @ (x @ theta0)
    hidden = np.maximum(pre_hidden, 0.0)
    h = hidden
    if train_mode and dropout_rate > 0.0:
        drop1 = _dropout_scale(h.shape, dropout_rate,
                               make_rng(seed, STREAM_DROPOUT, epoch, 1))
        h = h * drop1
    logits = conv @ (h @ theta1)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite activation in forward pass")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    cache.update(x_in=x, drop0=drop0, pre_hidden=pre_hidden, h=h, drop1=drop1,
                 logits=logits, probs=probs, conv=conv)
    return probs, cache


def loss(probs: np.ndarray, labels: np.ndarray, mask, theta0: np.ndarray,
         l2_weight: float, theta1: np.ndarray | None = None) -> float:
    """Mean negative log-likelihood over ``mask`` plus the ridge penalty
    l2_weight * 0.5 * ||theta0||_F^2 (first layer only unless theta1 given)."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("loss mask must be non-empty")
    picked = probs[mask, np.asarray(labels, dtype=np.int64)[mask]]
    nll = float(-np.log(np.maximum(picked, 1e-300)).mean())
    reg = 0.5 * l2_weight * float(np.sum(theta0 * theta0))
    if theta1 is not None:
        reg += 0.5 * l2_weight * float(np.sum(theta1 * theta1))
    return nll + reg


def _loss_from_logits(logits: np.ndarray, labels: np.ndarray,
                      mask: np.ndarray) -> float:
    rows = logits[mask]
    shifted = rows - rows.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + rows.max(axis=1)
    true = rows[np.arange(rows.shape[0]), labels[mask]]
    return float((lse - true).mean())


def backward(cache: dict, labels: np.ndarray, mask, theta0: np.ndarray,
             theta1: np.ndarray, l2_weight: float,
             l2_all_layers: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the masked cross-entropy plus ridge penalty with respect
    to both weight matrices."""
    mask = np.asarray(mask, dtype=np.int64)
    probs, conv = cache["probs"], cache["conv"]
    n, k = probs.shape
    dlogits = np.zeros_like(probs)
    rows = probs[mask].copy()
    rows[np.arange(mask.size), np.asarray(labels, dtype=np.int64)[mask]] -= 1.0
    dlogits[mask] = rows / mask.size
    d_upper = conv @ dlogits                     # conv is symmetric
    dtheta1 = cache["h"].T @ d_upper
    dh = d_upper @ theta1.T
    if cache["drop1"] is not None:
        dh = dh * cache["drop1"]
    dh[cache["pre_hidden"] <= 0.0] = 0.0
    d_lower = conv @ dh
    dtheta0 = cache["x_in"].T @ d_lower
    dtheta0 += l2_weight * theta0
    if l2_all_layers:
        dtheta1 = dtheta1 + l2_weight * theta1
    return dtheta0, dtheta1


def evaluate(theta0: np.ndarray, theta1: np.ndarray, conv, features: np.ndarray,
             labels: np.ndarray, mask) -> float:
    """Argmax accuracy over ``mask``; ties resolve to the lowest class index."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("evaluation mask must be non-empty")
    probs, _ = forward(theta0, theta1, conv, features)
    pred = probs.argmax(axis=1)
    return float(np.mean(pred[mask] == np.asarray(labels, dtype=np.int64)[mask]))


def save_model(path, theta0: np.ndarray, theta1: np.ndarray) -> None:
    d, h = theta0.shape
    h2, k = theta1.shape
    if h != h2:
        raise ValueError("weight shapes do not chain")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQQQ", MODEL_VERSION, d, h, k))
        fh.write(np.ascontiguousarray(theta0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(theta1, dtype="<f8").tobytes())


def load_model(path) -> tuple[np.ndarray, np.ndarray]:
    blob = Path(path).read_bytes()
    header = 4 + 4 + 24
    if len(blob) < header or blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{Path(path).name}: bad magic or truncated header")
    version, d, h, k = struct.unpack_from("<IQQQ", blob, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{Path(path).name}: unsupported version {version}")
    expected = header + 8 * (d * h + h * k)
    if len(blob) != expected:
        raise ValueError(f"{Path(path).name}: payload is {len(blob)} bytes, "
                         f"expected {expected}")
    theta0 = np.frombuffer(blob, dtype="<f8", count=d * h,
                           offset=header).reshape(d, h).copy()
    theta1 = np.frombuffer(blob, dtype="<f8", count=h * k,
                           offset=header + 8 * d * h).reshape(h, k).copy()
    return theta0, theta1


class GcnClassifier(BaseEstimator):
    """Transductive two-layer GCN with a fit/predict surface.

    ``fit(X, y, conv=...)`` trains on the rows of ``X`` whose ``y`` entry is a
    class id (use -1 for unlabeled nodes). ``conv`` is the normalized
    convolution operator of the graph the nodes live in. Prediction reuses the
    same graph, as the model is transductive.
    """

    def __init__(self, hidden_units: int = 16, learning_rate: float = 0.01,
                 max_epochs: int = 200, dropout_rate: float = 0.5,
                 l2_weight: float = 5e-4, seed: int = 0,
                 num_classes: int | None = None, l2_all_layers: bool = False,
                 early_stopping: bool = False, patience: int = 10):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.dropout_rate = dropout_rate
        self.l2_weight = l2_weight
        self.seed = seed
        self.num_classes = num_classes
        self.l2_all_layers = l2_all_layers
        self.early_stopping = early_stopping
        self.patience = patience

    def _validate(self, X, y, conv):
        conv = as_csr(conv)
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != conv.shape[0]:
            raise ValueError("features must be (n, d) aligned with the graph")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be a length-n vector (-1 = unlabeled)")
        return X, y, conv

    def fit(self, X, y, conv=None, val_ids=None) -> "GcnClassifier":
        """Train on the labeled rows of ``y`` (entries >= 0).

        When ``val_ids`` is given those nodes are excluded from training and
        their labels (which must be present in ``y``) drive the per-epoch
        validation history and optional early stopping.
        """
        if conv is None:
            raise ValueError("conv (normalized convolution matrix) is required")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        X, y, conv = self._validate(X, y, conv)
        labeled = np.flatnonzero(y >= 0)
        val = np.asarray(val_ids, dtype=np.int64) if val_ids is not None \
            else np.empty(0, dtype=np.int64)
        if val.size and np.any(y[val] < 0):
            raise ValueError("validation nodes must carry labels in y")
        train_ids = np.setdiff1d(labeled, val)
        if train_ids.size == 0:
            raise ValueError("no labeled training nodes")
        k = self.num_classes if self.num_classes is not None else int(y.max()) + 1
        if int(y.max()) >= k:
            raise ValueError("label id outside num_classes")

        theta0, theta1 = init_weights(X.shape[1], self.hidden_units, k, self.seed)
        m0, v0 = np.zeros_like(theta0), np.zeros_like(theta0)
        m1, v1 = np.zeros_like(theta1), np.zeros_like(theta1)
        history = TrainHistory()
        best_val = np.inf
        stall = 0
        step = 0
        for epoch in range(self.max_epochs):
            probs, cache = forward(theta0, theta1, conv, X,
                                   dropout_rate=self.dropout_rate,
                                   train_mode=True, seed=self.seed, epoch=epoch)
            reg = 0.5 * self.l2_weight * float(np.sum(theta0 * theta0))
            if self.l2_all_layers:
                reg += 0.5 * self.l2_weight * float(np.sum(theta1 * theta1))
            train_loss = _loss_from_logits(cache["logits"], y, train_ids) + reg
            if not np.isfinite(train_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            history.train_loss.append(train_loss)
            g0, g1 = backward(cache, y, train_ids, theta0, theta1,
                              self.l2_weight, self.l2_all_layers)
            step += 1
            for theta, g, m, v in ((theta0, g0, m0, v0), (theta1, g1, m1, v1)):
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * (g * g)
                m_hat = m / (1 - ADAM_BETA1 ** step)
                v_hat = v / (1 - ADAM_BETA2 ** step)
                theta -= self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if val.size:
                eval_probs, eval_cache = forward(theta0, theta1, conv, X)
                vloss = _loss_from_logits(eval_cache["logits"], y, val)
                reg_now = 0.5 * self.l2_weight * float(np.sum(theta0 * theta0))
                if self.l2_all_layers:
                    reg_now += 0.5 * self.l2_weight * float(np.sum(theta1 * theta1))
                history.val_loss.append(vloss + reg_now)
                history.val_accuracy.append(
                    float(np.mean(eval_probs[val].argmax(axis=1) == y[val])))
                if self.early_stopping:
                    if vloss < best_val - 1e-12:
                        best_val = vloss
                        stall = 0
                    else:
                        stall += 1
                        if stall >= self.patience:
                            break
        self.theta0_, self.theta1_ = theta0, theta1
        self.history_ = history
        self.classes_ = np.arange(k)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X, conv=None) -> np.ndarray:
        if conv is None:
            raise ValueError("conv is required")
        probs, _ = forward(self.theta0_, self.theta1_, conv,
                           np.asarray(X, dtype=np.float64))
        return probs

    def predict(self, X, conv=None) -> np.ndarray:
        return self.predict_proba(X, conv=conv).argmax(axis=1)

    def score(self, X, y, conv=None, node_ids=None) -> float:
        y = np.asarray(y, dtype=np.int64)
        mask = np.asarray(node_ids, dtype=np.int64) if node_ids is not None \
            else np.flatnonzero(y >= 0)
        return evaluate(self.theta0_, self.theta1_, conv,
                        np.asarray(X, dtype=np.float64), y, mask)
