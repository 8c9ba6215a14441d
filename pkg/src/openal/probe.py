"""Linear softmax probe over frozen features.

This is the per-round target classifier: multinomial logistic regression
trained by full-batch gradient descent on L2-regularized cross-entropy from
zero-initialized parameters, so training is deterministic.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    l2_penalty: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")


@dataclass(frozen=True)
class ProbeModel:
    weights: np.ndarray  # (K, d), acting on standardized features
    biases: np.ndarray  # (K,)
    class_ids: tuple
    shift: np.ndarray  # (d,) feature mean of the training set
    scale: np.ndarray  # (d,) feature std of the training set
    epochs: int = 0
    final_loss: float = float("nan")
    losses: tuple = field(default=(), repr=False)

    @property
    def n_classes(self):
        return len(self.class_ids)

    @property
    def dim(self):
        return self.weights.shape[1]

    def logits(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: model has {self.dim}, input has {Z.shape[1]}")
        return ((Z - self.shift) / self.scale) @ self.weights.T + self.biases

    def dump(self, path):
        """Plain-text dump: ``K d`` then one line of weights + bias per class."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_classes} {self.dim}\n")
            for w, b in zip(self.weights, self.biases):
                fh.write(" ".join(repr(float(x)) for x in w) + f" {float(b)!r}\n")


def untrained(n_classes, dim):
    """Zero model: predicts the uniform distribution for every input."""
    return ProbeModel(
        np.zeros((n_classes, dim)), np.zeros(n_classes), tuple(range(n_classes)),
        np.zeros(dim), np.ones(dim),
    )


def softmax(logits):
    a = np.asarray(logits, dtype=np.float64)
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(W, b, X, Y, l2):
    """Mean cross-entropy + (l2/2)|W|^2 and its gradient w.r.t. (W, b).

    ``Y`` is a one-hot (n, K) matrix.
    """
    n = X.shape[0]
    logits = X @ W.T + b
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = (lse - (logits * Y).sum(axis=1)).mean() + 0.5 * l2 * np.sum(W * W)
    R = (softmax(logits) - Y) / n
    return loss, R.T @ X + l2 * W, R.sum(axis=0)


def train_probe(features, labels, n_classes, cfg=ProbeConfig()):
    """Fit the probe on (feature, fine class) pairs.

    Classes without any training sample keep a row (zero weights, bias pushed
    down by the gradient) so predictions always cover all ``n_classes``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("train_probe needs at least one labeled sample")
    if n_classes < 1 or y.min() < 0 or y.max() >= n_classes:
        raise ValueError("labels must lie in [0, n_classes)")
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    Xs = (X - shift) / scale
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0

    W = np.zeros((n_classes, X.shape[1]))
    b = np.zeros(n_classes)
    losses = []
    for _ in range(cfg.epochs):
        loss, gW, gb = loss_and_grad(W, b, Xs, Y, cfg.l2_penalty)
        losses.append(float(loss))
        W -= cfg.learning_rate * gW
        b -= cfg.learning_rate * gb
    final, _, _ = loss_and_grad(W, b, Xs, Y, cfg.l2_penalty)
    return ProbeModel(W, b, tuple(range(n_classes)), shift, scale, cfg.epochs, float(final), tuple(losses))


def predict_proba(model, Z):
    """Class probabilities; a single vector gives a (K,) result, a matrix (n, K)."""
    Z = np.asarray(Z, dtype=np.float64)
    P = softmax(model.logits(Z))
    return P[0] if Z.ndim == 1 else P


def entropy(p, tol=1e-6):
    """Shannon entropy in nats (0 log 0 = 0), row-wise for a matrix."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValueError("entropy needs non-negative entries summing to 1")
    safe = np.where(p > 0, p, 1.0)
    h = -(p * np.log(safe)).sum(axis=-1)
    return np.maximum(h, 0.0) if h.ndim else max(float(h), 0.0)


def predict(model, Z):
    # argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(model.logits(Z), axis=1)


def accuracy(model, features, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("accuracy needs a non-empty test set")
    return float(np.mean(predict(model, features) == labels))
