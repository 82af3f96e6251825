"""Deterministic, query-counted benchmark objectives.

Every objective is a pure function of its ParamSpace plus a monotone query
counter.  Losses for reporting can be computed through the un-counted
:meth:`Objective.loss` channel so that trace recording never touches the
gradient-estimation query budget.  Analytic gradients are provided where the
problem admits them and serve as the ground-truth anchor for estimator tests.
"""

from __future__ import annotations

import csv
import threading

import numpy as np

from .params import MATRIX, VECTOR, ParamSpace


class EvaluationError(RuntimeError):
    """An objective returned a non-finite value."""


class Objective:
    """A scalar objective over a ParamSpace with exact query accounting.

    ``evaluate`` increments the query counter by exactly one per call and is
    safe to call from concurrent threads.  ``loss`` computes the same value
    without counting (the oracle/reporting channel).
    """

    def __init__(self, name, loss_fn, initial_params, gradient_fn=None, descriptor=None):
        self.name = name
        self._loss_fn = loss_fn
        self._gradient_fn = gradient_fn
        self._initial = initial_params
        self.descriptor = dict(descriptor or {})
        self.descriptor.setdefault("name", name)
        self._lock = threading.Lock()
        self._query_count = 0
        self._eval_count = 0

    @property
    def initial_params(self) -> ParamSpace:
        return self._initial.copy()

    @property
    def query_count(self) -> int:
        return self._query_count

    @property
    def eval_count(self) -> int:
        """Evaluations made through the un-counted loss channel."""
        return self._eval_count

    @property
    def has_gradient(self) -> bool:
        return self._gradient_fn is not None

    def evaluate(self, x: ParamSpace) -> float:
        value = float(self._loss_fn(x))
        with self._lock:
            self._query_count += 1
        if not np.isfinite(value):
            raise EvaluationError(f"objective {self.name!r} returned {value}")
        return value

    def loss(self, x: ParamSpace) -> float:
        with self._lock:
            self._eval_count += 1
        return float(self._loss_fn(x))

    def analytic_gradient(self, x: ParamSpace):
        """Per-block gradient dict, or None when no closed form exists."""
        if self._gradient_fn is None:
            return None
        return self._gradient_fn(x)


def planted_spectrum(k: int, block_condition: float) -> np.ndarray:
    """Log-spaced eigenvalues for the planted curvature block, largest 1."""
    if block_condition < 1.0:
        raise ValueError("block_condition must be >= 1")
    if k == 1 or block_condition == 1.0:
        return np.ones(k)
    return np.logspace(0.0, -np.log10(block_condition), k)


def make_quadratic(
    m: int,
    n: int,
    k: int,
    seed: int,
    delta: float = 1e-4,
    block_condition: float = 10.0,
    init_offset: float = 1.0,
) -> Objective:
    """Quadratic f(X) = 1/2 tr((X - X*)^T H (X - X*)) with planted low-rank
    curvature H = L L^T + delta I.

    L is an m-by-k factor built from a random orthonormal basis scaled by a
    log-spaced spectrum (largest eigenvalue 1, smallest 1/block_condition),
    so the gradient H (X - X*) concentrates its energy in a k-dimensional
    column space.  ``init_offset`` scales the distance of the initial point
    from the minimizer.
    """
    if not (1 <= k <= m):
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((m, k)))
    lam = planted_spectrum(k, block_condition)
    curvature = (basis * lam) @ basis.T
    if delta:
        curvature = curvature + delta * np.eye(m)
    x_star = rng.standard_normal((m, n))
    x0 = x_star + init_offset * rng.standard_normal((m, n))

    def loss_fn(x):
        d = x["x"] - x_star
        return 0.5 * np.vdot(d, curvature @ d)

    def gradient_fn(x):
        return {"x": curvature @ (x["x"] - x_star)}

    obj = Objective(
        name="quadratic",
        loss_fn=loss_fn,
        initial_params=ParamSpace({"x": x0}),
        gradient_fn=gradient_fn,
        descriptor={
            "kind": "quadratic", "m": m, "n": n, "rank": k, "seed": int(seed),
            "delta": delta, "block_condition": block_condition,
            "init_offset": init_offset,
        },
    )
    obj.minimizer = ParamSpace({"x": x_star})
    obj.curvature = curvature
    return obj


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def make_logreg_from_data(features, labels, name="logreg", seed=0) -> Objective:
    """Binary cross-entropy objective from an explicit dense dataset.

    The weight is a single (n_features, 1) matrix block; labels must be 0/1.
    """
    a = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] != y.shape[0]:
        raise ValueError(
            f"features {a.shape} and labels {y.shape} are inconsistent"
        )
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    n_samples = a.shape[0]

    def loss_fn(x):
        z = a @ x["w"]
        # mean of log(1 + exp(z)) - y z, computed stably
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def gradient_fn(x):
        z = a @ x["w"]
        return {"w": a.T @ (_sigmoid(z) - y) / n_samples}

    w0 = np.zeros((a.shape[1], 1))
    return Objective(
        name=name,
        loss_fn=loss_fn,
        initial_params=ParamSpace({"w": w0}),
        gradient_fn=gradient_fn,
        descriptor={
            "kind": "logreg", "n_samples": n_samples,
            "n_features": a.shape[1], "seed": int(seed),
        },
    )


def make_logreg(n_samples: int, n_features: int, seed: int) -> Objective:
    """Logistic regression on synthetic linearly-separable-with-noise data."""
    if n_samples < 1 or n_features < 1:
        raise ValueError("n_samples and n_features must be positive")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_samples, n_features))
    w_true = rng.standard_normal((n_features, 1))
    margin = a @ w_true + 0.3 * rng.standard_normal((n_samples, 1))
    y = (margin > 0).astype(float)
    return make_logreg_from_data(a, y, seed=seed)


def load_csv_dataset(path):
    """Read a dense dataset: header row, float feature columns, integer label
    in the last column.  Returns (features, labels)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: need a header row with >= 2 columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    features, labels = data[:, :-1], data[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: last column must hold integer labels")
    return features, labels.astype(int)


def make_logreg_from_csv(path) -> Objective:
    features, labels = load_csv_dataset(path)
    uniq = np.unique(labels)
    if not np.all(np.isin(uniq, (0, 1))):
        raise ValueError(f"{path}: labels must be 0/1, got {uniq.tolist()}")
    return make_logreg_from_data(features, labels, name="logreg_csv")


def make_mlp(widths, n_samples: int, seed: int) -> Objective:
    """Small tanh MLP with softmax cross-entropy on Gaussian-blob data.

    ``widths`` lists layer sizes (input, hidden..., classes); at least two
    weight layers are required and every width must be <= 64.  Weight
    matrices are matrix blocks, biases are vector blocks, which exercises the
    split treatment of parameters in the matrix optimizers.  The analytic
    gradient comes from manual backprop and exists for oracle use only.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 3:
        raise ValueError("need at least two layers (3 widths)")
    if any(w < 1 or w > 64 for w in widths):
        raise ValueError(f"widths must be in [1, 64], got {widths}")
    n_classes = widths[-1]
    if n_samples < n_classes:
        raise ValueError(f"need at least {n_classes} samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    centers = 2.0 * rng.standard_normal((n_classes, widths[0]))
    labels = np.arange(n_samples) % n_classes
    inputs = centers[labels] + 0.6 * rng.standard_normal((n_samples, widths[0]))
    onehot = np.eye(n_classes)[labels]
    true_class = onehot.astype(bool)

    blocks, kinds = {}, {}
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        blocks[f"w{layer}"] = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        kinds[f"w{layer}"] = MATRIX
        blocks[f"b{layer}"] = np.zeros((1, fan_out))
        kinds[f"b{layer}"] = VECTOR
    n_layers = len(widths) - 1

    def forward(x):
        h = inputs
        hiddens = [h]
        for layer in range(n_layers):
            z = h @ x[f"w{layer}"] + x[f"b{layer}"]
            h = np.tanh(z) if layer < n_layers - 1 else z
            hiddens.append(h)
        return hiddens

    def loss_from_logits(logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return float(np.mean((logz - shifted)[true_class]))

    def loss_fn(x):
        return loss_from_logits(forward(x)[-1])

    def gradient_fn(x):
        hiddens = forward(x)
        logits = hiddens[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(shifted)
        probs = ez / ez.sum(axis=1, keepdims=True)
        delta = (probs - onehot) / n_samples
        grads = {}
        for layer in range(n_layers - 1, -1, -1):
            grads[f"w{layer}"] = hiddens[layer].T @ delta
            grads[f"b{layer}"] = delta.sum(axis=0, keepdims=True)
            if layer > 0:
                delta = (delta @ x[f"w{layer}"].T) * (1.0 - hiddens[layer] ** 2)
        return grads

    return Objective(
        name="mlp",
        loss_fn=loss_fn,
        initial_params=ParamSpace(blocks, kinds=kinds),
        gradient_fn=gradient_fn,
        descriptor={
            "kind": "mlp", "widths": widths, "n_samples": n_samples,
            "seed": int(seed),
        },
    )
