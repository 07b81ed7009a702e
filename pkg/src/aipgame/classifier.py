"""Reference classifiers with analytic input gradients, a synthetic dataset and a trainer.

Two model kinds are supported: ``linear`` (scores = W z + b) and ``mlp``
(scores = W2 relu(W1 z + b1) + b2), where ``z = (x - shift) / scale`` is a
fixed scalar normalisation of the raw [0, 255] pixels baked into the model.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .tensor import SeededRng, decode_tensor, encode_tensor, mix_seed, read_tensor, write_tensor

LOSS_VARIANTS = ("softmax_log", "score", "margin", "deepfool")
_KIND_CODES = {"linear": 0, "mlp": 1}


@dataclass(frozen=True)
class LossSpec:
    """Loss to be *maximised* by an attack.

    softmax_log: -log softmax(f)[y]
    score:       -f[y]
    margin:      f[y*] - f[y], y* the best wrong label at the evaluation point
                 (or ``target`` when given)
    deepfool:    f[c] - f[y], c the label with the nearest linearised boundary
    """

    variant: str = "softmax_log"
    target: int = None

    def __post_init__(self):
        if self.variant not in LOSS_VARIANTS:
            raise InvalidArgument(f"unknown loss variant {self.variant!r}")


SOFTMAX_LOG = LossSpec("softmax_log")
SCORE = LossSpec("score")
MARGIN = LossSpec("margin")
DEEPFOOL = LossSpec("deepfool")


@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    params: tuple
    input_shape: tuple
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise InvalidArgument(f"unknown model kind {self.kind!r}")
        expected = 2 if self.kind == "linear" else 4
        if len(self.params) != expected:
            raise InvalidArgument(f"{self.kind} model needs {expected} parameter arrays")
        frozen = []
        for p in self.params:
            p = np.array(p, dtype=np.float64)
            p.setflags(write=False)
            frozen.append(p)
        object.__setattr__(self, "params", tuple(frozen))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if int(np.prod(self.input_shape)) != self.input_dim:
            raise InvalidArgument("input_shape does not match the first weight matrix")

    @property
    def input_dim(self):
        return self.params[0].shape[1]

    @property
    def hidden(self):
        return self.params[0].shape[0] if self.kind == "mlp" else 0

    @property
    def class_count(self):
        return self.params[-1].shape[0]

    def same_parameters(self, other):
        return (
            self.kind == other.kind
            and self.shift == other.shift
            and self.scale == other.scale
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )


def linear_model(W, b, input_shape=None, shift=0.0, scale=1.0):
    W = np.asarray(W, dtype=np.float64)
    return Model("linear", (W, b), input_shape or (W.shape[1],), shift, scale)


def mlp_model(W1, b1, W2, b2, input_shape=None, shift=0.0, scale=1.0):
    W1 = np.asarray(W1, dtype=np.float64)
    return Model("mlp", (W1, b1, W2, b2), input_shape or (W1.shape[1],), shift, scale)


def _flat_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.size != model.input_dim:
        raise InvalidArgument(f"input of size {x.size} does not match model dimension {model.input_dim}")
    return (x.reshape(-1) - model.shift) / model.scale


def _forward(model, z):
    if model.kind == "linear":
        W, b = model.params
        return W @ z + b, None
    W1, b1, W2, b2 = model.params
    pre = W1 @ z + b1
    return W2 @ np.maximum(pre, 0.0) + b2, pre


def scores(model, x):
    f, _ = _forward(model, _flat_input(model, x))
    return f


def softmax(f):
    f = np.asarray(f, dtype=np.float64)
    e = np.exp(f - np.max(f, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def argmax_first(f):
    """Index of the largest entry; ties go to the smallest index."""
    return int(np.argmax(f))


def predict(model, x):
    return argmax_first(scores(model, x))


def best_wrong_label(f, y):
    masked = np.array(f, dtype=np.float64)
    masked[y] = -np.inf
    return int(np.argmax(masked))


def score_jacobian(model, x):
    """d scores / d x as a (C, D) matrix with respect to the raw pixels."""
    z = _flat_input(model, x)
    if model.kind == "linear":
        return model.params[0] / model.scale
    W1, b1, W2, _ = model.params
    mask = (W1 @ z + b1) > 0.0
    return (W2 * mask) @ W1 / model.scale


def nearest_boundary_label(f, jac, y):
    """Label whose linearised decision boundary is closest to the current point."""
    best, best_dist = None, np.inf
    for k in range(len(f)):
        if k == y:
            continue
        w_norm = np.linalg.norm(jac[k] - jac[y])
        dist = abs(f[k] - f[y]) / w_norm if w_norm > 0 else np.inf
        if dist < best_dist:
            best, best_dist = k, dist
    if best is None:
        # every boundary is degenerate; fall back to the strongest competitor
        best = best_wrong_label(f, y)
    return best


def _check_label(model, y):
    if not 0 <= int(y) < model.class_count:
        raise InvalidArgument(f"label {y} outside [0, {model.class_count})")
    return int(y)


def _loss_dscores(model, x, f, y, loss):
    """Loss value and its gradient with respect to the scores."""
    g = np.zeros_like(f)
    if loss.variant == "softmax_log":
        others = np.delete(f, y) - f[y]
        m = max(others.max(), 0.0) if others.size else 0.0
        # -log p_y = log(1 + sum exp(f_k - f_y)), kept accurate when p_y ~ 1
        value = m + np.log(np.exp(-m) + np.sum(np.exp(others - m)))
        p = softmax(f)
        g[:] = p
        g[y] = -(np.sum(p) - p[y])
        return float(value), g
    if loss.variant == "score":
        g[y] = -1.0
        return float(-f[y]), g
    if loss.variant == "margin":
        other = loss.target if loss.target is not None else best_wrong_label(f, y)
        assert loss.target is not None or all(f[other] >= f[k] for k in range(len(f)) if k != y)
    else:
        other = nearest_boundary_label(f, score_jacobian(model, x), y)
    g[other] += 1.0
    g[y] -= 1.0
    return float(f[other] - f[y]), g


def loss_value(model, x, y, loss=SOFTMAX_LOG):
    y = _check_label(model, y)
    f = scores(model, x)
    return _loss_dscores(model, x, f, y, loss)[0]


def backprop(model, x, dscores):
    """Vector-Jacobian product: pull a score-space gradient back to pixel space."""
    z = _flat_input(model, x)
    if model.kind == "linear":
        gz = model.params[0].T @ dscores
    else:
        W1, b1, W2, _ = model.params
        gz = W1.T @ ((W2.T @ dscores) * ((W1 @ z + b1) > 0.0))
    return (gz / model.scale).reshape(np.shape(x))


def average_channels(g):
    """Replace each pixel's channel gradients by their mean (grayscale sources)."""
    if g.ndim == 3 and g.shape[2] > 1:
        return np.broadcast_to(g.mean(axis=2, keepdims=True), g.shape).copy()
    return g


def input_grad(model, x, loss, y, grayscale_source=False):
    y = _check_label(model, y)
    x = np.asarray(x, dtype=np.float64)
    f = scores(model, x)
    _, dscores = _loss_dscores(model, x, f, y, loss)
    g = backprop(model, x, dscores)
    return average_channels(g) if grayscale_source else g


# -- data ---------------------------------------------------------------------


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise InvalidArgument("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise InvalidArgument("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.images, self.labels.tolist()))

    def subset(self, indices):
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices], self.class_count)


def class_prototypes(class_count, height, width, seed, channels=1, block=4, amplitude=3.0):
    """Per-class block patterns around mid-gray: 128 +/- amplitude per block."""
    rng = SeededRng(mix_seed(seed, "prototypes"))
    bh, bw = -(-height // block), -(-width // block)
    protos = np.empty((class_count, height, width, channels))
    for k in range(class_count):
        signs = np.where(rng.random((bh, bw, channels)) < 0.5, -1.0, 1.0)
        pattern = np.repeat(np.repeat(signs, block, axis=0), block, axis=1)[:height, :width]
        protos[k] = 128.0 + amplitude * pattern
    return np.clip(protos, 0.0, 255.0)


def generate_synthetic_dataset(
    class_count, per_class, height, width, noise_sigma, seed, split="train", channels=1, block=4, amplitude=3.0
):
    """Prototype-plus-Gaussian-noise images.

    Prototypes depend on ``seed`` only; the noise stream depends on
    ``(seed, split)`` so train and test splits share classes.
    """
    if min(class_count, per_class, height, width) < 1 or noise_sigma < 0:
        raise InvalidArgument("dataset arguments must be positive")
    protos = class_prototypes(class_count, height, width, seed, channels, block, amplitude)
    rng = SeededRng(mix_seed(seed, split))
    labels = np.repeat(np.arange(class_count), per_class)
    images = protos[labels]
    if noise_sigma > 0:
        images = np.clip(images + rng.normal(images.shape, noise_sigma), 0.0, 255.0)
    return Dataset(images, labels, class_count)


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "linear"
    hidden: int = 64


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 20
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1 or self.init_scale <= 0:
            raise InvalidArgument(f"invalid training configuration {self}")


def init_params(spec, input_dim, class_count, cfg):
    rng = SeededRng(mix_seed(cfg.seed, "init"))
    if spec.kind == "linear":
        return [rng.normal((class_count, input_dim), cfg.init_scale), np.zeros(class_count)]
    return [
        rng.normal((spec.hidden, input_dim), cfg.init_scale * 10),
        np.zeros(spec.hidden),
        rng.normal((class_count, spec.hidden), cfg.init_scale * 10),
        np.zeros(class_count),
    ]


def _batch_loss_grads(kind, params, Z, Y):
    """Mean softmax-log loss over a batch and its parameter gradients."""
    n = len(Y)
    if kind == "linear":
        W, b = params
        F = Z @ W.T + b
    else:
        W1, b1, W2, b2 = params
        H = Z @ W1.T + b1
        A = np.maximum(H, 0.0)
        F = A @ W2.T + b2
    P = softmax(F)
    loss = float(np.mean(np.log(np.sum(np.exp(F - F.max(1, keepdims=True)), 1)) + F.max(1) - F[np.arange(n), Y]))
    D = P
    D[np.arange(n), Y] -= 1.0
    D /= n
    if kind == "linear":
        return loss, [D.T @ Z, D.sum(0)]
    DA = (D @ W2) * (H > 0.0)
    return loss, [DA.T @ Z, DA.sum(0), D.T @ A, D.sum(0)]


def _normalisation(dataset):
    x = dataset.images
    return float(x.mean()), float(x.std()) or 1.0


def train_with_history(spec, dataset, cfg=TrainConfig()):
    """Minibatch gradient descent; returns the frozen model and per-epoch full-data losses."""
    if len(dataset) == 0:
        raise InvalidArgument("cannot train on an empty dataset")
    shape = dataset.images.shape[1:]
    shift, scale = _normalisation(dataset)
    Z = (dataset.images.reshape(len(dataset), -1) - shift) / scale
    Y = dataset.labels
    params = init_params(spec, Z.shape[1], dataset.class_count, cfg)
    rng = SeededRng(mix_seed(cfg.seed, "shuffle"))
    history = [_batch_loss_grads(spec.kind, params, Z, Y)[0]]
    for _ in range(cfg.epochs):
        order = rng.permutation(len(Y))
        for start in range(0, len(Y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = _batch_loss_grads(spec.kind, params, Z[idx], Y[idx])
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
        history.append(_batch_loss_grads(spec.kind, params, Z, Y)[0])
    return Model(spec.kind, tuple(params), shape, shift, scale), history


def train(spec, dataset, cfg=TrainConfig()):
    return train_with_history(spec, dataset, cfg)[0]


def accuracy(model, dataset):
    if len(dataset) == 0:
        raise InvalidArgument("accuracy of an empty dataset is undefined")
    hits = sum(predict(model, x) == y for x, y in dataset)
    return hits / len(dataset)


# -- persistence ----------------------------------------------------------------


def save_model(path, model):
    """TNSR record stream: a header record [kind, D, H, C, shift, scale, *input_shape] then the parameters."""
    header = np.array(
        [_KIND_CODES[model.kind], model.input_dim, model.hidden, model.class_count, model.shift, model.scale]
        + list(model.input_shape),
        dtype=np.float64,
    )
    blob = encode_tensor(header, "float64") + b"".join(encode_tensor(p, "float64") for p in model.params)
    Path(path).write_bytes(blob)


def load_model(path):
    buf = Path(path).read_bytes()
    header, pos = decode_tensor(buf)
    kind = {v: k for k, v in _KIND_CODES.items()}[int(header[0])]
    params = []
    for _ in range(2 if kind == "linear" else 4):
        p, pos = decode_tensor(buf, pos)
        params.append(p)
    shape = tuple(int(s) for s in header[6:])
    return Model(kind, tuple(params), shape, float(header[4]), float(header[5]))


def save_dataset(directory, dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        for i, (x, y) in enumerate(dataset):
            name = f"sample_{i:05d}.tnsr"
            write_tensor(directory / name, x)
            writer.writerow([name, y])
    (directory / "meta.json").write_text(json.dumps({"class_count": dataset.class_count}))


def load_dataset(directory):
    directory = Path(directory)
    images, labels = [], []
    with open(directory / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            images.append(read_tensor(directory / row["filename"]))
            labels.append(int(row["label"]))
    meta = directory / "meta.json"
    count = json.loads(meta.read_text())["class_count"] if meta.exists() else max(labels) + 1
    return Dataset(np.stack(images), labels, count)
