"""Small fully connected regressors trained with Adam on an RMSE loss.

Used for the forward map (motor angles to joint angles) and the inverse maps
that turn joint or end-effector targets into reference inputs. Inputs and
outputs are standardized per channel; the network works in normalized units
and ``infer`` converts back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 100
    hidden: int = 256
    n_hidden: int = 3
    seed: int = 42
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) <= 0:
            raise ValueError("split fractions must be positive and sum to 1")
        if min(self.lr, self.batch, self.epochs, self.hidden, self.n_hidden) <= 0:
            raise ValueError("training parameters must be positive")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Reduced width and epoch count for quick runs."""
        return cls(**{"hidden": 64, "epochs": 30, **overrides})


@dataclass
class MlpModel:
    """Tanh network with linear output layer.

    Attributes:
        weights, biases: Layer parameters; ``weights[i]`` has shape
            ``(fan_in, fan_out)``.
        x_mean, x_scale, y_mean, y_scale: Per-channel standardization.
        x_min, x_max: Bounding box of the training inputs.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    x_min: np.ndarray = None
    x_max: np.ndarray = None
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("weights and biases must pair up")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[1],):
                raise DimensionError(f"bias {i} does not match layer width")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise DimensionError(f"layer {i} does not chain with layer {i - 1}")
        if np.any(self.x_scale <= 0) or np.any(self.y_scale <= 0):
            raise ValueError("normalization scales must be positive")
        if self.x_min is None:
            self.x_min = np.full(self.in_dim, -np.inf)
            self.x_max = np.full(self.in_dim, np.inf)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, hidden: int, n_hidden: int,
                   rng: np.random.Generator) -> "MlpModel":
        """Glorot-uniform weights, zero biases, identity normalization."""
        sizes = [in_dim] + [hidden] * n_hidden + [out_dim]
        weights, biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (a + b))
            weights.append(rng.uniform(-lim, lim, (a, b)))
            biases.append(np.zeros(b))
        return cls(weights, biases, np.zeros(in_dim), np.ones(in_dim),
                   np.zeros(out_dim), np.ones(out_dim))

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.x_mean.copy(), self.x_scale.copy(), self.y_mean.copy(),
                        self.y_scale.copy(), self.x_min.copy(), self.x_max.copy(),
                        self.activation)

    def forward_normalized(self, xn: np.ndarray) -> np.ndarray:
        h = xn
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W + b)
        return h @ self.weights[-1] + self.biases[-1]

    def in_range(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        span = self.x_max - self.x_min
        return bool(np.all(x >= self.x_min - margin * span) and np.all(x <= self.x_max + margin * span))


def infer(model: MlpModel, x) -> np.ndarray:
    """Denormalized prediction for one sample or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.in_dim:
        raise DimensionError(f"expected {model.in_dim} inputs, got {X.shape[1]}")
    # Rows are processed one at a time so batch and single calls agree bitwise.
    out = np.array([model.forward_normalized((row - model.x_mean) / model.x_scale)
                    for row in X])
    out = out * model.y_scale + model.y_mean
    return out[0] if single else out


def rmse_and_grads(model: MlpModel, Xn: np.ndarray, Yn: np.ndarray):
    """RMSE over all entries of a normalized batch and its parameter gradients.

    Returns:
        ``(loss, grads)`` with grads ordered like ``model.params()``.
    """
    acts = [Xn]
    h = Xn
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ W + b)
        acts.append(h)
    pred = h @ model.weights[-1] + model.biases[-1]
    resid = pred - Yn
    mse = float(np.mean(resid ** 2))
    loss = np.sqrt(mse)
    if loss == 0.0:
        return 0.0, [np.zeros_like(p) for p in model.params()]
    delta = resid / (resid.size * loss)
    gW, gb = [None] * len(model.weights), [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, gW + gb


def _loss_only(model, Xn, Yn) -> float:
    return float(np.sqrt(np.mean((model.forward_normalized(Xn) - Yn) ** 2)))


def gradient_check(model: MlpModel, sample, eps: float = 1e-5) -> float:
    """Max relative gap between analytic and central-difference gradients.

    Args:
        sample: ``(X, Y)`` in normalized units.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    Xn, Yn = (np.atleast_2d(np.asarray(a, dtype=float)) for a in sample)
    _, grads = rmse_and_grads(model, Xn, Yn)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp = _loss_only(model, Xn, Yn)
            flat[k] = orig - eps
            fm = _loss_only(model, Xn, Yn)
            flat[k] = orig
            num = (fp - fm) / (2 * eps)
            denom = max(abs(num), abs(gflat[k]), 1e-7)
            worst = max(worst, abs(num - gflat[k]) / denom)
    return worst


def split_indices(n: int, seed: int = 42, split=(0.8, 0.1, 0.1)):
    """Seeded shuffle into train/validation/test index arrays."""
    perm = np.random.default_rng(seed).permutation(n)
    n_tr = int(round(split[0] * n))
    n_va = int(round(split[1] * n))
    return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]


@dataclass
class TrainResult:
    model: MlpModel
    best_epoch: int
    train_rmse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    test_rmse: float = float("nan")
    splits: tuple = ()


def _rmse_denorm(model: MlpModel, X, Y) -> float:
    return float(np.sqrt(np.mean((infer(model, X) - Y) ** 2)))


def train(X, Y, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit an MLP to paired samples.

    Entry 0 of the RMSE histories is the untrained network; entry ``e`` is the
    value after epoch ``e``. RMSE values are in normalized output units. The
    returned model is the validation-best checkpoint and ``test_rmse`` (in
    output units) is measured on it.

    Raises:
        ValueError: With fewer than ``10 * batch`` samples or non-finite data.
        DivergenceError: If the loss becomes non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("X and Y must have the same number of rows")
    if X.shape[0] < 10 * cfg.batch:
        raise ValueError(f"need at least {10 * cfg.batch} samples, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("training data contain non-finite values")

    tr, va, te = split_indices(X.shape[0], cfg.seed, cfg.split)
    rng = np.random.default_rng(cfg.seed)
    model = MlpModel.initialize(X.shape[1], Y.shape[1], cfg.hidden, cfg.n_hidden, rng)
    model.x_mean, model.x_scale = X[tr].mean(axis=0), _scale(X[tr])
    model.y_mean, model.y_scale = Y[tr].mean(axis=0), _scale(Y[tr])
    model.x_min, model.x_max = X[tr].min(axis=0), X[tr].max(axis=0)
    Xn = (X - model.x_mean) / model.x_scale
    Yn = (Y - model.y_mean) / model.y_scale

    params = model.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    hist_tr = [_loss_only(model, Xn[tr], Yn[tr])]
    hist_va = [_loss_only(model, Xn[va], Yn[va])]
    best, best_epoch = model.copy(), 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(tr)
        for s in range(0, order.size, cfg.batch):
            idx = order[s:s + cfg.batch]
            loss, grads = rmse_and_grads(model, Xn[idx], Yn[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            step += 1
            c1 = 1.0 - ADAM_BETA1 ** step
            c2 = 1.0 - ADAM_BETA2 ** step
            for p, g, a, b in zip(params, grads, m1, m2):
                a *= ADAM_BETA1
                a += (1.0 - ADAM_BETA1) * g
                b *= ADAM_BETA2
                b += (1.0 - ADAM_BETA2) * g * g
                p -= cfg.lr * (a / c1) / (np.sqrt(b / c2) + ADAM_EPS)
        hist_tr.append(_loss_only(model, Xn[tr], Yn[tr]))
        hist_va.append(_loss_only(model, Xn[va], Yn[va]))
        if not np.isfinite(hist_va[-1]):
            raise DivergenceError(f"non-finite validation loss in epoch {epoch}", epoch=epoch)
        if hist_va[-1] < hist_va[best_epoch]:
            best, best_epoch = model.copy(), epoch
        log.debug("epoch %d train %.5f val %.5f", epoch, hist_tr[-1], hist_va[-1])
    return TrainResult(best, best_epoch, hist_tr, hist_va,
                       _rmse_denorm(best, X[te], Y[te]), (tr, va, te))


def _scale(A: np.ndarray) -> np.ndarray:
    s = A.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


def save_model(model: MlpModel, path) -> None:
    """Text file: a header line, normalization rows, then each layer.

    Each layer is written as a ``layer <rows> <cols>`` line followed by its
    weight rows and one bias row.
    """
    def row(v):
        return " ".join(repr(float(x)) for x in v)

    with open(path, "w") as fh:
        fh.write(f"mlp in_dim={model.in_dim} out_dim={model.out_dim} "
                 f"layers={len(model.weights)} activation={model.activation}\n")
        for name in ("x_mean", "x_scale", "y_mean", "y_scale", "x_min", "x_max"):
            fh.write(f"{name} {row(getattr(model, name))}\n")
        for W, b in zip(model.weights, model.biases):
            fh.write(f"layer {W.shape[0]} {W.shape[1]}\n")
            for r in W:
                fh.write(row(r) + "\n")
            fh.write(row(b) + "\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    head = lines[0]
    if head[0] != "mlp":
        raise ValueError(f"{path}: not a model file")
    meta = dict(tok.split("=") for tok in head[1:])
    norm = {ln[0]: np.array([float(v) for v in ln[1:]]) for ln in lines[1:7]}
    weights, biases = [], []
    i = 7
    for _ in range(int(meta["layers"])):
        _, r, c = lines[i]
        r, c = int(r), int(c)
        weights.append(np.array([[float(v) for v in ln] for ln in lines[i + 1:i + 1 + r]]).reshape(r, c))
        biases.append(np.array([float(v) for v in lines[i + 1 + r]]))
        i += r + 2
    return MlpModel(weights, biases, norm["x_mean"], norm["x_scale"], norm["y_mean"],
                    norm["y_scale"], norm["x_min"], norm["x_max"], meta["activation"])
