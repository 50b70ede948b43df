"""Two-hidden-layer feed-forward regressor trained by minibatch SGD.

Plain numpy with explicit backpropagation so the gradients can be
checked against finite differences. No input scaling happens here;
callers standardize their features first.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from .errors import TrainingDivergedError, ValidationError

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class MLPConfig:
    hidden: tuple[int, int] = (64, 32)
    activation: str = "tanh"
    epochs: int = 200
    batch_size: int = 32
    step_size: float = 0.05
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValidationError(f"hidden must be two positive sizes, got {self.hidden}")
        if self.activation not in ("tanh", "relu"):
            raise ValidationError(f"activation must be tanh or relu, got {self.activation!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if not self.step_size > 0.0:
            raise ValidationError(f"step_size must be positive, got {self.step_size}")
        if self.l2 < 0.0:
            raise ValidationError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class MLPModel:
    config: MLPConfig
    input_dim: int
    params: dict[str, np.ndarray]
    train_loss: float = 0.0
    loss_history: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValidationError(f"input has shape {X.shape}, model expects (*, {self.input_dim})")
        return _forward(self.params, X, self.config.activation)[0]


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    return 1.0 - a * a if kind == "tanh" else (z > 0.0).astype(np.float64)


def _forward(params: dict[str, np.ndarray], X: np.ndarray, activation: str):
    z1 = X @ params["W1"] + params["b1"]
    a1 = _act(z1, activation)
    z2 = a1 @ params["W2"] + params["b2"]
    a2 = _act(z2, activation)
    out = (a2 @ params["W3"] + params["b3"]).ravel()
    return out, (z1, a1, z2, a2)


def loss_and_grads(
    params: dict[str, np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    activation: str = "tanh",
    l2: float = 0.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Half mean squared error plus L2 penalty, and its exact gradients."""
    n = X.shape[0]
    pred, (z1, a1, z2, a2) = _forward(params, X, activation)
    err = pred - y
    loss = 0.5 * float((err**2).mean())
    if l2 > 0.0:
        loss += 0.5 * l2 * sum(float((params[w] ** 2).sum()) for w in ("W1", "W2", "W3"))
    d_out = (err / n)[:, None]
    grads: dict[str, np.ndarray] = {}
    grads["W3"] = a2.T @ d_out
    grads["b3"] = d_out.sum(axis=0)
    d2 = (d_out @ params["W3"].T) * _act_grad(z2, a2, activation)
    grads["W2"] = a1.T @ d2
    grads["b2"] = d2.sum(axis=0)
    d1 = (d2 @ params["W2"].T) * _act_grad(z1, a1, activation)
    grads["W1"] = X.T @ d1
    grads["b1"] = d1.sum(axis=0)
    if l2 > 0.0:
        for w in ("W1", "W2", "W3"):
            grads[w] = grads[w] + l2 * params[w]
    return loss, grads


def init_params(input_dim: int, hidden: tuple[int, int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    h1, h2 = hidden
    return {
        "W1": rng.normal(scale=1.0 / np.sqrt(input_dim), size=(input_dim, h1)),
        "b1": np.zeros(h1),
        "W2": rng.normal(scale=1.0 / np.sqrt(h1), size=(h1, h2)),
        "b2": np.zeros(h2),
        "W3": rng.normal(scale=1.0 / np.sqrt(h2), size=(h2, 1)),
        "b3": np.zeros(1),
    }


def fit_mlp(X: np.ndarray, y: np.ndarray, config: MLPConfig | None = None) -> MLPModel:
    config = config or MLPConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError(f"bad training shapes X={X.shape} y={y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("training data contains non-finite values")
    n = X.shape[0]
    rng = np.random.default_rng(config.seed)
    params = init_params(X.shape[1], config.hidden, rng)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grads = loss_and_grads(params, X[batch], y[batch], config.activation, config.l2)
            for k in PARAM_NAMES:
                params[k] = params[k] - config.step_size * grads[k]
        loss, _ = loss_and_grads(params, X, y, config.activation, config.l2)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}; step_size={config.step_size}"
            )
        history.append(loss)
    return MLPModel(config, X.shape[1], params, history[-1], history)


def mlp_to_dict(model: MLPModel) -> dict:
    cfg = asdict(model.config)
    cfg["hidden"] = list(model.config.hidden)
    return {
        "config": cfg,
        "input_dim": model.input_dim,
        "train_loss": model.train_loss,
        "params": {k: v.tolist() for k, v in model.params.items()},
    }


def mlp_from_dict(raw: dict) -> MLPModel:
    cfg = dict(raw["config"])
    cfg["hidden"] = tuple(cfg["hidden"])
    config = MLPConfig(**cfg)
    params = {k: np.asarray(v, dtype=np.float64) for k, v in raw["params"].items()}
    for k in PARAM_NAMES:
        if k not in params:
            raise ValidationError(f"serialized model is missing parameter {k}")
    bias_fix = {k: (v if k.startswith("W") else v.ravel()) for k, v in params.items()}
    return MLPModel(config, int(raw["input_dim"]), bias_fix, float(raw.get("train_loss", 0.0)))
