"""Non-private MLP feature encoder fitted on labeled training nodes only.

The encoder never sees the edge set: every entry point takes features,
labels and the split, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from privgcn.graph import Graph

PSEUDO_LABEL_MODES = ("none", "all")


class EncoderError(ValueError):
    pass


@dataclass(eq=False)
class EncoderModel:
    """Trunk ``d0 -> h (tanh) -> d1 (identity)`` and softmax head ``d1 -> c``."""

    W_in: np.ndarray
    b_in: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    W_head: np.ndarray
    b_head: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    head_activation: str = "softmax"
    train_accuracy: float = float("nan")

    @property
    def d0(self) -> int:
        return self.W_in.shape[0]

    @property
    def h(self) -> int:
        return self.W_in.shape[1]

    @property
    def d1(self) -> int:
        return self.W_out.shape[1]

    @property
    def c(self) -> int:
        return self.W_head.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "W_in": self.W_in, "b_in": self.b_in, "W_out": self.W_out,
            "b_out": self.b_out, "W_head": self.W_head, "b_head": self.b_head,
        }

    def head_scores(self, X) -> np.ndarray:
        return _softmax(encode(self, X) @ self.W_head + self.b_head)


def _softmax(S):
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def _init(rng, fan_in, fan_out):
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def fit_encoder_arrays(
    X: np.ndarray,
    Y: np.ndarray,
    d1: int,
    h: int = 64,
    epochs: int = 300,
    lr: float = 0.5,
    seed: int = 0,
    bias: bool = True,
) -> EncoderModel:
    """Full-batch gradient descent on softmax cross-entropy over ``(X, Y)``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] == 0:
        raise EncoderError("training split is empty")
    missing = np.flatnonzero(Y.sum(axis=0) == 0)
    if missing.size:
        raise EncoderError(f"classes {missing.tolist()} have no training node")
    rng = np.random.default_rng(seed)
    n, d0 = X.shape
    c = Y.shape[1]
    W_in, W_out, W_head = _init(rng, d0, h), _init(rng, h, d1), _init(rng, d1, c)
    b_in, b_out, b_head = np.zeros(h), np.zeros(d1), np.zeros(c)

    for _ in range(epochs):
        H = np.tanh(X @ W_in + b_in)
        F = H @ W_out + b_out
        P = _softmax(F @ W_head + b_head)
        dS = (P - Y) / n
        dW_head = F.T @ dS
        dF = dS @ W_head.T
        dW_out = H.T @ dF
        dH = (dF @ W_out.T) * (1.0 - H * H)
        dW_in = X.T @ dH
        W_head -= lr * dW_head
        W_out -= lr * dW_out
        W_in -= lr * dW_in
        if bias:
            b_head -= lr * dS.sum(axis=0)
            b_out -= lr * dF.sum(axis=0)
            b_in -= lr * dH.sum(axis=0)

    model = EncoderModel(W_in, b_in, W_out, b_out, W_head, b_head)
    model.train_accuracy = float(np.mean(model.head_scores(X).argmax(axis=1) == Y.argmax(axis=1)))
    return model


def fit_encoder(g: Graph, d1: int, h: int = 64, epochs: int = 300, lr: float = 0.5, seed: int = 0, bias: bool = True) -> EncoderModel:
    mask = g.mask("train")
    return fit_encoder_arrays(g.X[mask], g.Y[mask], d1, h, epochs, lr, seed, bias)


def encode(model: EncoderModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d0:
        raise EncoderError(f"features have shape {X.shape}; encoder expects {model.d0} columns")
    return np.tanh(X @ model.W_in + model.b_in) @ model.W_out + model.b_out


def pseudo_label(model: EncoderModel, g: Graph, mode: str = "none") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Y, rows)``: targets for every node and the mask of rows used in training.

    ``mode="all"`` labels every non-train node with the head's argmax (ties go
    to the lowest class index); ``"none"`` trains on the train split only.
    """
    if mode not in PSEUDO_LABEL_MODES:
        raise ValueError(f"pseudo-label mode must be one of {PSEUDO_LABEL_MODES}, got {mode!r}")
    train = g.mask("train")
    if mode == "none":
        return g.Y.copy(), train
    pred = model.head_scores(g.X).argmax(axis=1)
    Y = g.Y.copy()
    rest = ~train
    Y[rest] = 0.0
    Y[np.flatnonzero(rest), pred[rest]] = 1.0
    return Y, np.ones(g.n, dtype=bool)
