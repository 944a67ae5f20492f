"""Scoring nodes with a released model, and micro-F1 evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from privgcn.graph import Graph, normalize_adjacency
from privgcn.propagation import aggregate
from privgcn.trainer import ModelArtifact, encoded_features

INFERENCE_MODES = ("private", "public")


@dataclass(frozen=True)
class InferenceConfig:
    """``private`` mixes each node only with its direct neighbors;
    ``public`` recomputes the full training-time propagation.

    ``alpha_I`` defaults to the training restart probability. ``one_over_s``
    scales the private-mode concatenation by ``1/s`` to match training.
    """

    mode: str = "private"
    alpha_I: float | None = None
    one_over_s: bool = True

    def __post_init__(self):
        if self.mode not in INFERENCE_MODES:
            raise ValueError(f"inference mode must be one of {INFERENCE_MODES}, got {self.mode!r}")
        if self.alpha_I is not None and not (0.0 <= self.alpha_I <= 1.0):
            raise ValueError(f"alpha_I must lie in [0, 1], got {self.alpha_I}")


def private_features(adj_matrix: np.ndarray, X: np.ndarray, steps, alpha_I: float, one_over_s: bool = True) -> np.ndarray:
    one_hop = None
    blocks = []
    for m in steps:
        if m == 0:
            blocks.append(X)
        else:
            if one_hop is None:
                one_hop = (1.0 - alpha_I) * (adj_matrix @ X) + alpha_I * X
            blocks.append(one_hop)
    Z = np.hstack(blocks)
    return Z / len(steps) if one_over_s else Z


def infer(art: ModelArtifact, g: Graph, cfg: InferenceConfig = InferenceConfig()) -> np.ndarray:
    """Return the ``n x c`` score matrix for every node of ``g``."""
    X = encoded_features(art.encoder, g.X)
    adj = normalize_adjacency(g, art.clip)
    if cfg.mode == "public":
        Z = aggregate(adj, X, art.propagation).Z
    else:
        alpha_I = art.propagation.alpha if cfg.alpha_I is None else cfg.alpha_I
        Z = private_features(adj.matrix, X, art.propagation.steps, alpha_I, cfg.one_over_s)
    if Z.shape[1] != art.Theta.shape[0]:
        raise ValueError(f"feature width {Z.shape[1]} does not match model width {art.Theta.shape[0]}")
    return Z @ art.Theta


def predict(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores, axis=1)


def micro_f1(scores: np.ndarray, Y_true: np.ndarray, mask) -> float:
    """Micro-averaged F1 over ``mask``; equals accuracy for single-label targets."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("evaluation mask selects no nodes")
    pred = predict(np.asarray(scores)[mask])
    Yt = np.asarray(Y_true)[mask]
    if np.any(Yt.sum(axis=1) != 1):
        raise ValueError("evaluation nodes must carry exactly one label")
    P = np.eye(Yt.shape[1])[pred]
    tp = float(np.sum(P * Yt))
    fp = float(np.sum(P * (1 - Yt)))
    fn = float(np.sum((1 - P) * Yt))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def class_counts(scores: np.ndarray, Y_true: np.ndarray, mask) -> dict[str, list[int]]:
    mask = np.asarray(mask, dtype=bool)
    pred = predict(np.asarray(scores)[mask])
    truth = np.asarray(Y_true)[mask].argmax(axis=1)
    c = scores.shape[1]
    return {
        "support": np.bincount(truth, minlength=c).tolist(),
        "predicted": np.bincount(pred, minlength=c).tolist(),
        "correct": np.bincount(truth[pred == truth], minlength=c).tolist(),
    }
