"""Base losses, their derivative suprema, and the perturbed regularized objective.

The objective over a ``d x c`` parameter matrix ``Theta`` is::

    (1/n1) sum_i sum_j l(z_i . theta_j; y_ij)
        + (Lambda/2) ||Theta||^2 + (1/n1) <B, Theta> + (Lambda'/2) ||Theta||^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from privgcn import kernels

LOSS_KINDS = {"mlsm": kernels.MLSM, "pseudo_huber": kernels.PSEUDO_HUBER}
_ALIASES = {"multilabel_soft_margin": "mlsm", "pseudo-huber": "pseudo_huber", "ph": "pseudo_huber"}


@dataclass(frozen=True)
class LossSpec:
    kind: str
    c: int
    delta_l: float = 0.5

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; choose mlsm or pseudo_huber")
        if int(self.c) < 2:
            raise ValueError(f"need at least two classes, got {self.c}")
        if kind == "pseudo_huber" and not self.delta_l > 0:
            raise ValueError(f"pseudo-Huber width must be positive, got {self.delta_l}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "c", int(self.c))
        object.__setattr__(self, "delta_l", float(self.delta_l))

    @property
    def code(self) -> int:
        return LOSS_KINDS[self.kind]


@dataclass(frozen=True)
class DerivativeSuprema:
    c1: float
    c2: float
    c3: float


def derivative_suprema(spec: LossSpec) -> DerivativeSuprema:
    c = spec.c
    if spec.kind == "mlsm":
        return DerivativeSuprema(1.0 / c, 1.0 / (4.0 * c), 1.0 / (6.0 * math.sqrt(3.0) * c))
    dl = spec.delta_l
    return DerivativeSuprema(dl / c, 1.0 / c, 48.0 * math.sqrt(5.0) / (125.0 * c * dl))


def loss_value_and_derivs(spec: LossSpec, x, y):
    """Return ``(l, l', l'', l''')`` at ``x`` for binary target ``y``.

    Scalars in, floats out; arrays broadcast elementwise.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(xa)):
        raise ValueError("loss argument must be finite")
    if not np.all((ya == 0) | (ya == 1)):
        raise ValueError("targets must be 0 or 1")
    xb, yb = np.broadcast_arrays(xa, ya)
    out = kernels.loss_derivs(spec.code, np.ascontiguousarray(xb), np.ascontiguousarray(yb), float(spec.c), spec.delta_l)
    if xb.ndim == 0:
        return tuple(float(np.asarray(v).reshape(-1)[0]) for v in out)
    return out


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Training rows ``Z`` (n1 x d), one-hot targets ``Y`` (n1 x c) and the
    perturbation ``B`` (d x c)."""

    Z: np.ndarray
    Y: np.ndarray
    Lambda: float
    loss: LossSpec
    LambdaPrime: float = 0.0
    B: np.ndarray | None = None
    loss_weight: float = 1.0
    _B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Z = np.ascontiguousarray(self.Z, dtype=np.float64)
        Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        if Z.ndim != 2 or Y.ndim != 2 or Z.shape[0] != Y.shape[0]:
            raise ValueError(f"Z {Z.shape} and Y {Y.shape} disagree")
        if Y.shape[1] != self.loss.c:
            raise ValueError(f"Y has {Y.shape[1]} columns, loss expects {self.loss.c} classes")
        if not np.all((Y == 0) | (Y == 1)):
            raise ValueError("targets must be 0 or 1")
        if self.Lambda < 0 or self.LambdaPrime < 0:
            raise ValueError("regularization coefficients must be non-negative")
        B = np.zeros((Z.shape[1], Y.shape[1])) if self.B is None else np.asarray(self.B, dtype=np.float64)
        if B.shape != (Z.shape[1], Y.shape[1]):
            raise ValueError(f"noise matrix has shape {B.shape}, expected {(Z.shape[1], Y.shape[1])}")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "_B", B)

    @property
    def n1(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    @property
    def c(self) -> int:
        return self.Y.shape[1]

    @property
    def noise(self) -> np.ndarray:
        return self._B

    @property
    def strong_convexity(self) -> float:
        return self.Lambda + self.LambdaPrime

    def _check(self, Theta):
        Theta = np.asarray(Theta, dtype=np.float64)
        if Theta.shape != (self.d, self.c):
            raise ValueError(f"Theta has shape {Theta.shape}, expected {(self.d, self.c)}")
        return Theta


def objective_value(ctx: ObjectiveContext, Theta) -> float:
    Theta = ctx._check(Theta)
    data = 0.0
    if ctx.loss_weight:
        M = ctx.Z @ Theta
        data = ctx.loss_weight * kernels.loss_sum(ctx.loss.code, M, ctx.Y, float(ctx.loss.c), ctx.loss.delta_l) / ctx.n1
    sq = float(np.sum(Theta * Theta))
    return data + 0.5 * ctx.strong_convexity * sq + float(np.sum(ctx.noise * Theta)) / ctx.n1


def objective_value_and_gradient(ctx: ObjectiveContext, Theta) -> tuple[float, np.ndarray]:
    Theta = ctx._check(Theta)
    grad = ctx.strong_convexity * Theta + ctx.noise / ctx.n1
    data = 0.0
    if ctx.loss_weight:
        M = ctx.Z @ Theta
        total, G = kernels.loss_and_grad_margins(ctx.loss.code, M, ctx.Y, float(ctx.loss.c), ctx.loss.delta_l)
        w = ctx.loss_weight / ctx.n1
        data = w * total
        grad = grad + w * (ctx.Z.T @ G)
    value = data + 0.5 * ctx.strong_convexity * float(np.sum(Theta * Theta)) + float(np.sum(ctx.noise * Theta)) / ctx.n1
    return value, grad


def objective_gradient(ctx: ObjectiveContext, Theta) -> np.ndarray:
    return objective_value_and_gradient(ctx, Theta)[1]


def unperturbed_gradient(ctx: ObjectiveContext, Theta) -> np.ndarray:
    """Gradient of the data term plus both quadratic terms, without ``B``."""
    return objective_gradient(ctx, Theta) - ctx.noise / ctx.n1


@dataclass
class ConvexityReport:
    trials: int
    violations: int
    max_violation: float
    min_curvature: float


def convexity_probe(ctx: ObjectiveContext, trials: int = 1000, scale: float = 3.0, tol: float = 1e-9, seed: int = 0) -> ConvexityReport:
    """Check the strong-convexity inequality at random pairs and mixing weights.

    ``max_violation`` is the largest amount by which the mixed value exceeds
    the strongly convex upper bound (negative when it holds everywhere).
    ``min_curvature`` is the smallest observed chord gap divided by
    ``t(1-t)||T1-T2||^2 / 2``; it never drops below ``Lambda + Lambda'``.
    """
    mu = ctx.strong_convexity
    if mu <= 0:
        raise ValueError("probe needs Lambda + Lambda' > 0")
    rng = np.random.default_rng(seed)
    worst = -np.inf
    curv = np.inf
    bad = 0
    for _ in range(trials):
        T1 = rng.normal(scale=scale, size=(ctx.d, ctx.c))
        T2 = rng.normal(scale=scale, size=(ctx.d, ctx.c))
        t = rng.uniform(0.0, 1.0)
        lhs = objective_value(ctx, t * T1 + (1 - t) * T2)
        chord = t * objective_value(ctx, T1) + (1 - t) * objective_value(ctx, T2)
        q = 0.5 * t * (1 - t) * float(np.sum((T1 - T2) ** 2))
        gap = lhs - (chord - mu * q)
        worst = max(worst, gap)
        if q > 0:
            curv = min(curv, (chord - lhs) / q)
        if gap > tol:
            bad += 1
    return ConvexityReport(trials, bad, float(worst), float(curv))
