"""Training pipeline: encode, normalize, propagate, calibrate, perturb, minimize.

The released quantity is ``Theta_priv``, the exact minimizer of the perturbed
objective. Artifacts also keep the noise seed and radii so a run can be
replayed; treat the artifact file as a private record and publish only the
parameter matrix.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from privgcn import kernels
from privgcn.calibration import CalibrationError, CalibrationResult, PrivacyBudget, calibrate
from privgcn.encoder import EncoderModel, encode, fit_encoder, pseudo_label
from privgcn.graph import Graph, normalize_adjacency
from privgcn.noise import RNG_DESCRIPTION, NoiseMatrix, child_seed, sample_noise_matrix
from privgcn.objective import (
    LossSpec,
    ObjectiveContext,
    objective_value_and_gradient,
    unperturbed_gradient,
)
from privgcn.propagation import PropagationConfig, aggregate, normalize_rows, parse_step
from privgcn.sensitivity import sensitivity_bound

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
#: Fixed zip timestamp so identical runs give identical artifact bytes.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
NOISE_STREAM = 1


class ConvergenceError(RuntimeError):
    pass


class StationarityError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 50_000
    grad_tol: float = 1e-8
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60


@dataclass
class OptimizerTrace:
    iterations: int
    grad_norm: float
    values: list[float] = field(default_factory=list)

    @property
    def final_value(self) -> float:
        return self.values[-1]


def minimize_objective(
    ctx: ObjectiveContext, init=None, settings: OptimizerSettings = OptimizerSettings()
) -> tuple[np.ndarray, OptimizerTrace]:
    """Gradient descent with Armijo backtracking.

    The first trial step of each iteration is the Barzilai-Borwein step from
    the previous iterate, then halved until sufficient decrease. Once the
    decrease falls below floating-point resolution of the objective, a step
    is accepted if it does not raise the objective beyond that resolution
    and shrinks the gradient.
    """
    if ctx.strong_convexity <= 0:
        raise ValueError("objective is not strongly convex (Lambda + Lambda' must be > 0)")
    Theta = np.zeros((ctx.d, ctx.c)) if init is None else np.array(init, dtype=np.float64)
    f, g = objective_value_and_gradient(ctx, Theta)
    gnorm = float(np.linalg.norm(g))
    if not (math.isfinite(f) and math.isfinite(gnorm)):
        raise ConvergenceError("objective or gradient is not finite at the starting point")
    values = [f]
    step = 1.0
    prev = None
    it = 0
    while gnorm > settings.grad_tol:
        if it >= settings.max_iters:
            raise ConvergenceError(
                f"no convergence after {it} iterations: gradient norm {gnorm:.3e} > {settings.grad_tol:.1e}"
            )
        if prev is not None:
            s_vec = Theta - prev[0]
            y_vec = g - prev[1]
            sy = float(np.sum(s_vec * y_vec))
            if sy > 0:
                step = float(np.sum(s_vec * s_vec)) / sy
        t = step
        g2 = gnorm * gnorm
        fuzz = 8.0 * np.finfo(float).eps * max(1.0, abs(f))
        for _ in range(settings.max_backtracks):
            cand = Theta - t * g
            f_new, g_new = objective_value_and_gradient(ctx, cand)
            if f_new <= f - settings.armijo * t * g2:
                break
            if f_new <= f + fuzz and settings.armijo * t * g2 <= fuzz and np.linalg.norm(g_new) < gnorm:
                break
            t *= settings.shrink
        else:
            raise ConvergenceError(f"line search failed at iteration {it} (gradient norm {gnorm:.3e})")
        prev = (Theta, g)
        Theta, f, g = cand, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        values.append(f)
        it += 1
    return Theta, OptimizerTrace(it, gnorm, values)


@dataclass(frozen=True)
class EncoderSettings:
    d1: int = 16
    h: int = 64
    epochs: int = 300
    lr: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    budget: PrivacyBudget
    loss: LossSpec
    propagation: PropagationConfig
    Lambda: float = 0.2
    xi: float = 1e-3
    clip: float = 0.5
    encoder: EncoderSettings = EncoderSettings()
    pseudo_label: str = "none"
    optimizer: OptimizerSettings = OptimizerSettings()
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["propagation"] = {"alpha": self.propagation.alpha, "steps": self.propagation.steps_str()}
        return d


@dataclass(eq=False)
class ModelArtifact:
    Theta: np.ndarray
    encoder: EncoderModel
    calibration: CalibrationResult
    propagation: PropagationConfig
    loss: LossSpec
    clip: float
    seed: int
    radii: np.ndarray
    iterations: int
    grad_norm: float
    objective: float
    stationarity_residual: float
    train_rows: int
    config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    # in-memory diagnostics, never serialized
    noise: NoiseMatrix | None = field(default=None, repr=False)
    context: ObjectiveContext | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.Theta.shape[0]

    @property
    def c(self) -> int:
        return self.Theta.shape[1]

    def metadata(self) -> dict:
        return {
            "format_version": self.format_version,
            "calibration": self.calibration.to_dict(),
            "propagation": {"alpha": self.propagation.alpha, "steps": self.propagation.steps_str()},
            "loss": {"kind": self.loss.kind, "c": self.loss.c, "delta_l": self.loss.delta_l},
            "clip": self.clip,
            "seed": self.seed,
            "rng": RNG_DESCRIPTION,
            "optimizer": {
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "objective": self.objective,
                "stationarity_residual": self.stationarity_residual,
            },
            "encoder": {
                "hidden_activation": self.encoder.hidden_activation,
                "output_activation": self.encoder.output_activation,
                "head_activation": self.encoder.head_activation,
                "train_accuracy": self.encoder.train_accuracy,
            },
            "train_rows": self.train_rows,
            "config": self.config,
        }


def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(a, dtype="<f8"), allow_pickle=False)
    return buf.getvalue()


def _write_member(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_artifact(art: ModelArtifact, path) -> None:
    """Zip of little-endian float64 ``.npy`` members plus ``meta.json``."""
    arrays = {"Theta": art.Theta, "radii": art.radii}
    arrays.update({f"encoder/{k}": v for k, v in art.encoder.arrays().items()})
    with zipfile.ZipFile(path, "w") as zf:
        _write_member(zf, "meta.json", json.dumps(art.metadata(), indent=2, sort_keys=True).encode())
        for name in sorted(arrays):
            _write_member(zf, f"{name}.npy", _npy_bytes(arrays[name]))


def load_artifact(path) -> ModelArtifact:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported artifact format {meta.get('format_version')!r}")
        arrays = {
            name[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
            for name in zf.namelist()
            if name.endswith(".npy")
        }
    enc_meta = meta["encoder"]
    encoder = EncoderModel(
        **{k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("encoder/")},
        hidden_activation=enc_meta["hidden_activation"],
        output_activation=enc_meta["output_activation"],
        head_activation=enc_meta["head_activation"],
        train_accuracy=enc_meta["train_accuracy"],
    )
    prop = meta["propagation"]
    opt = meta["optimizer"]
    return ModelArtifact(
        Theta=arrays["Theta"],
        encoder=encoder,
        calibration=CalibrationResult.from_dict(meta["calibration"]),
        propagation=PropagationConfig(prop["alpha"], tuple(parse_step(t) for t in prop["steps"].split(","))),
        loss=LossSpec(**meta["loss"]),
        clip=meta["clip"],
        seed=meta["seed"],
        radii=arrays["radii"],
        iterations=opt["iterations"],
        grad_norm=opt["grad_norm"],
        objective=opt["objective"],
        stationarity_residual=opt["stationarity_residual"],
        train_rows=meta["train_rows"],
        config=meta["config"],
        format_version=meta["format_version"],
    )


def encoded_features(encoder: EncoderModel, X) -> np.ndarray:
    """Encoder output with every nonzero row scaled to unit L2 norm."""
    return normalize_rows(encode(encoder, X))


def recover_noise(ctx: ObjectiveContext, Theta) -> np.ndarray:
    """Noise implied by stationarity: ``-n1`` times the unperturbed gradient."""
    return -ctx.n1 * unperturbed_gradient(ctx, Theta)


def stationarity_residual(ctx: ObjectiveContext, Theta) -> np.ndarray:
    """Per-column ``||B_recovered - B|| / (1 + ||B||_F)``."""
    diff = recover_noise(ctx, Theta) - ctx.noise
    return np.linalg.norm(diff, axis=0) / (1.0 + np.linalg.norm(ctx.noise))


def train(g: Graph, cfg: TrainConfig, encoder: EncoderModel | None = None) -> ModelArtifact:
    """Fit a model on ``g``; ``encoder`` skips encoder fitting when given."""
    es = cfg.encoder
    if encoder is None:
        encoder = fit_encoder(g, es.d1, es.h, es.epochs, es.lr, es.seed)
    X = encoded_features(encoder, g.X)
    Y, rows = pseudo_label(encoder, g, cfg.pseudo_label)
    adj = normalize_adjacency(g, cfg.clip)
    agg = aggregate(adj, X, cfg.propagation)
    Z, Yt = agg.Z[rows], Y[rows]
    n1, d = Z.shape
    if d != cfg.propagation.s * encoder.d1:
        raise AssertionError("feature width does not match s * d1")

    cal = calibrate(cfg.budget, cfg.loss, cfg.propagation, n1, d, cfg.Lambda, cfg.xi)
    if cal.PsiZ != sensitivity_bound(cfg.propagation):
        raise AssertionError("calibration and sensitivity modules disagree on Psi(Z)")
    noise = sample_noise_matrix(d, cfg.loss.c, cal.beta, child_seed(cfg.seed, NOISE_STREAM))
    if not np.all(np.isfinite(noise.B)):
        raise CalibrationError(f"noise rate beta={cal.beta:.3e} overflows the sampled noise")

    ctx = ObjectiveContext(Z, Yt, cal.Lambda_eff, cfg.loss, cal.LambdaPrime, noise.B)
    Theta, trace = minimize_objective(ctx, None, cfg.optimizer)
    resid = stationarity_residual(ctx, Theta)
    if resid.max() > 1e-4:
        raise StationarityError(f"recovered noise deviates from the sample by {resid.max():.3e}")
    log.info(
        "trained: n1=%d d=%d branch=%s beta=%.4g iters=%d |grad|=%.2e backend=%s",
        n1, d, cal.branch, cal.beta, trace.iterations, trace.grad_norm, kernels.BACKEND,
    )
    return ModelArtifact(
        Theta=Theta,
        encoder=encoder,
        calibration=cal,
        propagation=cfg.propagation,
        loss=cfg.loss,
        clip=cfg.clip,
        seed=cfg.seed,
        radii=noise.radii,
        iterations=trace.iterations,
        grad_norm=trace.grad_norm,
        objective=trace.final_value,
        stationarity_residual=float(resid.max()),
        train_rows=n1,
        config=cfg.to_dict(),
        noise=noise,
        context=ctx,
    )


def fit_nonprivate(g: Graph, cfg: TrainConfig, encoder: EncoderModel | None = None) -> np.ndarray:
    """Minimizer of the unperturbed objective with the caller's regularizer."""
    es = cfg.encoder
    if encoder is None:
        encoder = fit_encoder(g, es.d1, es.h, es.epochs, es.lr, es.seed)
    X = encoded_features(encoder, g.X)
    Y, rows = pseudo_label(encoder, g, cfg.pseudo_label)
    Z = aggregate(normalize_adjacency(g, cfg.clip), X, cfg.propagation).Z
    ctx = ObjectiveContext(Z[rows], Y[rows], cfg.Lambda, cfg.loss)
    return minimize_objective(ctx, None, cfg.optimizer)[0]


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
