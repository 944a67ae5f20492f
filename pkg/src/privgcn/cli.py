"""Command-line front end: ``gen``, ``train``, ``infer``, ``audit`` and ``replay``.

Option precedence is built-in defaults < ``--config`` file < flags. Config
files hold ``key = value`` lines using the long flag names (``delta-l`` and
``delta_l`` are equivalent); ``#`` starts a comment.

Exit codes: 0 ok, 1 internal error, 2 invalid input, 3 optimizer failure,
4 calibration failure, 5 sensitivity audit violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from privgcn import __version__, kernels
from privgcn.calibration import CalibrationError, PrivacyBudget, privacy_report
from privgcn.datasets import SyntheticSpec, generate_sbm, load_dataset, make_split, save_dataset
from privgcn.graph import Graph
from privgcn.inference import InferenceConfig, class_counts, infer, micro_f1
from privgcn.objective import LossSpec
from privgcn.propagation import PropagationConfig, normalize_rows, parse_step
from privgcn.sensitivity import MAX_AUDIT_NODES, empirical_sensitivity
from privgcn.trainer import (
    ConvergenceError,
    EncoderSettings,
    OptimizerSettings,
    StationarityError,
    TrainConfig,
    load_artifact,
    save_artifact,
    train,
)

log = logging.getLogger("privgcn")

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_CALIBRATION, EXIT_AUDIT = 0, 1, 2, 3, 4, 5

MODEL_FILE = "model.npz"
REPORT_FILE = "privacy_report.txt"
MANIFEST_FILE = "manifest.json"
PREDICTIONS_FILE = "predictions.tsv"
METRICS_FILE = "metrics.txt"
AUDIT_FILE = "audit.tsv"


class UsageError(ValueError):
    pass


# -- option parsing helpers ---------------------------------------------------


def _steps(text) -> str:
    toks = [t for t in str(text).split(",") if t.strip()]
    return ",".join("inf" if parse_step(t) == math.inf else str(parse_step(t)) for t in toks)


def _onoff(text) -> bool:
    t = str(text).strip().lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[Any], Any]
    default: Any
    help: str = ""
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple | None = None
    hidden: bool = False


def _pos(v):
    return v > 0


def _unit_open(v):
    return 0 < v < 1


DATA_OPTS = [
    Opt("dataset", str, None, "dataset directory (TSV schema)"),
]
PROP_OPTS = [
    Opt("alpha", float, 0.5, "restart probability", lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    Opt("steps", _steps, "inf", "comma list of propagation steps; 'inf' allowed"),
    Opt("clip", float, 0.5, "cap on off-diagonal normalized adjacency entries", lambda v: 0 < v <= 0.5, "must lie in (0, 1/2]"),
]
TRAIN_OPTS = DATA_OPTS + PROP_OPTS + [
    Opt("epsilon", float, 4.0, "privacy budget epsilon", _pos, "must be positive"),
    Opt("delta", float, 1e-3, "privacy budget delta", _unit_open, "must lie in (0, 1)"),
    Opt("omega", float, 0.9, "budget allocator", _unit_open, "must lie in (0, 1)"),
    Opt("lambda", float, 0.2, "base regularization coefficient", _pos, "must be positive"),
    Opt("xi", float, 1e-3, "margin added to the regularizer lower bound", _pos, "must be positive"),
    Opt("loss", str, "mlsm", "base loss", choices=("mlsm", "pseudo-huber")),
    Opt("delta-l", float, 0.5, "pseudo-Huber width", _pos, "must be positive"),
    Opt("d1", int, 16, "encoder output width", _pos, "must be positive"),
    Opt("hidden", int, 64, "encoder hidden width", _pos, "must be positive"),
    Opt("epochs", int, 300, "encoder gradient-descent epochs", lambda v: v >= 0, "must be non-negative"),
    Opt("lr", float, 0.5, "encoder learning rate", _pos, "must be positive"),
    Opt("encoder-seed", int, 0, "encoder initialization seed"),
    Opt("pseudo-label", str, "all", "pseudo-label unlabeled nodes", choices=("none", "all")),
    Opt("max-iters", int, 50_000, "optimizer iteration cap", _pos, "must be positive"),
    Opt("grad-tol", float, 1e-8, "optimizer gradient-norm tolerance", _pos, "must be positive"),
    Opt("seed", int, 0, "noise seed"),
]
INFER_OPTS = DATA_OPTS + [
    Opt("model", str, None, "trained model artifact"),
    Opt("mode", str, "private", "inference mode", choices=("private", "public")),
    Opt("alpha-i", float, None, "inference restart probability (default: training alpha)", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    Opt("infer-one-over-s", _onoff, True, "scale private-mode concatenation by 1/s (on|off)"),
]
AUDIT_OPTS = DATA_OPTS + PROP_OPTS + [
    Opt("direction", str, "both", "neighbors to enumerate", choices=("both", "remove", "add")),
    Opt("max-nodes", int, MAX_AUDIT_NODES, "refuse larger graphs", _pos, "must be positive"),
    Opt("workers", int, 1, "threads for neighbor evaluation", _pos, "must be positive"),
    Opt("bound-override", float, None, hidden=True),
]
GEN_OPTS = [
    Opt("kind", str, "sbm", "generator", choices=("sbm", "blobs-on-graph")),
    Opt("n", int, 400, "node count", _pos, "must be positive"),
    Opt("classes", int, 4, "class count", lambda v: v >= 2, "must be at least 2"),
    Opt("p-in", float, 0.08, "intra-class edge probability", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    Opt("p-out", float, 0.0066, "inter-class edge probability", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    Opt("noise", float, 1.0, "feature noise standard deviation", lambda v: v >= 0, "must be non-negative"),
    Opt("d0", int, 16, "raw feature width", _pos, "must be positive"),
    Opt("train-per-class", int, 20, "training nodes per class", lambda v: v >= 0, "must be non-negative"),
    Opt("val", int, 100, "validation nodes", lambda v: v >= 0, "must be non-negative"),
    Opt("test", int, 200, "test nodes", lambda v: v >= 0, "must be non-negative"),
    Opt("seed", int, 0, "generator and split seed"),
]

COMMANDS = {"train": TRAIN_OPTS, "infer": INFER_OPTS, "audit": AUDIT_OPTS, "gen": GEN_OPTS}
REQUIRED = {"train": ("dataset",), "infer": ("dataset", "model"), "audit": ("dataset",), "gen": ()}


def read_config(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("_", "-")] = val
    return out


def resolve(command: str, flags: dict[str, Any], config_path=None) -> dict[str, Any]:
    """Merge defaults, config file and flags; convert and validate every value."""
    opts = {o.name: o for o in COMMANDS[command]}
    raw: dict[str, Any] = {name: o.default for name, o in opts.items()}
    if config_path:
        for key, val in read_config(config_path).items():
            if key not in opts:
                raise UsageError(f"{config_path}: unknown key {key!r} for '{command}'")
            raw[key] = val
    for key, val in flags.items():
        if val is not None:
            raw[key] = val
    resolved = {}
    for name, o in opts.items():
        val = raw[name]
        if val is not None:
            try:
                val = o.type(val)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"--{name}: {exc}") from None
            if o.choices and val not in o.choices:
                raise UsageError(f"--{name}: must be one of {', '.join(o.choices)}, got {val!r}")
            if o.check and not o.check(val):
                raise UsageError(f"--{name} {o.rule}, got {val!r}")
        resolved[name] = val
    for name in REQUIRED[command]:
        if resolved.get(name) is None:
            raise UsageError(f"--{name} is required")
    return resolved


# -- manifest -----------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file() and f.name != MANIFEST_FILE:
                    out[str(f)] = sha256_file(f)
        elif p.is_file():
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(out_dir: Path, command: str, resolved: dict, inputs, outputs, started: float, seed=None) -> Path:
    manifest = {
        "subcommand": command,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": resolved,
        "seed": seed,
        "inputs": _digests(inputs),
        "outputs": {Path(k).name: v for k, v in _digests(outputs).items()},
        "out": str(out_dir),
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 6),
    }
    path = out_dir / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- subcommands --------------------------------------------------------------


def train_config_from(r: dict) -> TrainConfig:
    loss = "pseudo_huber" if r["loss"] == "pseudo-huber" else r["loss"]
    return TrainConfig(
        budget=PrivacyBudget(r["epsilon"], r["delta"], r["omega"]),
        loss=LossSpec(loss, 2, r["delta-l"]),  # class count filled in from the dataset
        propagation=PropagationConfig(r["alpha"], tuple(r["steps"].split(","))),
        Lambda=r["lambda"],
        xi=r["xi"],
        clip=r["clip"],
        encoder=EncoderSettings(r["d1"], r["hidden"], r["epochs"], r["lr"], r["encoder-seed"]),
        pseudo_label=r["pseudo-label"],
        optimizer=OptimizerSettings(max_iters=r["max-iters"], grad_tol=r["grad-tol"]),
        seed=r["seed"],
    )


def _out_dir(path) -> Path:
    if path is None:
        raise UsageError("--out is required")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(r: dict, out: Path, started: float) -> int:
    g = load_dataset(r["dataset"])
    cfg = train_config_from(r)
    from dataclasses import replace

    cfg = replace(cfg, loss=LossSpec(cfg.loss.kind, g.num_classes, cfg.loss.delta_l))
    art = train(g, cfg)
    save_artifact(art, out / MODEL_FILE)
    (out / REPORT_FILE).write_text(privacy_report(art.calibration))
    write_manifest(out, "train", r, [r["dataset"]], [out / MODEL_FILE, out / REPORT_FILE], started, r["seed"])
    print(f"model written to {out / MODEL_FILE} (branch {art.calibration.branch}, {art.iterations} iterations)")
    return EXIT_OK


def cmd_infer(r: dict, out: Path, started: float) -> int:
    g = load_dataset(r["dataset"])
    art = load_artifact(r["model"])
    if g.X.shape[1] != art.encoder.d0:
        raise UsageError(f"dataset has {g.X.shape[1]} feature columns; model expects {art.encoder.d0}")
    icfg = InferenceConfig(r["mode"], r["alpha-i"], r["infer-one-over-s"])
    scores = infer(art, g, icfg)
    pred = scores.argmax(axis=1)
    with open(out / PREDICTIONS_FILE, "w") as fh:
        for i in range(g.n):
            fh.write(f"{i}\t{pred[i]}\t" + "\t".join(repr(float(s)) for s in scores[i]) + "\n")
    outputs = [out / PREDICTIONS_FILE]
    labeled = g.labels >= 0
    if labeled.any() and g.num_classes == art.c:
        lines = [f"mode\t{icfg.mode}", f"alpha_I\t{icfg.alpha_I if icfg.alpha_I is not None else art.propagation.alpha}",
                 f"one_over_s\t{'on' if icfg.one_over_s else 'off'}", f"steps\t{art.propagation.steps_str()}"]
        for tag in ("train", "val", "test"):
            m = g.mask(tag)
            if m.any():
                lines.append(f"micro_f1_{tag}\t{micro_f1(scores, g.Y, m)!r}")
        lines.append(f"micro_f1_labeled\t{micro_f1(scores, g.Y, labeled)!r}")
        for key, vals in class_counts(scores, g.Y, labeled).items():
            lines.append(f"{key}\t" + "\t".join(map(str, vals)))
        (out / METRICS_FILE).write_text("\n".join(lines) + "\n")
        outputs.append(out / METRICS_FILE)
    write_manifest(out, "infer", r, [r["dataset"], r["model"]], outputs, started)
    print(f"predictions written to {out / PREDICTIONS_FILE}")
    return EXIT_OK


def cmd_audit(r: dict, out: Path, started: float) -> int:
    g = load_dataset(r["dataset"])
    cfg = PropagationConfig(r["alpha"], tuple(r["steps"].split(",")))
    X = normalize_rows(g.X)
    rep = empirical_sensitivity(
        g, cfg, X, p=r["clip"], direction=r["direction"], max_nodes=r["max-nodes"],
        workers=r["workers"], bound=r["bound-override"],
    )
    rep.write(out / AUDIT_FILE)
    write_manifest(out, "audit", r, [r["dataset"]], [out / AUDIT_FILE], started)
    bad = rep.violations("remove")
    print(
        f"bound {rep.bound:.6g}  removal max {rep.removal_max:.6g}  addition max {rep.addition_max:.6g}  "
        f"min slack {rep.min_slack:.6g}  removal violations {len(bad)}"
    )
    if bad:
        print(f"error: {len(bad)} edge-removal neighbors exceed the sensitivity bound", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_gen(r: dict, out: Path, started: float) -> int:
    spec = SyntheticSpec(r["kind"], r["n"], r["classes"], r["p-in"], r["p-out"], r["noise"], r["d0"], r["seed"])
    g = make_split(generate_sbm(spec), r["train-per-class"], r["val"], r["test"], r["seed"])
    save_dataset(g, out)
    write_manifest(out, "gen", r, [], [out], started, r["seed"])
    print(f"dataset written to {out} ({g.n} nodes, {len(g.edges)} edges)")
    return EXIT_OK


HANDLERS = {"train": cmd_train, "infer": cmd_infer, "audit": cmd_audit, "gen": cmd_gen}


def run(command: str, resolved: dict, out) -> int:
    started = time.time()
    return HANDLERS[command](resolved, _out_dir(out), started)


def cmd_replay(manifest_path, out) -> int:
    """Re-run a recorded command and compare output digests."""
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest["subcommand"]
    resolved = resolve(command, manifest["config"])
    out_dir = _out_dir(out)
    code = run(command, resolved, out_dir)
    if code != EXIT_OK:
        return code
    fresh = json.loads((out_dir / MANIFEST_FILE).read_text())["outputs"]
    if fresh != manifest["outputs"]:
        diff = sorted(k for k in set(fresh) | set(manifest["outputs"]) if fresh.get(k) != manifest["outputs"].get(k))
        print(f"error: replay outputs differ: {', '.join(diff)}", file=sys.stderr)
        return EXIT_INTERNAL
    print("replay reproduced every output digest")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privgcn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in COMMANDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key = value file")
        p.add_argument("--out", help="output directory")
        for o in opts:
            p.add_argument(
                f"--{o.name}", dest=o.name, default=None,
                help=argparse.SUPPRESS if o.hidden else f"{o.help} (default: {o.default})",
            )
    rp = sub.add_parser("replay", help="re-run a manifest and verify output digests")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args.manifest, args.out)
        flags = {o.name: getattr(args, o.name) for o in COMMANDS[args.command]}
        resolved = resolve(args.command, flags, args.config)
        return run(args.command, resolved, args.out)
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConvergenceError, StationarityError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
