"""Command-line pipelines: synth, corrupt, purify, retrain, eval, report.

Every run resolves its full configuration (defaults < config file < flags)
and writes a manifest recording the resolved config, input digests, and
seeds; re-running a subcommand with ``--config <manifest>`` reproduces the
outputs bitwise. Heavy imports happen inside handlers so ``--threads`` can
pin BLAS thread counts before numpy loads.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written alongside every output."""

    command: str
    artifact_version: str
    created_utc: str
    config: dict
    inputs: dict
    outputs: dict
    seeds: dict


def _apply_threads(argv: list[str]) -> None:
    # Best effort: only effective when numpy has not been imported yet.
    threads = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads is None or "numpy" in sys.modules:
        return
    for var in _THREAD_ENV_VARS:
        os.environ[var] = threads


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(
    path: str | Path,
    command: str,
    config: dict,
    inputs: dict[str, str],
    outputs: dict[str, str],
    seeds: dict,
) -> None:
    from . import __version__

    manifest = RunManifest(
        command=command,
        artifact_version=__version__,
        created_utc=_utc_now(),
        config=config,
        inputs={name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        outputs={name: str(p) for name, p in outputs.items()},
        seeds=seeds,
    )
    Path(path).write_text(json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**data)


def _deep_update(base: dict, overlay: dict) -> dict:
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def _load_config_file(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "command" in data and "config" in data:  # a manifest: replay its config
        data = data["config"]
    version = data.get("version", 1)
    if version != 1:
        raise ValueError(f"{path}: unsupported config version {version}")
    return data


def _resolve(args: argparse.Namespace, defaults: dict, flag_map: dict[str, str]) -> dict:
    cfg = copy.deepcopy(defaults)
    if getattr(args, "config", None):
        _deep_update(cfg, _load_config_file(args.config))
    for dest, dotted in flag_map.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node[key]
        node[leaf] = value
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ValueError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _manifest_path(cfg: dict, primary_out: str) -> str:
    return cfg.get("manifest") or f"{primary_out}.manifest.json"


# ---------------------------------------------------------------- synth


def _synth_defaults() -> dict:
    return {
        "version": 1,
        "n": None,
        "dim": None,
        "classes": None,
        "separation": None,
        "seed": 0,
        "out_features": None,
        "out_labels": None,
        "n_val": 0,
        "out_val_features": None,
        "out_val_labels": None,
        "n_test": 0,
        "out_test_features": None,
        "out_test_labels": None,
        "manifest": None,
    }


_SYNTH_FLAGS = {
    "n": "n",
    "dim": "dim",
    "classes": "classes",
    "separation": "separation",
    "seed": "seed",
    "out_features": "out_features",
    "out_labels": "out_labels",
    "n_val": "n_val",
    "out_val_features": "out_val_features",
    "out_val_labels": "out_val_labels",
    "n_test": "n_test",
    "out_test_features": "out_test_features",
    "out_test_labels": "out_test_labels",
    "manifest": "manifest",
}


def _cmd_synth(args: argparse.Namespace) -> None:
    from . import data, noise

    cfg = _resolve(args, _synth_defaults(), _SYNTH_FLAGS)
    _require(cfg, "n", "dim", "classes", "separation", "out_features", "out_labels")
    if cfg["n_val"] > 0:
        _require(cfg, "out_val_features", "out_val_labels")
    if cfg["n_test"] > 0:
        _require(cfg, "out_test_features", "out_test_labels")

    spec = noise.MixtureSpec(
        n=cfg["n"], dim=cfg["dim"], classes=cfg["classes"],
        separation=cfg["separation"], seed=cfg["seed"],
    )
    train, val, test = noise.gen_gaussian_mixture_split(spec, cfg["n_val"], cfg["n_test"])
    outputs = {}
    data.write_features(train[0], cfg["out_features"])
    data.write_hard_labels(train[1], cfg["out_labels"])
    outputs["features"] = cfg["out_features"]
    outputs["labels"] = cfg["out_labels"]
    if val is not None:
        data.write_features(val[0], cfg["out_val_features"])
        data.write_onehot_csv(data.one_hot(val[1]), cfg["out_val_labels"])
        outputs["val_features"] = cfg["out_val_features"]
        outputs["val_labels"] = cfg["out_val_labels"]
    if test is not None:
        data.write_features(test[0], cfg["out_test_features"])
        data.write_hard_labels(test[1], cfg["out_test_labels"])
        outputs["test_features"] = cfg["out_test_features"]
        outputs["test_labels"] = cfg["out_test_labels"]
    _write_manifest(
        _manifest_path(cfg, cfg["out_features"]), "synth", cfg,
        inputs={}, outputs=outputs, seeds={"seed": cfg["seed"]},
    )
    print(f"synth: wrote {spec.n} samples ({spec.classes} classes, dim {spec.dim}) to {cfg['out_features']}")


# ---------------------------------------------------------------- corrupt


def _corrupt_defaults() -> dict:
    return {
        "version": 1,
        "labels": None,
        "kind": "symmetric",
        "ratio": None,
        "map": None,
        "seed": 0,
        "classes": None,
        "exact_count": False,
        "out": None,
        "manifest": None,
    }


_CORRUPT_FLAGS = {
    "labels": "labels",
    "kind": "kind",
    "ratio": "ratio",
    "map": "map",
    "seed": "seed",
    "classes": "classes",
    "exact_count": "exact_count",
    "out": "out",
    "manifest": "manifest",
}


def _parse_class_map(text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            src, dst = part.split(":")
            out[int(src)] = int(dst)
        except ValueError:
            raise ValueError(f"bad class map entry {part!r}, expected 'src:dst'") from None
    if not out:
        raise ValueError("empty class map")
    return out


def _cmd_corrupt(args: argparse.Namespace) -> None:
    from . import data, noise

    cfg = _resolve(args, _corrupt_defaults(), _CORRUPT_FLAGS)
    _require(cfg, "labels", "ratio", "out")
    labels = data.load_hard_labels(cfg["labels"], cfg["classes"])
    if cfg["kind"] == "symmetric":
        noisy = noise.inject_symmetric(labels, cfg["ratio"], cfg["seed"], cfg["exact_count"])
    elif cfg["kind"] == "asymmetric":
        if cfg["map"]:
            class_map = _parse_class_map(cfg["map"]) if isinstance(cfg["map"], str) else {
                int(k): int(v) for k, v in cfg["map"].items()
            }
        elif labels.n_classes == 10:
            class_map = dict(noise.CIFAR10_CLASS_MAP)
        else:
            raise ValueError(
                f"asymmetric noise over {labels.n_classes} classes needs an explicit --map"
            )
        noisy = noise.inject_asymmetric(labels, cfg["ratio"], class_map, cfg["seed"], cfg["exact_count"])
        cfg["map"] = ",".join(f"{k}:{v}" for k, v in sorted(class_map.items()))
    else:
        raise ValueError(f"unknown noise kind {cfg['kind']!r}")
    data.write_hard_labels(noisy, cfg["out"])
    changed = float((noisy.values != labels.values).mean())
    _write_manifest(
        _manifest_path(cfg, cfg["out"]), "corrupt", cfg,
        inputs={"labels": cfg["labels"]}, outputs={"labels": cfg["out"]},
        seeds={"seed": cfg["seed"]},
    )
    print(f"corrupt: flipped {changed:.1%} of {len(labels)} labels -> {cfg['out']}")


# ---------------------------------------------------------------- purify


def _purify_defaults() -> dict:
    from .purifier import PurifierConfig

    purifier = asdict(PurifierConfig())
    purifier.pop("track_truth")
    return {
        "version": 1,
        "features": None,
        "labels": None,
        "val_features": None,
        "val_labels": None,
        "truth": None,
        "out_labels": None,
        "out_logits": None,
        "report": None,
        "manifest": None,
        "threads": None,
        "purifier": purifier,
    }


_PURIFY_FLAGS = {
    "features": "features",
    "labels": "labels",
    "val_features": "val_features",
    "val_labels": "val_labels",
    "truth": "truth",
    "out_labels": "out_labels",
    "out_logits": "out_logits",
    "report": "report",
    "manifest": "manifest",
    "threads": "threads",
    "alpha": "purifier.ipc.alpha",
    "lam": "purifier.ipc.lam",
    "eta_i": "purifier.ipc.eta",
    "ipc_gamma_ent": "purifier.ipc.gamma_ent",
    "val_batch": "purifier.ipc.val_batch",
    "normalize_gram": "purifier.ipc.normalize_gram",
    "eta_e": "purifier.eac.eta",
    "period": "purifier.eac.period",
    "eac_gamma_ent": "purifier.eac.gamma_ent",
    "eac_lr": "purifier.eac.lr",
    "blend_space": "purifier.eac.blend_space",
    "hard_targets": "purifier.eac.hard_targets",
    "bias": "purifier.eac.use_bias",
    "batch": "purifier.batch_size",
    "epochs": "purifier.epochs",
    "seed": "purifier.shuffle_seed",
    "init_scale": "purifier.init_scale",
    "normalize_features": "purifier.normalize_features",
    "add_bias": "purifier.add_bias_feature",
    "ipc": "purifier.use_ipc",
    "eac": "purifier.use_eac",
    "eac_steps": "purifier.eac_steps_per_iter",
}


def _build_purifier_config(tree: dict, track_truth):
    from .eac import EacConfig
    from .ipc import IpcConfig
    from .purifier import PurifierConfig

    node = copy.deepcopy(tree)
    ipc = IpcConfig(**node.pop("ipc"))
    eac = EacConfig(**node.pop("eac"))
    return PurifierConfig(ipc=ipc, eac=eac, track_truth=track_truth, **node)


def _cmd_purify(args: argparse.Namespace) -> None:
    from . import data
    from .purifier import purify, save_report

    cfg = _resolve(args, _purify_defaults(), _PURIFY_FLAGS)
    _require(cfg, "features", "labels", "val_features", "val_labels", "out_labels")

    val_features = data.load_features(cfg["val_features"])
    val_labels = data.load_onehot_csv(cfg["val_labels"])
    val = data.CleanValidationSet(val_features, val_labels)
    features = data.load_features(cfg["features"])
    noisy = data.load_hard_labels(cfg["labels"], val.n_classes)
    truth = None
    if cfg["truth"]:
        truth = data.load_hard_labels(cfg["truth"], val.n_classes)

    pconfig = _build_purifier_config(cfg["purifier"], truth)
    logits, purified, rep = purify(features, noisy, val, pconfig)

    data.write_hard_labels(purified, cfg["out_labels"])
    outputs = {"labels": cfg["out_labels"]}
    if cfg["out_logits"]:
        data.write_features(data.FeatureMatrix(logits.values), cfg["out_logits"])
        outputs["logits"] = cfg["out_logits"]
    if cfg["report"]:
        save_report(rep, cfg["report"])
        outputs["report"] = cfg["report"]

    inputs = {
        "features": cfg["features"],
        "labels": cfg["labels"],
        "val_features": cfg["val_features"],
        "val_labels": cfg["val_labels"],
    }
    if cfg["truth"]:
        inputs["truth"] = cfg["truth"]
    _write_manifest(
        _manifest_path(cfg, cfg["out_labels"]), "purify", cfg,
        inputs=inputs, outputs=outputs,
        seeds={"shuffle_seed": cfg["purifier"]["shuffle_seed"], "eac_seed": cfg["purifier"]["eac"]["seed"]},
    )
    tail = ""
    if "final_accuracy" in rep.summary:
        tail = (
            f", accuracy {rep.summary['initial_accuracy']:.4f}"
            f" -> {rep.summary['final_accuracy']:.4f}"
        )
    print(f"purify: {rep.summary['iterations']} iterations{tail} -> {cfg['out_labels']}")


# ---------------------------------------------------------------- retrain


def _retrain_defaults() -> dict:
    from .evaluate import TrainConfig

    return {
        "version": 1,
        "features": None,
        "labels": None,
        "soft_logits": None,
        "alpha": 1.0,
        "out_model": None,
        "manifest": None,
        "threads": None,
        "train": asdict(TrainConfig()),
    }


_RETRAIN_FLAGS = {
    "features": "features",
    "labels": "labels",
    "soft_logits": "soft_logits",
    "alpha": "alpha",
    "out_model": "out_model",
    "manifest": "manifest",
    "threads": "threads",
    "epochs": "train.epochs",
    "batch": "train.batch",
    "lr": "train.lr",
    "seed": "train.seed",
    "weight_decay": "train.weight_decay",
}


def _cmd_retrain(args: argparse.Namespace) -> None:
    from . import data
    from .evaluate import TrainConfig, save_classifier, train_linear_ce, train_linear_on_targets

    cfg = _resolve(args, _retrain_defaults(), _RETRAIN_FLAGS)
    _require(cfg, "features", "out_model")
    features = data.load_features(cfg["features"])
    tconfig = TrainConfig(**cfg["train"])
    inputs = {"features": cfg["features"]}
    if cfg["soft_logits"]:
        logits = data.load_features(cfg["soft_logits"])
        targets = data.effective_labels(logits.values, cfg["alpha"])
        clf = train_linear_on_targets(features, targets, tconfig)
        inputs["soft_logits"] = cfg["soft_logits"]
    else:
        _require(cfg, "labels")
        labels = data.load_hard_labels(cfg["labels"])
        clf = train_linear_ce(features, labels, tconfig)
        inputs["labels"] = cfg["labels"]
    save_classifier(clf, cfg["out_model"])
    _write_manifest(
        _manifest_path(cfg, cfg["out_model"]), "retrain", cfg,
        inputs=inputs, outputs={"model": cfg["out_model"]},
        seeds={"seed": cfg["train"]["seed"]},
    )
    print(f"retrain: {features.n} samples -> {cfg['out_model']}")


# ---------------------------------------------------------------- eval


def _eval_defaults() -> dict:
    return {
        "version": 1,
        "model": None,
        "features": None,
        "labels": None,
        "out_json": None,
        "manifest": None,
        "threads": None,
    }


_EVAL_FLAGS = {
    "model": "model",
    "features": "features",
    "labels": "labels",
    "out_json": "out_json",
    "manifest": "manifest",
    "threads": "threads",
}


def _cmd_eval(args: argparse.Namespace) -> None:
    from . import data
    from .evaluate import evaluate_classifier, load_classifier

    cfg = _resolve(args, _eval_defaults(), _EVAL_FLAGS)
    _require(cfg, "model", "features", "labels")
    clf = load_classifier(cfg["model"])
    features = data.load_features(cfg["features"])
    labels = data.load_hard_labels(cfg["labels"], clf.n_classes)
    acc = evaluate_classifier(clf, features, labels)
    metrics = {"accuracy": acc, "n": features.n}
    print(json.dumps(metrics))
    outputs = {}
    if cfg["out_json"]:
        Path(cfg["out_json"]).write_text(json.dumps(metrics) + "\n", encoding="utf-8")
        outputs["metrics"] = cfg["out_json"]
    _write_manifest(
        _manifest_path(cfg, cfg["out_json"] or f"{cfg['model']}.eval"), "eval", cfg,
        inputs={"model": cfg["model"], "features": cfg["features"], "labels": cfg["labels"]},
        outputs=outputs, seeds={},
    )


# ---------------------------------------------------------------- report


def _cmd_report(args: argparse.Namespace) -> None:
    import csv as csv_mod

    from .purifier import load_report

    cfg = {
        "version": 1,
        "in": args.inp,
        "csv": args.csv,
        "manifest": args.manifest,
    }
    _require(cfg, "in", "csv")
    rep = load_report(cfg["in"])
    with open(cfg["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["p", "epoch", "val_loss", "grad_norm", "eac_update", "acc"])
        for rec in rep.records:
            writer.writerow(
                [
                    rec.p,
                    rec.epoch,
                    "" if rec.val_loss is None else rec.val_loss,
                    "" if rec.grad_norm is None else rec.grad_norm,
                    int(rec.eac_update),
                    "" if rec.acc is None else rec.acc,
                ]
            )
    _write_manifest(
        _manifest_path(cfg, cfg["csv"]), "report", cfg,
        inputs={"report": cfg["in"]}, outputs={"csv": cfg["csv"]}, seeds={},
    )
    print(f"report: {len(rep.records)} records -> {cfg['csv']}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelpure",
        description="Purify noisy classification labels over frozen feature embeddings.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    boolopt = argparse.BooleanOptionalAction

    p = sub.add_parser("synth", help="generate a Gaussian-mixture feature benchmark")
    p.add_argument("--config", help="JSON config file or manifest to replay")
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-features")
    p.add_argument("--out-labels")
    p.add_argument("--n-val", type=int, help="also draw a validation split from the same mixture")
    p.add_argument("--out-val-features")
    p.add_argument("--out-val-labels", help="one-hot CSV for the validation split")
    p.add_argument("--n-test", type=int)
    p.add_argument("--out-test-features")
    p.add_argument("--out-test-labels")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("corrupt", help="inject label noise into a labels file")
    p.add_argument("--config")
    p.add_argument("--labels")
    p.add_argument("--kind", choices=["symmetric", "asymmetric"])
    p.add_argument("--ratio", type=float)
    p.add_argument("--map", help="asymmetric class map, e.g. '0:1,2:3'")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int, help="class count (default: max index + 1)")
    p.add_argument("--exact-count", action=boolopt, default=None, help="flip an exact count instead of Bernoulli draws")
    p.add_argument("--out")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("purify", help="purify noisy labels against a clean validation set")
    p.add_argument("--config", help="JSON config file or manifest to replay")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--val-features")
    p.add_argument("--val-labels", help="one-hot CSV")
    p.add_argument("--truth", help="ground-truth labels, for reporting only")
    p.add_argument("--out-labels")
    p.add_argument("--out-logits")
    p.add_argument("--report", help="JSON-lines iteration report")
    p.add_argument("--alpha", type=float, help="softmax scaling of the label logits")
    p.add_argument("--lambda", dest="lam", type=float, help="ridge coefficient")
    p.add_argument("--eta-i", type=float, help="logit correction rate")
    p.add_argument("--eta-e", type=float, help="replacement momentum (1 = replace outright)")
    p.add_argument("--period", type=int, help="iterations between label replacements")
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, help="epoch shuffle seed")
    p.add_argument("--ipc-gamma-ent", type=float)
    p.add_argument("--eac-gamma-ent", type=float)
    p.add_argument("--eac-lr", type=float)
    p.add_argument("--eac-steps", type=int)
    p.add_argument("--val-batch", type=int)
    p.add_argument("--init-scale", type=float)
    p.add_argument("--blend-space", choices=["logit", "probability"])
    p.add_argument("--hard-targets", action=boolopt, default=None)
    p.add_argument("--bias", action=boolopt, default=None, help="classifier bias term")
    p.add_argument("--normalize-features", action=boolopt, default=None)
    p.add_argument("--normalize-gram", action=boolopt, default=None)
    p.add_argument("--add-bias", action=boolopt, default=None, help="append a constant-1 feature column")
    p.add_argument("--ipc", action=boolopt, default=None, help="enable the ridge corrector")
    p.add_argument("--eac", action=boolopt, default=None, help="enable the classifier corrector")
    p.add_argument("--threads", help="BLAS thread count (set before numpy loads)")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_purify)

    p = sub.add_parser("retrain", help="train a linear head with cross entropy")
    p.add_argument("--config")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--soft-logits", help="train on soft labels from this logits file instead")
    p.add_argument("--alpha", type=float, help="softmax scaling for --soft-logits")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--out-model")
    p.add_argument("--threads")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_retrain)

    p = sub.add_parser("eval", help="held-out accuracy of a trained head")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--out-json")
    p.add_argument("--threads")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="flatten a JSON-lines report to CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_report)

    return parser


def dispatch(argv: list[str]) -> int:
    """Route argv to a subcommand; 0 on success, 2 on usage error, 1 on failure."""
    _apply_threads(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 2
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
        return 0
    except Exception as exc:
        print(f"labelpure: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
