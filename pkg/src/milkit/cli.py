"""Command-line interface.

Commands: generate-mnist-bags, train, eval, crossval, attention, gradcheck.
Every command accepts ``--config FILE`` (``key=value`` lines, ``#`` comments);
explicit flags override config values, which override built-in defaults.

Reports are JSON (keys sorted), tabular artifacts are CSV; with identical
flags and seed every primary output is byte-identical across runs. Wall-clock
timings go to a separate ``run_info.json`` so they never break that contract.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, bagdata, kernels, metrics
from .errors import MilkitError, ValidationError
from .gradcheck import run_gradcheck
from .models import (
    MODEL_KINDS,
    MultiAttentionParams,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .rng import Xoshiro256StarStar, derive_seed
from .training import TrainConfig, evaluate_bags, score_bags, train

CHECKPOINT_NAME = "model.milckpt"


# -- small shared helpers -----------------------------------------------------


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _repr_float(x) -> str:
    return repr(float(x))


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {s!r}")


def _parse_widths(s) -> tuple[int, int, int]:
    if isinstance(s, tuple):
        return s
    try:
        widths = tuple(int(p) for p in str(s).split(","))
    except ValueError:
        raise ValidationError(f"bad widths {s!r}; expected e.g. 256,128,64") from None
    if len(widths) != 3:
        raise ValidationError(f"expected exactly three widths, got {s!r}")
    return widths


def _read_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    values = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def _resolve(args, defaults: dict, casts: dict) -> dict:
    """defaults <- config file <- explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        for key, raw in _read_config_file(args.config).items():
            if key not in defaults:
                raise ValidationError(f"unknown config key {key!r} for this command")
            cfg[key] = casts.get(key, str)(raw)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = casts.get(key, lambda v: v)(val) if isinstance(val, str) else val
    return cfg


def _require(cfg: dict, *keys):
    for key in keys:
        if cfg[key] is None:
            raise ValidationError(f"--{key.replace('_', '-')} is required")


def _load_ids_file(path) -> list[str]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines and lines[0] == "bag_id":
        lines = lines[1:]
    if not lines:
        raise ValidationError(f"ids file {path} lists no bag ids")
    return lines


def _write_ids_file(path, ids) -> None:
    Path(path).write_text("bag_id\n" + "".join(f"{i}\n" for i in ids))


def _select_bags(dataset, ids: list[str]):
    by_id = {bag.id: bag for bag in dataset.bags}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"bag ids not in dataset: {', '.join(missing[:5])}")
    return [by_id[i] for i in ids]


def _metric_block(y_true, y_pred, scores=None) -> dict:
    c = metrics.confusion(y_true, y_pred)
    block = {
        "accuracy": metrics.accuracy(c),
        "f1": metrics.f1(c),
        "f1_degenerate": metrics.f1_degenerate(c),
        "confusion": {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn},
        "n_bags": c.total,
    }
    if scores is not None:
        block["auroc"] = metrics.auroc(scores, y_true)
    return block


def _write_predictions(path, bags, probs, threshold: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("bag_id,prob_positive,predicted,label\n")
        for bag, p in zip(bags, probs):
            fh.write(f"{bag.id},{_repr_float(p)},{int(p >= threshold)},{bag.label}\n")


def _write_roc_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("fpr,tpr,threshold\n")
        for fpr, tpr, thr in points:
            fh.write(f"{_repr_float(fpr)},{_repr_float(tpr)},{_repr_float(thr)}\n")


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        model=cfg["model"],
        learning_rate=cfg["lr"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        hidden=cfg["hidden"],
        attention_width=cfg["attention_width"],
        minet_widths=_parse_widths(cfg["minet_widths"]),
        shuffle=cfg["shuffle"],
        dropout=cfg["dropout"],
    )


_MODEL_DEFAULTS = {
    "model": "multi_attention",
    "hidden": 256,
    "attention_width": 128,
    "minet_widths": (256, 128, 64),
    "lr": 1e-4,
    "epochs": 30,
    "seed": 0,
    "shuffle": True,
    "dropout": 0.0,
}

_MODEL_CASTS = {
    "hidden": int,
    "attention_width": int,
    "minet_widths": _parse_widths,
    "lr": float,
    "epochs": int,
    "seed": int,
    "shuffle": _parse_bool,
    "dropout": float,
}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--hidden", type=int, help="FC width of the attention model")
    p.add_argument("--attention-width", type=int, help="attention hidden width")
    p.add_argument("--minet-widths", help="MI-Net layer widths, e.g. 256,128,64")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--dropout", type=float, help="dropout rate after FC layers (default off)")


# -- commands -------------------------------------------------------------------


def cmd_generate_mnist_bags(args) -> int:
    defaults = {
        "images": None,
        "labels": None,
        "out": None,
        "n_bags": 5000,
        "bag_size": 10,
        "min_positive": 1,
        "max_positive": 4,
        "seed": 0,
    }
    casts = {k: int for k in ("n_bags", "bag_size", "min_positive", "max_positive", "seed")}
    cfg = _resolve(args, defaults, casts)
    _require(cfg, "images", "labels", "out")

    digits = bagdata.load_mnist_idx(cfg["images"], cfg["labels"])
    ds = bagdata.generate_mnist_bags(
        digits,
        n_bags=cfg["n_bags"],
        bag_size=cfg["bag_size"],
        seed=cfg["seed"],
        positive_count_range=(cfg["min_positive"], cfg["max_positive"]),
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    bagdata.save_bag_dataset(ds, out)
    _write_json(
        out / "generation_meta.json",
        {
            "n_bags": cfg["n_bags"],
            "bag_size": cfg["bag_size"],
            "positive_count_range": [cfg["min_positive"], cfg["max_positive"]],
            "seed": cfg["seed"],
            "dim": ds.dim,
            "class_counts": {str(k): v for k, v in ds.class_counts.items()},
            "source_images": len(digits),
        },
    )
    print(f"wrote {len(ds.bags)} bags (dim {ds.dim}) to {out}")
    return 0


def cmd_train(args) -> int:
    defaults = dict(_MODEL_DEFAULTS, data=None, out=None, holdout_fraction=0.2)
    casts = dict(_MODEL_CASTS, holdout_fraction=float)
    cfg = _resolve(args, defaults, casts)
    _require(cfg, "data", "out")
    if not 0.0 <= cfg["holdout_fraction"] < 1.0:
        raise ValidationError(
            f"holdout fraction must be in [0, 1), got {cfg['holdout_fraction']}"
        )

    ds = bagdata.load_bag_dataset(cfg["data"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    n = len(ds.bags)
    indices = list(range(n))
    n_test = int(round(n * cfg["holdout_fraction"]))
    if n - n_test < 1:
        raise ValidationError("holdout fraction leaves no training bags")
    if n_test > 0:
        Xoshiro256StarStar(cfg["seed"]).substream("holdout").shuffle(indices)
    train_bags = [ds.bags[i] for i in sorted(indices[: n - n_test])]
    test_bags = [ds.bags[i] for i in sorted(indices[n - n_test :])]

    params, history = train(train_bags, _train_config(cfg))
    save_checkpoint(out / CHECKPOINT_NAME, params)
    history.to_csv(out / "history.csv")
    _write_ids_file(out / "split_train.csv", [b.id for b in train_bags])
    if test_bags:
        _write_ids_file(out / "split_test.csv", [b.id for b in test_bags])
    _write_json(
        out / "run.json",
        {
            "command": "train",
            "dataset": str(cfg["data"]),
            "model": cfg["model"],
            "config": {
                "lr": cfg["lr"],
                "epochs": cfg["epochs"],
                "seed": cfg["seed"],
                "hidden": cfg["hidden"],
                "attention_width": cfg["attention_width"],
                "minet_widths": list(_parse_widths(cfg["minet_widths"])),
                "shuffle": cfg["shuffle"],
                "dropout": cfg["dropout"],
                "holdout_fraction": cfg["holdout_fraction"],
            },
            "n_train": len(train_bags),
            "n_test": len(test_bags),
            "final_train_accuracy": history.accuracy[-1],
            "final_mean_loss": history.mean_loss[-1],
        },
    )
    print(
        f"trained {cfg['model']} for {cfg['epochs']} epochs on {len(train_bags)} bags: "
        f"train accuracy {history.accuracy[-1]:.4f}, checkpoint {out / CHECKPOINT_NAME}"
    )
    return 0


def cmd_eval(args) -> int:
    defaults = {"data": None, "checkpoint": None, "out": None, "ids_file": None,
                "threshold": 0.5}
    casts = {"threshold": float}
    cfg = _resolve(args, defaults, casts)
    _require(cfg, "data", "checkpoint", "out")

    params = load_checkpoint(cfg["checkpoint"])
    ds = bagdata.load_bag_dataset(cfg["data"])
    bags = ds.bags
    if cfg["ids_file"]:
        bags = _select_bags(ds, _load_ids_file(cfg["ids_file"]))

    probs = score_bags(bags, params)
    y_true = [b.label for b in bags]
    y_pred = (probs >= cfg["threshold"]).astype(int)
    report = _metric_block(y_true, y_pred, scores=probs)
    report["model_kind"] = params.kind
    report["threshold"] = cfg["threshold"]

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report)
    _write_predictions(out / "predictions.csv", bags, probs, cfg["threshold"])
    print(
        f"evaluated {len(bags)} bags: accuracy {report['accuracy']:.4f}, "
        f"auroc {report['auroc']:.4f}, f1 {report['f1']:.4f}"
    )
    return 0


def cmd_crossval(args) -> int:
    defaults = dict(_MODEL_DEFAULTS, data=None, out=None, k=3, threshold=0.5)
    casts = dict(_MODEL_CASTS, k=int, threshold=float)
    cfg = _resolve(args, defaults, casts)
    _require(cfg, "data", "out")

    started = time.monotonic()
    ds = bagdata.load_bag_dataset(cfg["data"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    split = bagdata.stratified_kfold([b.label for b in ds.bags], k=cfg["k"],
                                     seed=cfg["seed"])

    fold_reports = []
    fold_metrics = []
    try:
        for fold in range(cfg["k"]):
            train_bags = [ds.bags[i] for i in split.train_indices(fold)]
            test_bags = [ds.bags[i] for i in split.test_indices(fold)]
            fold_cfg = _train_config(cfg)
            fold_cfg.seed = derive_seed(cfg["seed"], f"fold{fold}")
            params, _ = train(train_bags, fold_cfg)

            fold_dir = out / f"fold{fold}"
            fold_dir.mkdir(exist_ok=True)
            save_checkpoint(fold_dir / CHECKPOINT_NAME, params)

            probs = score_bags(test_bags, params)
            y_true = [b.label for b in test_bags]
            y_pred = (probs >= cfg["threshold"]).astype(int)
            block = _metric_block(y_true, y_pred, scores=probs)
            _write_roc_csv(out / f"roc_fold{fold}.csv", metrics.roc_points(probs, y_true))

            fold_metrics.append(
                metrics.MetricSet(block["accuracy"], block["auroc"], block["f1"])
            )
            fold_reports.append(
                dict(
                    block,
                    fold=fold,
                    n_train=len(train_bags),
                    n_test=len(test_bags),
                    checkpoint=f"fold{fold}/{CHECKPOINT_NAME}",
                    roc_points=f"roc_fold{fold}.csv",
                )
            )
    except Exception as exc:
        _write_json(
            out / "report_partial.json",
            {"completed_folds": fold_reports, "error": str(exc)},
        )
        raise

    mean, std = metrics.aggregate_folds(fold_metrics)
    report = {
        "command": "crossval",
        "dataset": str(cfg["data"]),
        "model": cfg["model"],
        "seed": cfg["seed"],
        "config": {
            "lr": cfg["lr"],
            "epochs": cfg["epochs"],
            "k": cfg["k"],
            "hidden": cfg["hidden"],
            "attention_width": cfg["attention_width"],
            "minet_widths": list(_parse_widths(cfg["minet_widths"])),
            "threshold": cfg["threshold"],
            "shuffle": cfg["shuffle"],
            "dropout": cfg["dropout"],
        },
        "folds": fold_reports,
        "mean": {"accuracy": mean.accuracy, "auroc": mean.auroc, "f1": mean.f1},
        "std": {"accuracy": std.accuracy, "auroc": std.auroc, "f1": std.f1},
    }
    _write_json(out / "report.json", report)
    _write_json(
        out / "run_info.json",
        {"wall_clock_seconds": time.monotonic() - started, "completed": True},
    )
    print(
        f"{cfg['k']}-fold crossval of {cfg['model']}: "
        f"accuracy {mean.accuracy:.4f} ± {std.accuracy:.4f}, "
        f"auroc {mean.auroc:.4f} ± {std.auroc:.4f}, "
        f"f1 {mean.f1:.4f} ± {std.f1:.4f}"
    )
    return 0


def cmd_attention(args) -> int:
    defaults = {"data": None, "checkpoint": None, "out": None, "bag_ids": None,
                "threshold": 0.5}
    casts = {"threshold": float}
    cfg = _resolve(args, defaults, casts)
    _require(cfg, "data", "checkpoint", "out")

    params = load_checkpoint(cfg["checkpoint"])
    if not isinstance(params, MultiAttentionParams):
        raise ValidationError(
            f"attention export needs a multi_attention checkpoint, got {params.kind}"
        )
    ds = bagdata.load_bag_dataset(cfg["data"])
    bags = ds.bags
    if cfg["bag_ids"]:
        ids = [s.strip() for s in str(cfg["bag_ids"]).split(",") if s.strip()]
        bags = _select_bags(ds, ids)

    records = []
    for bag in bags:
        probs, att = predict(bag, params)
        p_pos = float(probs[1])
        records.append(
            {
                "bag_id": bag.id,
                "label": bag.label,
                "predicted": int(p_pos >= cfg["threshold"]),
                "prob_positive": p_pos,
                "layers": [layer.tolist() for layer in att.layer_scores],
                "instance_refs": bag.instance_refs,
            }
        )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "attention.json", records)
    print(f"wrote attention scores for {len(records)} bags to {out / 'attention.json'}")
    return 0


def cmd_gradcheck(args) -> int:
    defaults = {"seed": 20240, "tolerance": 1e-4, "perturb_weights": False, "out": None}
    casts = {"seed": int, "tolerance": float, "perturb_weights": _parse_bool}
    cfg = _resolve(args, defaults, casts)

    report = run_gradcheck(
        tolerance=cfg["tolerance"], seed=cfg["seed"], perturb=cfg["perturb_weights"]
    )
    for model in report.models:
        for check in model.checks:
            print(f"{model.model:16s} {check.tensor:12s} max_rel_err={check.max_rel_err:.3e}")
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"gradcheck [{kernels.BACKEND} backend]: {verdict} "
        f"(max relative error {report.max_rel_err:.3e}, tolerance {report.tolerance:g})"
    )
    if cfg["out"]:
        _write_json(
            cfg["out"],
            {
                "backend": kernels.BACKEND,
                "tolerance": report.tolerance,
                "max_rel_err": report.max_rel_err,
                "passed": report.passed,
                "models": [
                    {
                        "model": m.model,
                        "checks": [
                            {"tensor": c.tensor, "max_rel_err": c.max_rel_err}
                            for c in m.checks
                        ],
                    }
                    for m in report.models
                ],
            },
        )
    return 0 if report.passed else 4


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="milkit",
        description="Multiple-instance learning: train, evaluate, inspect attention.",
    )
    parser.add_argument("--version", action="version", version=f"milkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-mnist-bags", help="build a digit-bags dataset from IDX files")
    p.add_argument("--images", help="IDX image file (uncompressed)")
    p.add_argument("--labels", help="IDX label file (uncompressed)")
    p.add_argument("--out", help="output dataset directory")
    p.add_argument("--n-bags", type=int)
    p.add_argument("--bag-size", type=int)
    p.add_argument("--min-positive", type=int)
    p.add_argument("--max-positive", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(run=cmd_generate_mnist_bags)

    p = sub.add_parser("train", help="train a model, optionally holding out a test split")
    p.add_argument("--data", help="bag dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--holdout-fraction", type=float,
                   help="fraction of bags held out as a test split (default 0.2)")
    _add_model_flags(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--ids-file", help="restrict evaluation to the listed bag ids")
    p.add_argument("--threshold", type=float)
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--k", type=int)
    p.add_argument("--threshold", type=float)
    _add_model_flags(p)
    p.set_defaults(run=cmd_crossval)

    p = sub.add_parser("attention", help="export per-instance attention scores")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--bag-ids", help="comma-separated bag ids (default: all)")
    p.add_argument("--threshold", type=float)
    p.set_defaults(run=cmd_attention)

    p = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--perturb-weights", action="store_true", default=None,
                   help="negative control: corrupt one gradient so the check fails")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(run=cmd_gradcheck)

    for sp in sub.choices.values():
        sp.add_argument("--config", help="key=value config file; flags override it")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except MilkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
