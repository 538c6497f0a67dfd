"""Batch command-line front end: ``vitmat <subcommand> [options]``.

Exit codes: 0 ok, 1 config/input error, 2 ingestion or I/O error,
3 training failure, 4 model/dataset class mismatch.

Output directory precedence: ``--out`` flag, then ``$VITMAT_OUT``, then the
config file's ``out_dir``, then ``runs``. Every command that writes artifacts
echoes its effective configuration to ``effective_config.json`` there, and all
validation happens before the directory is created.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import tensor as T
from .augment import AugPolicy, ImageError, tta_variants
from .data import (DatasetIndex, IngestionError, MappingError, SplitError, SplitSpec, class_histogram,
                   exact_name_alias, fold_manifest, kfold, load_alias_map, load_images, merge_datasets, scan_dataset,
                   split_manifest, stratified_split)
from .evaluate import cv_evaluate, emit_report, evaluate_images, render_confusion, tta_predict
from .imageio import ImageReadError, read_image, write_ppm
from .rng import RngState
from .train import TrainConfig, fit
from .vit import (CheckpointError, ClassCountMismatchError, ConfigurationError, ViTConfig,
                  init_params, load_checkpoint)

log = logging.getLogger("vitmat")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_TRAIN, EXIT_MISMATCH = 0, 1, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class TrainingFailure(RuntimeError):
    pass


# -- configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a run needs; built from a JSON file and then flag overrides.

    ``split`` holds train/val/test percentages and ``folds`` holds ``{"k": k}``;
    at most one of them may be set. With neither, the whole dataset trains.
    """

    dataset: str | None = None
    dataset_name: str | None = None
    test_set: str | None = None
    alias_map: str | None = None
    model: dict = field(default_factory=lambda: {"preset": "tiny"})
    train: dict = field(default_factory=dict)
    augment: dict = field(default_factory=dict)
    split: dict | None = None
    folds: dict | None = None
    seed: int = 0
    out_dir: str | None = None
    tta_count: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise CLIError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CLIError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise CLIError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # typed views; each raises CLIError on invalid values

    def train_config(self) -> TrainConfig:
        kw = dict(self.train)
        if "seed" in kw and kw["seed"] != self.seed:
            raise CLIError(f"train.seed {kw['seed']} conflicts with seed {self.seed}")
        kw["seed"] = self.seed
        try:
            return TrainConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise CLIError(f"invalid train config: {exc}") from exc

    def vit_config(self, num_classes: int, class_names=None) -> ViTConfig:
        kw = dict(self.model)
        preset = kw.pop("preset", None)
        try:
            if preset is None:
                return ViTConfig(num_classes=num_classes, class_names=class_names, **kw)
            return ViTConfig.preset(preset, num_classes, class_names=class_names, **kw)
        except (TypeError, ValueError) as exc:
            raise CLIError(f"invalid model config: {exc}") from exc

    def policy(self, image_size: int) -> AugPolicy:
        kw = dict(self.augment)
        kw.setdefault("image_size", image_size)
        try:
            return AugPolicy.scaled(**kw)
        except (TypeError, ValueError) as exc:
            raise CLIError(f"invalid augment config: {exc}") from exc

    def split_spec(self) -> SplitSpec | None:
        if self.split is None:
            return None
        s = self.split
        try:
            return SplitSpec.from_percent(s.get("train", 0), s.get("val", 0), s.get("test", 0), self.seed)
        except (SplitError, AttributeError) as exc:
            raise CLIError(f"invalid split: {exc}") from exc

    def fold_k(self) -> int | None:
        if self.folds is None:
            return None
        k = self.folds.get("k")
        if not isinstance(k, int) or k < 2:
            raise CLIError(f"k-fold needs an integer k >= 2, got {k!r}")
        return k

    def validate(self, need_dataset: bool = True) -> None:
        if self.split is not None and self.folds is not None:
            raise CLIError("config selects both a split and k-fold; choose one")
        if self.tta_count < 1:
            raise CLIError(f"tta_count must be >= 1, got {self.tta_count}")
        if need_dataset and not self.dataset:
            raise CLIError("no dataset given (config 'dataset' or --dataset)")
        for label, p in (("dataset", self.dataset), ("test_set", self.test_set),
                         ("alias_map", self.alias_map)):
            if p and not Path(p).exists():
                raise CLIError(f"{label} path {p} does not exist", EXIT_IO)
        self.train_config()
        self.split_spec()
        self.fold_k()
        image_size = self.vit_config(1).image_size
        self.policy(image_size)


def load_run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "dataset": getattr(args, "dataset", None),
        "test_set": getattr(args, "test_set", None),
        "seed": getattr(args, "seed", None),
        "tta_count": getattr(args, "tta_count", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    train_over = {"epochs": getattr(args, "epochs", None), "learning_rate": getattr(args, "lr", None),
                  "batch_size": getattr(args, "batch_size", None),
                  "precision": getattr(args, "precision", None)}
    cfg.train = {**cfg.train, **{k: v for k, v in train_over.items() if v is not None}}
    if getattr(args, "model", None):
        cfg.model = {**cfg.model, "preset": args.model}
    if getattr(args, "k", None) is not None:
        cfg.folds, cfg.split = {"k": args.k}, None
    return cfg


def _training_augment(checkpoint) -> dict:
    """The ``augment`` section of the run that wrote ``checkpoint``, if its config sits beside it.

    Used when eval/predict get no ``--config``, so TTA reuses the training policy.
    """
    path = Path(checkpoint).parent / "effective_config.json"
    try:
        aug = json.loads(path.read_text()).get("augment")
    except (OSError, ValueError, AttributeError):
        return {}
    if isinstance(aug, dict):
        log.info("using augment policy from %s", path)
        return aug
    return {}


def resolve_out(args, cfg: RunConfig | None = None) -> Path:
    flag = getattr(args, "out", None)
    return Path(flag or os.environ.get("VITMAT_OUT") or (cfg.out_dir if cfg else None) or "runs")


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _open_out(args, cfg: RunConfig | None = None, effective: dict | None = None) -> Path:
    out = resolve_out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    if effective is not None:
        _write_json(out / "effective_config.json", effective)
    return out


# -- dataset helpers ----------------------------------------------------------

def load_index(path, name: str | None = None, partition: str | None = None) -> DatasetIndex:
    """A dataset root directory, or a manifest JSON (optionally restricted to one partition)."""
    path = Path(path)
    if path.is_dir():
        return scan_dataset(path, name)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    if partition is not None:
        rows = manifest["samples"] if isinstance(manifest, dict) else manifest
        rows = [r for r in rows if r.get("partition") == partition]
        if not rows:
            raise CLIError(f"manifest {path} has no samples in partition {partition!r}")
        manifest = {**manifest, "samples": rows} if isinstance(manifest, dict) else rows
    return DatasetIndex.from_manifest(manifest, name)


def _histogram_lines(index: DatasetIndex) -> list[str]:
    counts, ratio = class_histogram(index)
    width = max(len(c) for c in index.classes)
    lines = [f"{c:<{width}}  {n}" for c, n in zip(index.classes, counts)]
    lines.append(f"{index.name}: {len(index)} samples, {index.num_classes} classes, "
                 f"imbalance {ratio:.2f}, skipped {index.skipped}")
    return lines


def _align_labels(index: DatasetIndex, config: ViTConfig) -> np.ndarray:
    """Dataset labels expressed in the checkpoint's class ids."""
    if index.num_classes != config.num_classes:
        raise ClassCountMismatchError(config.num_classes, index.num_classes)
    labels = index.labels
    names = config.class_names
    if names is None or list(names) == index.classes:
        return labels
    if set(names) == set(index.classes):
        remap = np.array([names.index(c) for c in index.classes], dtype=np.int64)
        return remap[labels]
    log.warning("class names differ between checkpoint and dataset; aligning by position")
    return labels


# -- subcommands ---------------------------------------------------------------

def cmd_scan(args) -> int:
    index = scan_dataset(args.root, args.name)
    out = _open_out(args)
    path = out / f"{index.name}_manifest.json"
    _write_json(path, index.to_manifest())
    print("\n".join(_histogram_lines(index)))
    print(f"manifest: {path}")
    return EXIT_OK


def cmd_merge(args) -> int:
    if args.alias and not Path(args.alias).exists():
        raise CLIError(f"alias map {args.alias} does not exist", EXIT_IO)
    a = load_index(args.a, args.names[0] if args.names else None)
    b = load_index(args.b, args.names[1] if args.names else None)
    alias = load_alias_map(args.alias)
    if args.alias is None and not {a.name, b.name} <= set(alias):
        # shipped map does not know these datasets: merge on identical class names
        alias = exact_name_alias({a.name: a.classes, b.name: b.classes})
    merged = merge_datasets(a, b, alias, args.name)
    out = _open_out(args)
    path = out / f"{merged.name}_manifest.json"
    _write_json(path, merged.to_manifest())
    print("\n".join(_histogram_lines(merged)))
    print(f"manifest: {path}")
    return EXIT_OK


def _parse_mode(mode: str) -> tuple[float, float, float]:
    try:
        parts = [float(p) for p in mode.split("/")]
    except ValueError as exc:
        raise CLIError(f"bad split mode {mode!r}; expected e.g. 70/30 or 70/15/15") from exc
    if len(parts) == 2:
        return parts[0], 0.0, parts[1]
    if len(parts) == 3:
        return tuple(parts)
    raise CLIError(f"bad split mode {mode!r}; expected 2 or 3 parts")


def cmd_split(args) -> int:
    if (args.mode is None) == (args.k is None):
        raise CLIError("choose exactly one of --mode and --k")
    index = load_index(args.dataset)
    if args.k is not None:
        if args.k < 2:
            raise CLIError(f"k-fold needs k >= 2, got {args.k}")
        plan = kfold(index, args.k, args.seed)
        manifest = fold_manifest(index, plan)
        summary = [f"fold {f}: {len(plan.test_ids(f))}" for f in range(args.k)]
        fname = f"{index.name}_folds{args.k}.json"
    else:
        try:
            spec = SplitSpec.from_percent(*_parse_mode(args.mode), seed=args.seed)
        except SplitError as exc:
            raise CLIError(str(exc)) from exc
        parts = stratified_split(index, spec)
        manifest = split_manifest(index, parts)
        summary = [f"{n}: {len(ids)}" for n, ids in zip(("train", "val", "test"), parts)]
        fname = f"{index.name}_split.json"
    out = _open_out(args)
    _write_json(out / fname, manifest)
    print("\n".join(summary))
    print(f"manifest: {out / fname}")
    return EXIT_OK


def _train(cfg: RunConfig, index: DatasetIndex, train_ids, val_ids, out: Path | None):
    tc = cfg.train_config()
    vcfg = cfg.vit_config(index.num_classes, tuple(index.classes))
    policy = cfg.policy(vcfg.image_size)
    tr_x, tr_y = load_images(index, train_ids, vcfg.image_size)
    va_x, va_y = load_images(index, val_ids, vcfg.image_size) if val_ids else ([], [])
    with T.precision(tc.precision):
        params = init_params(vcfg, RngState(cfg.seed).spawn(0))
    try:
        result = fit(params, vcfg, tr_x, tr_y, va_x, va_y, train_config=tc, policy=policy, out_dir=out)
    except OSError:
        raise
    except Exception as exc:
        raise TrainingFailure(f"train: {type(exc).__name__}: {exc}") from exc
    return result, vcfg, policy


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    cfg.validate()
    if cfg.folds is not None:
        raise CLIError("train takes a split (or none); use 'cv' for k-fold")
    index = load_index(cfg.dataset, cfg.dataset_name)
    spec = cfg.split_spec()
    if spec is None:
        train_ids, val_ids, test_ids = list(range(len(index))), [], []
    else:
        try:
            train_ids, val_ids, test_ids = stratified_split(index, spec)
        except SplitError as exc:
            raise CLIError(str(exc)) from exc
    out = _open_out(args, cfg, cfg.to_dict())
    if spec is not None:
        _write_json(out / "split.json", split_manifest(index, (train_ids, val_ids, test_ids)))
    result, _, _ = _train(cfg, index, train_ids, val_ids, out)
    last = result.history[-1]
    val = "n/a" if last.val_acc is None else f"{last.val_acc:.4f}"
    print(f"final epoch {last.epoch}: train_loss {last.train_loss:.4f} train_acc {last.train_acc:.4f} "
          f"val_acc {val}; best epoch {result.best_epoch}")
    print(f"checkpoint: {out / 'best.vitc'}")
    return EXIT_OK


def _write_report(report, out: Path, stem: str = "report") -> None:
    emit_report(report, out / f"{stem}.json", "json")
    emit_report(report, out / f"{stem}.csv", "csv")
    render_confusion(report.confusion, out / f"{stem}_confusion.pgm", report.classes)


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    if args.config is None and args.checkpoint is not None:
        cfg.augment = _training_augment(args.checkpoint)
    if cfg.test_set is None:
        cfg.test_set = cfg.dataset
    if args.train_set is not None:
        cfg.dataset = args.train_set
    tta = args.tta_count if args.tta_count is not None else (cfg.tta_count if args.tta else 1)
    if args.tta_count is not None and args.tta_count < 1:
        raise CLIError(f"--tta-count must be >= 1, got {args.tta_count}")
    if args.checkpoint is None and args.train_set is None:
        raise CLIError("eval needs --checkpoint or --train-set")
    if cfg.test_set is None:
        raise CLIError("eval needs a dataset (--test-set/--dataset or config)")
    if args.checkpoint is not None and not Path(args.checkpoint).exists():
        raise CLIError(f"checkpoint {args.checkpoint} does not exist", EXIT_IO)
    cfg.validate(need_dataset=args.train_set is not None)
    test_index = load_index(cfg.test_set, partition=args.partition)
    if args.checkpoint is not None:
        params, vcfg = load_checkpoint(args.checkpoint)
        labels = _align_labels(test_index, vcfg)
        out = _open_out(args, cfg, {**cfg.to_dict(), "checkpoint": str(args.checkpoint),
                                     "tta_count": tta, "partition": args.partition})
    else:
        # cross-dataset protocol: train on one set, test on the other
        train_index = load_index(cfg.dataset, cfg.dataset_name)
        if train_index.num_classes != test_index.num_classes:
            raise ClassCountMismatchError(train_index.num_classes, test_index.num_classes)
        out = _open_out(args, cfg, {**cfg.to_dict(), "train_set": str(args.train_set),
                                     "tta_count": tta, "partition": args.partition})
        result, vcfg, _ = _train(cfg, train_index, list(range(len(train_index))), [], out)
        params = result.params
        labels = _align_labels(test_index, vcfg)
    policy = cfg.policy(vcfg.image_size)
    images, _ = load_images(test_index, None, vcfg.image_size)
    classes = list(vcfg.class_names) if vcfg.class_names else test_index.classes
    report = evaluate_images(params, vcfg, images, labels, classes, policy, tta, seed=cfg.seed,
                             metadata={"dataset": test_index.name, "samples": len(test_index),
                                       "checkpoint": str(args.checkpoint or ""), "seed": cfg.seed})
    _write_report(report, out)
    print(f"overall accuracy {report.overall_accuracy:.4f} on {len(test_index)} samples "
          f"(macro f1 {report.macro['f1']:.4f})")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = load_run_config(args)
    if cfg.folds is None:
        cfg.folds, cfg.split = {"k": 5}, None
    cfg.validate()
    k = cfg.fold_k()
    index = load_index(cfg.dataset, cfg.dataset_name)
    tc = cfg.train_config()
    vcfg = cfg.vit_config(index.num_classes, tuple(index.classes))
    policy = cfg.policy(vcfg.image_size)
    plan = kfold(index, k, cfg.seed)
    out = _open_out(args, cfg, cfg.to_dict())
    _write_json(out / "folds.json", fold_manifest(index, plan))
    images, labels = load_images(index, None, vcfg.image_size)

    def on_fold(f, rep):
        d = out / f"fold_{f}"
        d.mkdir(exist_ok=True)
        _write_report(rep, d)
        print(f"fold {f}: accuracy {rep.overall_accuracy:.4f}")

    try:
        with T.precision(tc.precision):
            res = cv_evaluate(images, labels, plan, index.classes, vcfg, tc, policy, cfg.seed, on_fold)
    except RuntimeError as exc:
        raise TrainingFailure(str(exc)) from exc
    _write_json(out / "cv_summary.json", dataclasses.asdict(res.summary))
    print(f"{k}-fold accuracy: {res.summary.summary}")
    return EXIT_OK


def _policy_for(args, image_size: int, checkpoint=None) -> AugPolicy:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.config is None and checkpoint is not None:
        cfg.augment = _training_augment(checkpoint)
    return cfg.policy(image_size)


def cmd_predict(args) -> int:
    if args.tta_count is not None and args.tta_count < 1:
        raise CLIError(f"--tta-count must be >= 1, got {args.tta_count}")
    params, vcfg = load_checkpoint(args.checkpoint)
    policy = _policy_for(args, vcfg.image_size, args.checkpoint)
    img = read_image(args.image)
    count = (args.tta_count or 5) if args.tta else 1
    res = tta_predict(params, vcfg, img, policy, count, RngState(args.seed))
    names = list(vcfg.class_names) if vcfg.class_names else [str(i) for i in range(vcfg.num_classes)]
    print(names[res.label])
    if args.tta:
        hist = {names[c]: int(v) for c, v in enumerate(res.votes) if v}
        print("votes " + json.dumps(hist) + (" (tie)" if res.tied else ""))
    return EXIT_OK


def cmd_augment_preview(args) -> int:
    if args.count < 1:
        raise CLIError(f"--count must be >= 1, got {args.count}")
    policy = _policy_for(args, args.size)
    img = read_image(args.image)
    out = _open_out(args, None, {"image": str(args.image), "count": args.count, "seed": args.seed,
                                 "policy": dataclasses.asdict(policy)})
    for i, v in enumerate(tta_variants(img, policy, RngState(args.seed), args.count)):
        write_ppm(out / f"preview_{i:03d}.ppm", v)
    print(f"wrote {args.count} previews to {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vitmat", description="ViT material classification experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", help="output directory (overrides $VITMAT_OUT and config)")
        if config:
            sp.add_argument("--config", help="run config JSON")

    def run_flags(sp):
        sp.add_argument("--dataset", help="dataset root or manifest JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--precision", choices=("float32", "float64"))
        sp.add_argument("--model", help="model preset (tiny, base)")

    sp = sub.add_parser("scan", help="index a class-per-directory dataset")
    sp.add_argument("root")
    sp.add_argument("--name")
    common(sp, config=False)
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("merge", help="merge two datasets under a class alias map")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--alias", help="alias map JSON (default: shipped exact-name map)")
    sp.add_argument("--names", nargs=2, metavar=("NAME_A", "NAME_B"),
                    help="dataset names used for alias lookup")
    sp.add_argument("--name", help="merged dataset name")
    common(sp, config=False)
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("split", help="write a stratified split or k-fold manifest")
    sp.add_argument("dataset")
    sp.add_argument("--mode", help="train/test or train/val/test percentages, e.g. 70/15/15")
    sp.add_argument("--k", type=int)
    sp.add_argument("--seed", type=int, default=0)
    common(sp, config=False)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="train a model")
    run_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint, or train on one set and test another")
    sp.add_argument("--checkpoint")
    sp.add_argument("--test-set", "--manifest", dest="test_set", help="dataset root or manifest to evaluate")
    sp.add_argument("--train-set", help="train on this set first (cross-dataset protocol)")
    sp.add_argument("--partition", help="restrict a split manifest to one partition")
    sp.add_argument("--tta", action="store_true", help="vote over augmented copies")
    sp.add_argument("--tta-count", type=int)
    run_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("cv", help="k-fold cross-validation")
    sp.add_argument("--k", type=int)
    run_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("predict", help="classify one image")
    sp.add_argument("checkpoint")
    sp.add_argument("image")
    sp.add_argument("--tta", action="store_true")
    sp.add_argument("--tta-count", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="run config JSON (augment policy for TTA)")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("augment-preview", help="write augmented copies of one image")
    sp.add_argument("image")
    sp.add_argument("--count", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=224, help="output side length")
    common(sp)
    sp.set_defaults(func=cmd_augment_preview)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, CLIError):
        return exc.code
    if isinstance(exc, ClassCountMismatchError):
        return EXIT_MISMATCH
    if isinstance(exc, TrainingFailure):
        return EXIT_TRAIN
    if isinstance(exc, (IngestionError, ImageReadError, CheckpointError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ConfigurationError, SplitError, MappingError, ImageError, ValueError, KeyError)):
        return EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        print(f"vitmat {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
