"""Accuracy across the six train/val/test division modes on one dataset.

Defaults to the procedural textures; pass a dataset root or manifest to use
real images. Writes one row per mode to stdout (CSV).
"""

import argparse
import csv
import sys

from vitmat.augment import AugPolicy
from vitmat.cli import load_index
from vitmat.data import DatasetIndex, SplitError, SplitSpec, load_images, stratified_split
from vitmat.evaluate import evaluate_images
from vitmat.rng import RngState
from vitmat.synthetic import ACCEPTANCE_COUNTS, TEXTURE_CLASSES, generate_textures
from vitmat.train import TrainConfig, fit
from vitmat.vit import ViTConfig, init_params

MODES = ((85, 0, 15), (70, 0, 30), (70, 15, 15), (60, 20, 20), (60, 10, 30), (80, 10, 10))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", help="dataset root or manifest (default: generated textures)")
    ap.add_argument("--preset", default="tiny", choices=("tiny", "base"))
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tta-count", type=int, default=1)
    args = ap.parse_args()

    if args.dataset:
        index = load_index(args.dataset)
    else:
        images, labels = generate_textures(ACCEPTANCE_COUNTS, 32, args.seed)
        index = DatasetIndex("textures", list(TEXTURE_CLASSES),
                             [(str(i), int(c)) for i, c in enumerate(labels)])
    cfg = ViTConfig.preset(args.preset, index.num_classes, class_names=tuple(index.classes))
    if args.dataset:
        images, labels = load_images(index, None, cfg.image_size)
    policy = AugPolicy.scaled(cfg.image_size)

    out = csv.writer(sys.stdout)
    out.writerow(["mode", "train", "val", "test", "best_val_epoch", "test_accuracy", "macro_f1"])
    for mode in MODES:
        name = "/".join(str(m) for m in mode if m)
        try:
            tr, va, te = stratified_split(index, SplitSpec.from_percent(*mode, seed=args.seed))
        except SplitError as exc:
            print(f"# {name}: skipped, {exc}", file=sys.stderr)
            continue
        params = init_params(cfg, RngState(args.seed))
        res = fit(params, cfg, [images[i] for i in tr], labels[tr], [images[i] for i in va], labels[va],
                  TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed), policy)
        final = res.best_params if va else res.params
        rep = evaluate_images(final, cfg, [images[i] for i in te], labels[te], index.classes, policy,
                              args.tta_count, args.seed)
        out.writerow([name, len(tr), len(va), len(te),
                      res.best_epoch if va else "", f"{rep.overall_accuracy:.4f}", f"{rep.macro['f1']:.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
