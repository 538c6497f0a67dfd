"""Stratified k-fold cross-validation with a "mean ± std" summary.

Defaults to the procedural textures; pass a dataset root or manifest for real images.
"""

import argparse

from vitmat.augment import AugPolicy
from vitmat.cli import load_index
from vitmat.data import DatasetIndex, kfold, load_images
from vitmat.evaluate import cv_evaluate
from vitmat.synthetic import ACCEPTANCE_COUNTS, TEXTURE_CLASSES, generate_textures
from vitmat.train import TrainConfig
from vitmat.vit import ViTConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset")
    ap.add_argument("--preset", default="tiny", choices=("tiny", "base"))
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--seed", type=int, default=0)
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
    plan = kfold(index, args.k, args.seed)
    res = cv_evaluate(images, labels, plan, index.classes, cfg,
                      TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed),
                      AugPolicy.scaled(cfg.image_size), args.seed,
                      on_fold=lambda f, r: print(f"fold {f}: {r.overall_accuracy:.4f}", flush=True))
    print(f"{args.k}-fold accuracy: {res.summary.summary}")


if __name__ == "__main__":
    main()
