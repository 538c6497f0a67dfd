"""Confusion matrices, per-class metrics, TTA voting, k-fold aggregation, reports.

Per-class metrics are one-vs-rest:

    precision = TP / (TP + FP)
    recall    = TP / (TP + FN)
    f1        = 2 * precision * recall / (precision + recall)
    ovr_accuracy = (TP + TN) / (TP + TN + FP + FN)

A zero denominator yields 0 and the metric name is listed in ``undefined``.
The scalar "overall accuracy" is ``trace(cm) / total`` and is reported
separately from the per-class one-vs-rest accuracy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugPolicy, normalize, resize_bilinear, tta_variants
from .imageio import write_pgm
from .rng import RngState, ensure_rng
from .tensor import no_grad
from .vit import ViTConfig, ViTParams, forward

CSV_COLUMNS = ("class", "support", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "ovr_accuracy")


def confusion(preds, labels, k: int) -> np.ndarray:
    """``cm[true, pred]`` counts as an int64 ``(k, k)`` array."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise ValueError(f"{preds.size} predictions for {labels.size} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} id outside [0, {k})")
    return np.bincount(labels * k + preds, minlength=k * k).reshape(k, k)


def one_vs_rest_counts(cm, c: int) -> tuple[int, int, int, int]:
    cm = np.asarray(cm)
    tp = int(cm[c, c])
    fp = int(cm[:, c].sum()) - tp
    fn = int(cm[c, :].sum()) - tp
    tn = int(cm.sum()) - tp - fp - fn
    return tp, fp, fn, tn


@dataclass
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    ovr_accuracy: float
    undefined: list[str] = field(default_factory=list)

    @property
    def support(self) -> int:
        return self.tp + self.fn


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def metrics(tp: int, fp: int, fn: int, tn: int) -> ClassMetrics:
    undefined = []
    precision, bad = _ratio(tp, tp + fp)
    if bad:
        undefined.append("precision")
    recall, bad = _ratio(tp, tp + fn)
    if bad:
        undefined.append("recall")
    f1, bad = _ratio(2 * precision * recall, precision + recall)
    if bad:
        undefined.append("f1")
    ovr_accuracy, bad = _ratio(tp + tn, tp + tn + fp + fn)
    if bad:
        undefined.append("ovr_accuracy")
    return ClassMetrics(tp, fp, fn, tn, precision, recall, f1, ovr_accuracy, undefined)


def overall_accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("overall accuracy of an empty evaluation is undefined")
    return float(np.trace(cm)) / total


# -- k-fold aggregation -------------------------------------------------------------

def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    m = float(arr.mean())
    return m, float(np.sqrt(((arr - m) ** 2).mean()))


def _fmt(v: float, min_decimals: int) -> str:
    s = f"{v:.2f}".rstrip("0")
    if s.endswith("."):
        s = s[:-1] if min_decimals == 0 else s + "0"
    return s


def format_mean_std(mean: float, std: float) -> str:
    """Percent summary, e.g. ``1.0, 0.0 -> "100 ± 0.0"``."""
    return f"{_fmt(100 * mean, 0)} ± {_fmt(100 * std, 1)}"


@dataclass
class FoldSummary:
    accuracies: list[float]
    mean: float
    std: float
    summary: str

    @classmethod
    def from_accuracies(cls, accs: Sequence[float]) -> "FoldSummary":
        m, s = mean_std(accs)
        return cls([float(a) for a in accs], m, s, format_mean_std(m, s))


# -- reports ------------------------------------------------------------------------

@dataclass
class EvalReport:
    classes: list[str]
    confusion: list[list[int]]
    per_class: list[ClassMetrics]
    macro: dict[str, float]
    overall_accuracy: float
    folds: FoldSummary | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": [list(map(int, r)) for r in self.confusion],
            "per_class": [{"class": c, "support": m.support, **asdict(m)}
                          for c, m in zip(self.classes, self.per_class)],
            "macro": dict(self.macro),
            "overall_accuracy": self.overall_accuracy,
            "folds": asdict(self.folds) if self.folds else None,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per_class = []
        for row in d["per_class"]:
            row = {k: v for k, v in row.items() if k not in ("class", "support")}
            per_class.append(ClassMetrics(**row))
        folds = FoldSummary(**d["folds"]) if d.get("folds") else None
        return cls(list(d["classes"]), [list(r) for r in d["confusion"]], per_class,
                   dict(d["macro"]), d["overall_accuracy"], folds, dict(d.get("metadata", {})))


def build_report(preds, labels, classes: Sequence[str], metadata: dict | None = None) -> EvalReport:
    k = len(classes)
    cm = confusion(preds, labels, k)
    per_class = [metrics(*one_vs_rest_counts(cm, c)) for c in range(k)]
    macro = {name: float(np.mean([getattr(m, name) for m in per_class]))
             for name in ("precision", "recall", "f1")}
    return EvalReport(list(classes), cm.tolist(), per_class, macro, overall_accuracy(cm),
                      metadata=dict(metadata or {}))


def emit_report(report: EvalReport, path, fmt: str = "json") -> Path:
    """Write JSON (full report) or CSV (one row per class, then ``macro`` and ``overall``)."""
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        elif fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_COLUMNS)
                for c, m in zip(report.classes, report.per_class):
                    w.writerow([c, m.support, m.tp, m.fp, m.fn, m.tn,
                                m.precision, m.recall, m.f1, m.ovr_accuracy])
                total = int(np.sum(report.confusion))
                mac = report.macro
                w.writerow(["macro", total, "", "", "", "", mac["precision"], mac["recall"], mac["f1"], ""])
                w.writerow(["overall", total, "", "", "", "", "", "", "", report.overall_accuracy])
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def confusion_heatmap(cm, cell: int = 1) -> np.ndarray:
    """Grayscale ``round(255 * count / max_count)``; all zero when the matrix is empty."""
    cm = np.asarray(cm, dtype=np.float64)
    peak = cm.max() if cm.size else 0.0
    gray = np.zeros(cm.shape) if peak == 0 else np.floor(255.0 * cm / peak + 0.5)
    gray = gray.astype(np.uint8)
    if cell > 1:
        gray = np.kron(gray, np.ones((cell, cell), dtype=np.uint8))
    return gray


def render_confusion(cm, path, classes: Sequence[str] | None = None, cell: int = 1) -> tuple[Path, Path]:
    """Write a P5 heatmap at ``path`` and the raw counts next to it as ``.csv``."""
    path = Path(path)
    cm = np.asarray(cm)
    csv_path = path.with_suffix(".csv")
    names = list(classes) if classes is not None else [str(i) for i in range(len(cm))]
    try:
        write_pgm(path, confusion_heatmap(cm, cell))
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + names)
            for name, row in zip(names, cm):
                w.writerow([name] + [int(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write confusion render to {path}: {exc}") from exc
    return path, csv_path


# -- inference ------------------------------------------------------------------------

def max_vote(votes: Sequence[int], k: int) -> tuple[int, np.ndarray, bool]:
    """Majority class, vote histogram and a tie flag; ties go to the lowest class id."""
    hist = np.bincount(np.asarray(votes, dtype=np.int64), minlength=k)
    winner = int(np.argmax(hist))
    tied = int((hist == hist[winner]).sum()) > 1
    return winner, hist, tied


@dataclass
class TTAResult:
    label: int
    votes: np.ndarray
    tied: bool


def tta_predict(params: ViTParams, config: ViTConfig, image, policy: AugPolicy, count: int = 5,
                rng: RngState | int | None = None) -> TTAResult:
    """Vote over the resized original plus ``count - 1`` augmented copies."""
    variants = tta_variants(image, policy, ensure_rng(rng), count)
    dtype = params["patch_embed.weight"].dtype
    x = np.stack([normalize(v, policy.mean, policy.std) for v in variants]).astype(dtype)
    with no_grad():
        logits = forward(x, params, config).data
    return TTAResult(*max_vote(np.argmax(logits, axis=1), config.num_classes))


def evaluate_images(params: ViTParams, config: ViTConfig, images, labels, classes: Sequence[str],
                    policy: AugPolicy, tta_count: int | None = None, seed: int = 0,
                    metadata: dict | None = None) -> EvalReport:
    """Report over raw uint8 images.

    ``tta_count > 1`` switches to voting, image ``i`` drawing from substream ``i``.
    A count of 1 is the plain argmax path, so its report is identical.
    """
    s = config.image_size
    dtype = params["patch_embed.weight"].dtype
    preds, ties = [], 0
    count = int(tta_count or 1)
    if count > 1:
        root = RngState(seed)
        for i, img in enumerate(images):
            res = tta_predict(params, config, img, policy, count, root.spawn(i))
            preds.append(res.label)
            ties += res.tied
    else:
        with no_grad():
            for start in range(0, len(images), 64):
                chunk = images[start:start + 64]
                x = np.stack([normalize(resize_bilinear(im, s, s), policy.mean, policy.std)
                              for im in chunk]).astype(dtype)
                preds.extend(np.argmax(forward(x, params, config).data, axis=1).tolist())
    meta = {"tta": count > 1, "tta_count": count, **(metadata or {})}
    if count > 1:
        meta["tta_seed"] = seed
        meta["tta_ties"] = ties
    return build_report(preds, labels, classes, meta)


# -- cross-validation ---------------------------------------------------------------------

@dataclass
class CVResult:
    reports: list[EvalReport]
    summary: FoldSummary


def cv_evaluate(images, labels, plan, classes: Sequence[str], config: ViTConfig, train_config,
                policy: AugPolicy, init_seed: int = 0, on_fold=None) -> CVResult:
    """Train on all folds but ``f``, evaluate on ``f``, for each fold."""
    from .train import fit
    from .vit import init_params

    labels = np.asarray(labels)
    reports = []
    for f in range(plan.k):
        tr, te = plan.train_ids(f), plan.test_ids(f)
        params = init_params(config, RngState(init_seed).spawn(f))
        try:
            fit(params, config, [images[i] for i in tr], labels[tr], train_config=train_config,
                policy=policy)
        except Exception as exc:
            raise RuntimeError(f"fold {f}: training failed: {exc}") from exc
        rep = evaluate_images(params, config, [images[i] for i in te], labels[te], classes, policy,
                              metadata={"fold": f})
        reports.append(rep)
        if on_fold is not None:
            on_fold(f, rep)
    return CVResult(reports, FoldSummary.from_accuracies([r.overall_accuracy for r in reports]))
