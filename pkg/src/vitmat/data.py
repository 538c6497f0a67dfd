"""Dataset indexing, alias merging, stratified splits and k-fold plans.

Layout on disk is ``root/<class_name>/<image files>``. Indices are ordered by
class name, then file name, so two scans of the same tree are identical.
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .augment import resize_bilinear
from .imageio import ImageReadError, looks_like_image, read_image
from .rng import RngState

log = logging.getLogger(__name__)

PARTITIONS = ("train", "val", "test")

# Class lists as published for the two material datasets.
BMD_CLASSES = ("asphalt", "brick", "cement-granular", "clay hollow block", "concrete block",
               "gravel", "paving", "sandstorms", "soil", "stone", "wood")
CML_CLASSES = ("Asphalt", "Brick", "Cement-Granular", "Cement-Smooth", "Concrete-Cast",
               "Concrete-Precast", "Foliage", "Form Work", "Grass", "Gravel", "Marble",
               "Metal-Grills", "Paving", "Soil-Compact", "Soil-Vegetation", "Soil-Loose",
               "Soil-Mulch", "Stone-Granular", "Stone-Limestone", "Wood")
BMD_SIZE, CML_SIZE, COMBINED_SIZE = 1231, 3266, 4497
COMBINED_CLASSES_REPORTED = 24


class IngestionError(IOError):
    pass


class MappingError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class SplitError(ValueError):
    pass


def normalize_class_name(name: str) -> str:
    """Lowercase; runs of spaces, hyphens and underscores collapse to one underscore."""
    return re.sub(r"[\s\-_]+", "_", name.strip().lower())


@dataclass
class DatasetIndex:
    name: str
    classes: list[str]
    samples: list[tuple[str, int]]
    skipped: int = 0
    per_class_counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.per_class_counts:
            self.per_class_counts = recount(self.samples, len(self.classes))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([c for _, c in self.samples], dtype=np.int64)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.samples]

    def subset(self, ids: Sequence[int], name: str | None = None) -> "DatasetIndex":
        return DatasetIndex(name or self.name, list(self.classes), [self.samples[i] for i in ids])

    def to_manifest(self) -> dict:
        counts, ratio = class_histogram(self)
        return {
            "name": self.name,
            "classes": list(self.classes),
            "per_class_counts": counts,
            "imbalance_ratio": ratio,
            "skipped": self.skipped,
            "samples": [{"path": p, "class": self.classes[c]} for p, c in self.samples],
        }

    @classmethod
    def from_manifest(cls, manifest, name: str | None = None) -> "DatasetIndex":
        """Accept a scan manifest (object) or a split/fold manifest (list of records)."""
        if isinstance(manifest, Mapping):
            classes = list(manifest["classes"])
            records = manifest["samples"]
            name = name or manifest.get("name", "dataset")
        else:
            records = list(manifest)
            classes = sorted({r["class"] for r in records})
            name = name or "dataset"
        lookup = {c: i for i, c in enumerate(classes)}
        try:
            samples = [(r["path"], lookup[r["class"]]) for r in records]
        except KeyError as exc:
            raise MappingError(f"manifest record refers to unknown class {exc.args[0]!r}") from exc
        return cls(name, classes, samples)


def recount(samples: Sequence[tuple[str, int]], k: int) -> list[int]:
    counts = [0] * k
    for _, c in samples:
        counts[c] += 1
    return counts


def scan_dataset(root, name: str | None = None) -> DatasetIndex:
    """Index ``root/<class>/<files>``; unreadable or non-image files are skipped and counted."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root {root} does not exist or is not a directory")
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if not class_dirs:
        raise IngestionError(f"dataset root {root} has no class subdirectories")
    samples, skipped = [], 0
    for cid, d in enumerate(class_dirs):
        files = sorted((f for f in d.iterdir() if f.is_file()), key=lambda f: f.name)
        good = [f for f in files if looks_like_image(f)]
        skipped += len(files) - len(good)
        if not good:
            raise IngestionError(f"class {d.name!r} in {root} has no image files")
        samples.extend((str(f), cid) for f in good)
    if skipped:
        log.warning("%s: skipped %d non-image files", root, skipped)
    return DatasetIndex(name or root.name, [d.name for d in class_dirs], samples, skipped)


# -- alias merging ----------------------------------------------------------------

ClassAliasMap = Mapping[str, Mapping[str, str]]


def load_alias_map(path=None) -> dict[str, dict[str, str]]:
    """Read ``{dataset: {source_class: merged_class}}``; keys starting with ``_`` are notes.

    Without a path, the shipped exact-name BMD/CML map is returned.
    """
    if path is None:
        text = resources.files("vitmat").joinpath("resources/bmd_cml_alias.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    return {ds: dict(m) for ds, m in raw.items() if not ds.startswith("_")}


def exact_name_alias(datasets: Mapping[str, Sequence[str]]) -> dict[str, dict[str, str]]:
    """Alias map that merges classes whose normalized names coincide."""
    return {ds: {c: normalize_class_name(c) for c in classes} for ds, classes in datasets.items()}


def _lookup_alias(alias: ClassAliasMap, dataset: str, cls: str) -> str:
    table = alias.get(dataset)
    if table is None:
        raise MappingError(f"alias map has no entry for dataset {dataset!r}")
    norm = {normalize_class_name(k): v for k, v in table.items()}
    key = normalize_class_name(cls)
    if key not in norm:
        raise MappingError(f"class {cls!r} of dataset {dataset!r} is missing from the alias map")
    return norm[key]


def merge_datasets(a: DatasetIndex, b: DatasetIndex, alias: ClassAliasMap,
                   name: str | None = None) -> DatasetIndex:
    """Union of two indices under ``alias``; merged classes sorted, samples by (class, path)."""
    rows = []
    for ds in (a, b):
        mapped = [_lookup_alias(alias, ds.name, c) for c in ds.classes]
        rows.extend((mapped[c], p) for p, c in ds.samples)
    classes = sorted({m for m, _ in rows})
    lookup = {c: i for i, c in enumerate(classes)}
    samples = sorted(((p, lookup[m]) for m, p in rows), key=lambda s: (s[1], s[0]))
    return DatasetIndex(name or f"{a.name}+{b.name}", classes, samples, a.skipped + b.skipped)


def class_histogram(index: DatasetIndex) -> tuple[list[int], float]:
    """Per-class counts and the imbalance ratio max/min (inf if a class is empty)."""
    counts = recount(index.samples, index.num_classes)
    lo = min(counts) if counts else 0
    ratio = float("inf") if lo == 0 else max(counts) / lo
    return counts, ratio


# -- splitting --------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: float
    val: float = 0.0
    test: float = 0.0
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise SplitError(f"split fractions {fr} must be non-negative and sum to 1")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return self.train, self.val, self.test

    @classmethod
    def from_percent(cls, train: float, val: float, test: float, seed: int = 0) -> "SplitSpec":
        return cls(train / 100, val / 100, test / 100, seed)


# Train/val/test percentages evaluated for the material datasets.
DIVISION_MODES = ((85, 0, 15), (70, 0, 30), (70, 15, 15), (60, 20, 20), (60, 10, 30), (80, 10, 10))


def allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``n`` items.

    Floors of ``f_i * n`` first; leftover items go to the largest fractional
    parts, ties to the earlier partition. Fractions are snapped to nearby
    rationals so that e.g. 0.7 * 10 is exactly 7.
    """
    exact = [Fraction(f).limit_denominator(10**6) * n for f in fractions]
    counts = [int(e) for e in exact]
    left = n - sum(counts)
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def stratified_split(index: DatasetIndex, spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    """Per-class seeded shuffle, then largest-remainder allocation to train/val/test.

    Class ``c`` is shuffled with ``RngState(seed).spawn(c)``. Returned id lists
    are sorted.
    """
    root = RngState(spec.seed)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    by_class = _ids_by_class(index)
    for c, ids in enumerate(by_class):
        counts = allocate(len(ids), spec.fractions)
        for f, k in zip(spec.fractions, counts):
            if f > 0 and k == 0:
                raise SplitError(f"class {index.classes[c]!r} ({len(ids)} samples) is too small "
                                 f"for split {spec.fractions}")
        perm = root.spawn(c).permutation(len(ids))
        shuffled = [ids[i] for i in perm]
        start = 0
        for part, k in zip(parts, counts):
            part.extend(shuffled[start:start + k])
            start += k
    return tuple(sorted(p) for p in parts)


def _ids_by_class(index: DatasetIndex) -> list[list[int]]:
    by_class: list[list[int]] = [[] for _ in index.classes]
    for i, (_, c) in enumerate(index.samples):
        by_class[c].append(i)
    return by_class


@dataclass
class FoldPlan:
    k: int
    assignment: list[int]
    seed: int = 0

    def test_ids(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_ids(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]


def kfold(index: DatasetIndex, k: int = 5, seed: int = 0) -> FoldPlan:
    """Per-class seeded shuffle then round-robin fold assignment.

    The round-robin position carries over from one class to the next, so
    overall fold sizes also stay within one of each other.
    """
    if k < 2:
        raise ValueError(f"k-fold needs k >= 2, got {k}")
    root = RngState(seed)
    assignment = [0] * len(index)
    cursor = 0
    for c, ids in enumerate(_ids_by_class(index)):
        if len(ids) < k:
            warnings.warn(f"class {index.classes[c]!r} has {len(ids)} samples < k={k}; "
                          "some folds will not contain it", stacklevel=2)
        perm = root.spawn(c).permutation(len(ids))
        for j in perm:
            assignment[ids[j]] = cursor % k
            cursor += 1
    return FoldPlan(k, assignment, seed)


def split_manifest(index: DatasetIndex, parts: Sequence[Sequence[int]]) -> list[dict]:
    rows = []
    for name, ids in zip(PARTITIONS, parts):
        for i in ids:
            p, c = index.samples[i]
            rows.append({"path": p, "class": index.classes[c], "partition": name})
    return rows


def fold_manifest(index: DatasetIndex, plan: FoldPlan) -> list[dict]:
    return [{"path": p, "class": index.classes[c], "fold": plan.assignment[i]}
            for i, (p, c) in enumerate(index.samples)]


def load_images(index: DatasetIndex, ids: Sequence[int] | None = None,
                image_size: int | None = None) -> tuple[list[np.ndarray], np.ndarray]:
    """Read (and optionally resize) images; raises IngestionError on unreadable files."""
    ids = range(len(index)) if ids is None else ids
    images, labels = [], []
    for i in ids:
        path, c = index.samples[i]
        try:
            img = read_image(path)
        except ImageReadError as exc:
            raise IngestionError(str(exc)) from exc
        if image_size is not None:
            img = resize_bilinear(img, image_size, image_size)
        images.append(img)
        labels.append(c)
    return images, np.asarray(labels, dtype=np.int64)
