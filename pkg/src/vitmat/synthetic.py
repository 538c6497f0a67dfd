"""Seeded procedural texture dataset (stripes / checker / noise / gradient).

Stands in for the real material photographs, which are not redistributable.
Each class has a distinct spatial statistic: stripes are 1-D periodic,
checkerboards 2-D periodic, noise is i.i.d. per pixel, gradients are smooth
linear ramps. Every class draws its two colours from the same distribution,
and phases and orientations are randomized per sample, so only spatial
structure identifies a class.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imageio import write_ppm
from .rng import RngState

TEXTURE_CLASSES = ("stripes", "checker", "noise", "gradient")
ACCEPTANCE_COUNTS = (40, 25, 10, 5)


def _two_colors(rng: RngState) -> tuple[np.ndarray, np.ndarray]:
    """A dark base colour and a partner at least 140 levels brighter in every channel."""
    base = 40 + rng.uniform(3) * 50
    return base, base + 140 + rng.uniform(3) * 30


def make_texture(kind: str, size: int, rng: RngState) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "stripes":
        # 1-D square wave, period 16, random phase and axis
        a, b = _two_colors(rng)
        phase = rng.randint(16)
        coord = yy if rng.randint(2) else xx
        on = ((coord + phase) // 8) % 2
        img = np.where(on[..., None] > 0, a, b)
    elif kind == "checker":
        # 2-D square wave, cell 2, random offset
        a, b = _two_colors(rng)
        oy, ox = rng.randint(2), rng.randint(2)
        on = (((yy + oy) // 2) + ((xx + ox) // 2)) % 2
        img = np.where(on[..., None] > 0, a, b)
    elif kind == "noise":
        # i.i.d. per pixel choice between the two colours
        a, b = _two_colors(rng)
        on = rng.uniform((size, size)) < 0.5
        img = np.where(on[..., None], a, b)
    elif kind == "gradient":
        a, b = _two_colors(rng)
        angle = rng.random() * 2 * np.pi
        t = (np.cos(angle) * (xx - size / 2) + np.sin(angle) * (yy - size / 2)) / size + 0.5
        t = np.clip(t, 0.0, 1.0)[..., None]
        img = a * (1 - t) + b * t
    else:
        raise ValueError(f"unknown texture {kind!r}")
    img = img + (rng.uniform((size, size, 3)) - 0.5) * 12
    return np.floor(np.clip(img, 0, 255) + 0.5).astype(np.uint8)


def generate_textures(counts=ACCEPTANCE_COUNTS, size: int = 32, seed: int = 0,
                      classes=TEXTURE_CLASSES) -> tuple[list[np.ndarray], np.ndarray]:
    """Images and integer labels, class by class; sample ``j`` of class ``c`` uses substream ``(c, j)``."""
    if len(counts) > len(classes):
        raise ValueError(f"{len(counts)} counts but only {len(classes)} texture classes")
    root = RngState(seed)
    images, labels = [], []
    for c, n in enumerate(counts):
        crng = root.spawn(c)
        for j in range(n):
            images.append(make_texture(classes[c], size, crng.spawn(j)))
            labels.append(c)
    return images, np.asarray(labels, dtype=np.int64)


def write_texture_dataset(root, counts=ACCEPTANCE_COUNTS, size: int = 32, seed: int = 0) -> Path:
    """Write ``root/<class>/<class>_<j>.ppm``; returns ``root``."""
    root = Path(root)
    images, labels = generate_textures(counts, size, seed)
    seen = {}
    for img, lab in zip(images, labels):
        name = TEXTURE_CLASSES[lab]
        j = seen.get(name, 0)
        seen[name] = j + 1
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        write_ppm(d / f"{name}_{j:04d}.ppm", img)
    return root
