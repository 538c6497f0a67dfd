"""Bit-exact 8-bit image ops, RandAugment, normalization and TTA variants.

Images are ``uint8`` arrays of shape ``(H, W, 3)``. Every op returns a new
array and never wraps around: intermediate values are clamped to [0, 255] and
rounded half away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngState, ensure_rng

RANDAUG_OPS = ("equalize", "autocontrast", "posterize", "solarize", "brightness", "sharpness")
MAX_LEVEL = 30

# PIL-style SMOOTH kernel, applied to interior pixels only.
SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


class ImageError(ValueError):
    pass


def check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ImageError(f"expected uint8 pixels, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError(f"empty image {img.shape}")
    return img


def _round_u8(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 255.0)
    return np.floor(x + 0.5).astype(np.uint8)


@dataclass
class AugPolicy:
    """Training augmentation recipe, applied in ``ops`` order after resizing."""

    image_size: int = 224
    fliplr_prob: float = 0.5
    flipud_prob: float = 0.5
    translate_max: int = 16
    crop_pad: int = 16
    randaug_n: int = 2
    randaug_m: int = 7
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    ops: tuple[str, ...] = ("fliplr", "flipud", "translate", "random_crop", "randaugment")

    def __post_init__(self):
        self.mean = tuple(float(v) for v in self.mean)
        self.std = tuple(float(v) for v in self.std)
        self.ops = tuple(self.ops)
        for p in (self.fliplr_prob, self.flipud_prob):
            if not 0.0 <= p <= 1.0:
                raise ImageError(f"flip probability {p} outside [0, 1]")
        if self.randaug_n < 0 or not 0 <= self.randaug_m <= MAX_LEVEL:
            raise ImageError(f"randaugment needs n >= 0 and m in [0, {MAX_LEVEL}]")
        if self.translate_max < 0 or self.crop_pad < 0 or self.image_size < 1:
            raise ImageError("translate_max, crop_pad must be >= 0 and image_size >= 1")
        if min(self.std) <= 0:
            raise ImageError("normalization std must be positive")
        unknown = set(self.ops) - {"fliplr", "flipud", "translate", "random_crop", "randaugment"}
        if unknown:
            raise ImageError(f"unknown augmentation ops {sorted(unknown)}")

    @classmethod
    def scaled(cls, image_size: int, **kw) -> "AugPolicy":
        """Default recipe with pixel shifts scaled from 224 px to ``image_size``."""
        ratio = image_size / 224
        kw.setdefault("translate_max", max(1, round(16 * ratio)))
        kw.setdefault("crop_pad", max(1, round(16 * ratio)))
        return cls(image_size=image_size, **kw)


# -- geometry -------------------------------------------------------------------

def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers.

    Output pixel ``i`` samples source coordinate ``(i + 0.5) * in / out - 0.5``,
    clamped to ``[0, in - 1]``.
    """
    img = check_image(img)
    if out_h < 1 or out_w < 1:
        raise ImageError(f"output size must be >= 1, got {out_h}x{out_w}")
    h, w, _ = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = coords(h, out_h)
    x0, x1, fx = coords(w, out_w)
    f = img.astype(np.float64)
    fx = fx[None, :, None]
    top = f[y0][:, x0] * (1 - fx) + f[y0][:, x1] * fx
    bot = f[y1][:, x0] * (1 - fx) + f[y1][:, x1] * fx
    fy = fy[:, None, None]
    return _round_u8(top * (1 - fy) + bot * fy)


def flip_lr(img) -> np.ndarray:
    return check_image(img)[:, ::-1].copy()


def flip_ud(img) -> np.ndarray:
    return check_image(img)[::-1].copy()


def translate(img, dx: int, dy: int) -> np.ndarray:
    """Shift content right by ``dx`` and down by ``dy``; vacated pixels become 0."""
    img = check_image(img)
    h, w, _ = img.shape
    if abs(dx) >= min(h, w) or abs(dy) >= min(h, w):
        raise ImageError(f"shift ({dx}, {dy}) too large for a {h}x{w} image")
    out = np.zeros_like(img)
    out[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = \
        img[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    return out


def random_crop(img, pad: int, out_h: int, out_w: int, rng: RngState) -> np.ndarray:
    """Zero-pad by ``pad`` on every side and cut a uniformly placed window."""
    img = check_image(img)
    h, w, _ = img.shape
    ph, pw = h + 2 * pad, w + 2 * pad
    if out_h > ph or out_w > pw or out_h < 1 or out_w < 1:
        raise ImageError(f"crop {out_h}x{out_w} does not fit padded {ph}x{pw}")
    top = rng.randint(ph - out_h + 1)
    left = rng.randint(pw - out_w + 1)
    padded = np.zeros((ph, pw, 3), dtype=np.uint8)
    padded[pad:pad + h, pad:pad + w] = img
    return padded[top:top + out_h, left:left + out_w].copy()


# -- photometric ----------------------------------------------------------------

def equalize(img) -> np.ndarray:
    """Per-channel histogram equalization.

    With ``h`` the channel histogram and ``last`` the count of its highest
    occupied level, ``step = (N - last) // 255``. If ``step == 0`` the channel
    is unchanged; otherwise level ``v`` maps to
    ``min(255, (c(v) + step // 2) // step)`` where ``c(v)`` counts pixels
    strictly below ``v``.
    """
    img = check_image(img)
    out = np.empty_like(img)
    for ch in range(3):
        plane = img[..., ch]
        hist = np.bincount(plane.ravel(), minlength=256)
        nz = np.flatnonzero(hist)
        step = (int(hist.sum()) - int(hist[nz[-1]])) // 255
        if step == 0:
            out[..., ch] = plane
            continue
        below = np.concatenate([[0], np.cumsum(hist)[:-1]])
        lut = np.minimum((below + step // 2) // step, 255).astype(np.uint8)
        out[..., ch] = lut[plane]
    return out


def autocontrast(img) -> np.ndarray:
    """Stretch each channel's [min, max] linearly onto [0, 255]; flat channels pass through."""
    img = check_image(img)
    out = np.empty_like(img)
    for ch in range(3):
        plane = img[..., ch]
        lo, hi = int(plane.min()), int(plane.max())
        if hi <= lo:
            out[..., ch] = plane
        else:
            out[..., ch] = _round_u8((plane.astype(np.float64) - lo) * 255.0 / (hi - lo))
    return out


def posterize(img, bits: int) -> np.ndarray:
    img = check_image(img)
    if not 1 <= bits <= 8:
        raise ImageError(f"posterize bits must be in [1, 8], got {bits}")
    mask = np.uint8((0xFF << (8 - bits)) & 0xFF)
    return img & mask


def solarize(img, threshold: int) -> np.ndarray:
    img = check_image(img)
    if not 0 <= threshold <= 255:
        raise ImageError(f"solarize threshold must be in [0, 255], got {threshold}")
    return np.where(img >= threshold, 255 - img, img).astype(np.uint8)


def brightness(img, factor: float) -> np.ndarray:
    img = check_image(img)
    if factor < 0:
        raise ImageError(f"brightness factor must be >= 0, got {factor}")
    return _round_u8(img.astype(np.float64) * factor)


def smooth(img) -> np.ndarray:
    """3x3 SMOOTH kernel on interior pixels; border pixels copied unchanged."""
    img = check_image(img)
    out = img.copy()
    h, w, _ = img.shape
    if h < 3 or w < 3:
        return out
    f = img.astype(np.float64)
    acc = np.zeros((h - 2, w - 2, 3))
    for dy in range(3):
        for dx in range(3):
            acc += SMOOTH_KERNEL[dy, dx] * f[dy:dy + h - 2, dx:dx + w - 2]
    out[1:-1, 1:-1] = _round_u8(acc)
    return out


def sharpness(img, factor: float) -> np.ndarray:
    """Blend ``smooth(img) * (1 - factor) + img * factor``; factor 1 returns the input."""
    img = check_image(img)
    if factor < 0:
        raise ImageError(f"sharpness factor must be >= 0, got {factor}")
    blurred = smooth(img).astype(np.float64)
    return _round_u8(blurred * (1.0 - factor) + img.astype(np.float64) * factor)


# -- RandAugment ----------------------------------------------------------------

def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def magnitude_params(name: str, m: int, sign: int = 1):
    """Op argument for magnitude ``m`` on the 0..30 scale.

    posterize bits ``8 - r(4m/30)``, solarize threshold ``255 - r(255m/30)``
    with ``r`` rounding halves down (m=7 gives 7 bits and threshold 196);
    brightness/sharpness factor ``1 + 0.9 (m/30) sign``.
    """
    if name == "posterize":
        return 8 - _round_half_down(4 * m / MAX_LEVEL)
    if name == "solarize":
        return 255 - _round_half_down(255 * m / MAX_LEVEL)
    if name in ("brightness", "sharpness"):
        return 1.0 + 0.9 * (m / MAX_LEVEL) * sign
    return None


_OP_FUNCS = {"equalize": equalize, "autocontrast": autocontrast, "posterize": posterize,
             "solarize": solarize, "brightness": brightness, "sharpness": sharpness}


def apply_op(img, name: str, m: int, sign: int = 1) -> np.ndarray:
    arg = magnitude_params(name, m, sign)
    fn = _OP_FUNCS[name]
    return fn(img) if arg is None else fn(img, arg)


def sample_ops(n: int, rng: RngState) -> list[tuple[str, int]]:
    """Draw ``n`` (op, sign) pairs: op uniform with replacement, then a +/-1 sign."""
    picks = []
    for _ in range(n):
        name = RANDAUG_OPS[rng.randint(len(RANDAUG_OPS))]
        sign = 1 if rng.randint(2) else -1
        picks.append((name, sign))
    return picks


def apply_ops(img, ops, m: int) -> np.ndarray:
    img = check_image(img)
    for name, sign in ops:
        img = apply_op(img, name, m, sign)
    return img


def randaugment(img, n: int = 2, m: int = 7, rng: RngState | int | None = None) -> np.ndarray:
    if n < 0 or not 0 <= m <= MAX_LEVEL:
        raise ImageError(f"randaugment needs n >= 0 and m in [0, {MAX_LEVEL}]")
    return apply_ops(img, sample_ops(n, ensure_rng(rng)), m)


# -- pipeline -----------------------------------------------------------------

def augment_image(img, policy: AugPolicy, rng: RngState) -> np.ndarray:
    """resize -> flips -> translate -> random crop -> RandAugment (ops as enabled)."""
    s = policy.image_size
    img = resize_bilinear(img, s, s)
    ops = policy.ops
    if "fliplr" in ops and rng.random() < policy.fliplr_prob:
        img = flip_lr(img)
    if "flipud" in ops and rng.random() < policy.flipud_prob:
        img = flip_ud(img)
    if "translate" in ops and policy.translate_max:
        t = policy.translate_max
        dx, dy = (int(v) - t for v in rng.integers(2 * t + 1, (2,)))
        img = translate(img, dx, dy)
    if "random_crop" in ops:
        img = random_crop(img, policy.crop_pad, s, s, rng)
    if "randaugment" in ops:
        img = randaugment(img, policy.randaug_n, policy.randaug_m, rng)
    return img


def normalize(img, mean=None, std=None) -> np.ndarray:
    """``(v / 255 - mean_c) / std_c`` as float64; defaults 0.5 / 0.5."""
    img = check_image(img)
    mean = np.asarray((0.5, 0.5, 0.5) if mean is None else mean, dtype=np.float64)
    std = np.asarray((0.5, 0.5, 0.5) if std is None else std, dtype=np.float64)
    return (img.astype(np.float64) / 255.0 - mean) / std


def denormalize(x, mean=None, std=None) -> np.ndarray:
    mean = np.asarray((0.5, 0.5, 0.5) if mean is None else mean, dtype=np.float64)
    std = np.asarray((0.5, 0.5, 0.5) if std is None else std, dtype=np.float64)
    return _round_u8((np.asarray(x, dtype=np.float64) * std + mean) * 255.0)


def tta_variants(img, policy: AugPolicy, rng: RngState | int | None, count: int) -> list[np.ndarray]:
    """``[resized original] + (count - 1)`` independent training-pipeline draws.

    Draw ``i`` uses substream ``rng.spawn(i)``.
    """
    if count < 1:
        raise ImageError(f"TTA count must be >= 1, got {count}")
    rng = ensure_rng(rng)
    s = policy.image_size
    out = [resize_bilinear(img, s, s)]
    out.extend(augment_image(img, policy, rng.spawn(i)) for i in range(1, count))
    return out
