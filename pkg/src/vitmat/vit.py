"""Vision Transformer classifier built on :mod:`vitmat.tensor`.

Pipeline: patchify -> linear patch projection -> prepend class token -> add
positional embedding -> L pre-LN encoder blocks -> final LayerNorm -> affine
head on the class-token row.

Patch layout: patch ``i`` is the ``i``-th patch in row-major order over the
patch grid; inside a patch the values are flattened as (row, column, channel),
i.e. the three channels of a pixel are adjacent.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
import zlib
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import tensor as T
from .rng import RngState, ensure_rng
from .tensor import Tensor


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 768
    depth: int = 12
    heads: int = 12
    mlp_ratio: float = 4.0
    num_classes: int = 11
    dropout_rate: float = 0.0
    ln_eps: float = 1e-6
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigurationError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigurationError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if min(self.image_size, self.patch_size, self.embed_dim, self.depth,
               self.heads, self.num_classes) < 1 or self.mlp_ratio <= 0:
            raise ConfigurationError(f"non-positive size in {self}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
            if len(self.class_names) != self.num_classes:
                raise ConfigurationError(
                    f"{len(self.class_names)} class names for num_classes={self.num_classes}")

    @classmethod
    def base(cls, num_classes: int = 11, **kw) -> "ViTConfig":
        """ViT-B/16 shape."""
        return cls(num_classes=num_classes, **kw)

    @classmethod
    def tiny(cls, num_classes: int = 3, **kw) -> "ViTConfig":
        kw = {"image_size": 32, "patch_size": 8, "embed_dim": 64, "depth": 2, "heads": 4, **kw}
        return cls(num_classes=num_classes, **kw)

    @classmethod
    def preset(cls, name: str, num_classes: int, **kw) -> "ViTConfig":
        presets = {"base": cls.base, "tiny": cls.tiny}
        if name not in presets:
            raise ConfigurationError(f"unknown model preset {name!r}; choose from {sorted(presets)}")
        return presets[name](num_classes, **kw)

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * 3

    @property
    def hidden_dim(self) -> int:
        return int(round(self.mlp_ratio * self.embed_dim))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["class_names"] is not None:
            d["class_names"] = list(d["class_names"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ViTConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown ViTConfig fields: {sorted(unknown)}")
        d = dict(d)
        if d.get("class_names") is not None:
            d["class_names"] = tuple(d["class_names"])
        return cls(**d)


def param_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Canonical array names and shapes, in construction order."""
    D, Hd, K = config.embed_dim, config.hidden_dim, config.num_classes
    shapes = {
        "patch_embed.weight": (config.patch_dim, D),
        "patch_embed.bias": (D,),
        "cls_token": (1, D),
        "pos_embed": (config.num_patches + 1, D),
    }
    for i in range(config.depth):
        p = f"block.{i}."
        shapes.update({
            p + "ln1.gamma": (D,), p + "ln1.beta": (D,),
            p + "attn.wq": (D, D), p + "attn.bq": (D,),
            p + "attn.wk": (D, D), p + "attn.bk": (D,),
            p + "attn.wv": (D, D), p + "attn.bv": (D,),
            p + "attn.wo": (D, D), p + "attn.bo": (D,),
            p + "ln2.gamma": (D,), p + "ln2.beta": (D,),
            p + "mlp.w1": (D, Hd), p + "mlp.b1": (Hd,),
            p + "mlp.w2": (Hd, D), p + "mlp.b2": (D,),
        })
    shapes.update({"norm.gamma": (D,), "norm.beta": (D,),
                   "head.weight": (D, K), "head.bias": (K,)})
    return shapes


class ViTParams(Mapping):
    """Named learnable arrays of one model (name -> Tensor)."""

    def __init__(self, arrays: Mapping[str, Tensor]):
        self._arrays = dict(arrays)

    def __getitem__(self, name: str) -> Tensor:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def block(self, i: int) -> dict[str, Tensor]:
        prefix = f"block.{i}."
        return {k[len(prefix):]: v for k, v in self._arrays.items() if k.startswith(prefix)}

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._arrays.items()}

    def copy(self) -> "ViTParams":
        return ViTParams({k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
                          for k, v in self._arrays.items()})

    def astype(self, dtype) -> "ViTParams":
        return ViTParams({k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)
                          for k, v in self._arrays.items()})

    def requires_grad_(self, flag: bool = True) -> "ViTParams":
        for v in self._arrays.values():
            v.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for v in self._arrays.values():
            v.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(v.data) if v.grad is None else v.grad)
                for k, v in self._arrays.items()}

    def validate(self, config: ViTConfig) -> None:
        expected = param_shapes(config)
        for name, shape in expected.items():
            if name not in self._arrays:
                raise ConfigurationError(f"missing parameter array {name!r}")
            if self._arrays[name].shape != shape:
                raise ConfigurationError(
                    f"parameter {name!r} has shape {self._arrays[name].shape}, config implies {shape}")
        extra = sorted(set(self._arrays) - set(expected))
        if extra:
            raise ConfigurationError(f"unexpected parameter array {extra[0]!r}")


def _truncated_std(bound: float = 2.0) -> float:
    """Standard deviation of a unit normal truncated to ``[-bound, bound]``."""
    pdf = math.exp(-0.5 * bound * bound) / math.sqrt(2 * math.pi)
    mass = math.erf(bound / math.sqrt(2))
    return math.sqrt(1 - 2 * bound * pdf / mass)


def _truncated_normal(rng: RngState, shape, std: float, dtype) -> np.ndarray:
    """Unit normal resampled into [-2, 2], rescaled so the result has std ``std``."""
    z = rng.normal(shape)
    bad = np.abs(z) > 2.0
    while bad.any():
        z[bad] = rng.normal(int(bad.sum()))
        bad = np.abs(z) > 2.0
    return (z * (std / _truncated_std(2.0))).astype(dtype)


def init_params(config: ViTConfig, rng: RngState | int | None = None) -> ViTParams:
    """Weights: 2-sigma truncated normal with std 0.02; cls/pos N(0, 0.02); biases/LN-beta 0; LN-gamma 1."""
    rng = ensure_rng(rng)
    dtype = T.get_dtype()
    arrays = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            data = np.ones(shape, dtype)
        elif leaf in ("beta", "bias") or (leaf.startswith("b") and len(leaf) == 2):
            data = np.zeros(shape, dtype)
        elif name in ("cls_token", "pos_embed"):
            data = rng.normal(shape, 0.0, 0.02, dtype=dtype)
        else:
            data = _truncated_normal(rng, shape, 0.02, dtype)
        arrays[name] = Tensor(data, requires_grad=True)
    return ViTParams(arrays)


# -- forward pieces ----------------------------------------------------------------

def patchify(image, patch_size: int) -> np.ndarray:
    """``(H, W, 3)`` -> ``(N, p*p*3)``; a leading batch axis is carried through."""
    img = np.asarray(image.data if isinstance(image, Tensor) else image)
    *lead, h, w, c = img.shape
    if h % patch_size or w % patch_size:
        raise ConfigurationError(f"image {h}x{w} is not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    x = img.reshape(*lead, gh, patch_size, gw, patch_size, c)
    nl = len(lead)
    axes = list(range(nl)) + [nl, nl + 2, nl + 1, nl + 3, nl + 4]
    return x.transpose(axes).reshape(*lead, gh * gw, patch_size * patch_size * c)


def embed(patches, params: Mapping[str, Tensor]) -> Tensor:
    """Rows: ``[cls + pos[0], patch_i @ W + b + pos[i]]``."""
    patches = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches))
    w, pos, cls = params["patch_embed.weight"], params["pos_embed"], params["cls_token"]
    if patches.shape[-1] != w.shape[0] or patches.shape[-2] + 1 != pos.shape[0]:
        raise T.DimensionError(
            f"embed: patches {patches.shape} do not fit projection {w.shape} / pos_embed {pos.shape}")
    x = T.add(T.matmul(patches, w), params["patch_embed.bias"])
    lead = patches.shape[:-2]
    cls_rows = T.add(T.zeros(lead + (1, cls.shape[-1])), cls) if lead else cls
    x = T.concat([cls_rows, x], axis=-2)
    return T.add(x, pos)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add(T.matmul(x, w), b)


def mhsa(x: Tensor, bp: Mapping[str, Tensor], heads: int, return_attention: bool = False):
    """Multi-head scaled dot-product self-attention over tokens ``x[..., T, D]``."""
    *lead, t, d = x.shape
    if d % heads:
        raise ConfigurationError(f"embed dim {d} is not divisible by {heads} heads")
    dk = d // heads
    nl = len(lead)

    def split(z: Tensor) -> Tensor:
        z = T.reshape(z, (*lead, t, heads, dk))
        return T.transpose(z, list(range(nl)) + [nl + 1, nl, nl + 2])

    q = split(_linear(x, bp["attn.wq"], bp["attn.bq"]))
    k = split(_linear(x, bp["attn.wk"], bp["attn.bk"]))
    v = split(_linear(x, bp["attn.wv"], bp["attn.bv"]))
    kt = T.transpose(k, list(range(nl + 1)) + [nl + 2, nl + 1])
    attn = T.softmax(T.scale(T.matmul(q, kt), 1.0 / math.sqrt(dk)), axis=-1)
    ctx = T.matmul(attn, v)
    ctx = T.reshape(T.transpose(ctx, list(range(nl)) + [nl + 1, nl, nl + 2]), (*lead, t, d))
    out = _linear(ctx, bp["attn.wo"], bp["attn.bo"])
    return (out, attn.data) if return_attention else out


def mlp(x: Tensor, bp: Mapping[str, Tensor]) -> Tensor:
    return _linear(T.gelu(_linear(x, bp["mlp.w1"], bp["mlp.b1"])), bp["mlp.w2"], bp["mlp.b2"])


def encoder_block(x: Tensor, bp: Mapping[str, Tensor], heads: int, eps: float = 1e-6,
                  dropout_rate: float = 0.0, rng: RngState | None = None) -> Tensor:
    """Pre-LN block: ``y = x + MHSA(LN1(x))``, ``z = y + MLP(LN2(y))``."""
    h = mhsa(T.layer_norm(x, bp["ln1.gamma"], bp["ln1.beta"], eps), bp, heads)
    if dropout_rate and rng is not None:
        h = T.dropout(h, dropout_rate, rng)
    y = T.add(x, h)
    h = mlp(T.layer_norm(y, bp["ln2.gamma"], bp["ln2.beta"], eps), bp)
    if dropout_rate and rng is not None:
        h = T.dropout(h, dropout_rate, rng)
    return T.add(y, h)


def forward(image, params: ViTParams, config: ViTConfig, mode: str = "infer",
            rng: RngState | None = None) -> Tensor:
    """Logits ``(K,)`` for one normalized ``(H, W, 3)`` image, ``(B, K)`` for a batch.

    Dropout is active only when ``mode == "train"`` and ``config.dropout_rate > 0``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    params.validate(config)
    img = np.asarray(image.data if isinstance(image, Tensor) else image)
    if img.shape[-3:] != (config.image_size, config.image_size, 3):
        raise ConfigurationError(
            f"image shape {img.shape[-3:]} does not match config image_size {config.image_size}")
    single = img.ndim == 3
    if single:
        img = img[None]
    dtype = params["patch_embed.weight"].dtype
    patches = Tensor(patchify(img, config.patch_size).astype(dtype, copy=False))
    rate = config.dropout_rate if mode == "train" else 0.0
    drop_rng = ensure_rng(rng) if rate else None
    x = embed(patches, params)
    if rate:
        x = T.dropout(x, rate, drop_rng)
    for i in range(config.depth):
        x = encoder_block(x, params.block(i), config.heads, config.ln_eps, rate, drop_rng)
    x = T.layer_norm(x, params["norm.gamma"], params["norm.beta"], config.ln_eps)
    logits = _linear(T.take(x, 0, axis=-2), params["head.weight"], params["head.bias"])
    return T.take(logits, 0, axis=0) if single else logits


def predict(images, params: ViTParams, config: ViTConfig, batch_size: int = 64) -> np.ndarray:
    """Argmax class ids for a batch of normalized images (infer mode)."""
    images = np.asarray(images)
    single = images.ndim == 3
    if single:
        images = images[None]
    out = []
    with T.no_grad():
        for s in range(0, len(images), batch_size):
            out.append(np.argmax(forward(images[s:s + batch_size], params, config).data, axis=-1))
    preds = np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
    return preds[0] if single else preds


# -- checkpoints -------------------------------------------------------------------

MAGIC = b"VITC"
FORMAT_VERSION = 1


class CheckpointError(IOError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class ClassCountMismatchError(CheckpointError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"checkpoint has {found} classes, run expects {expected}")
        self.found, self.expected = found, expected


def save_checkpoint(params: ViTParams, config: ViTConfig, path) -> None:
    """Layout: ``VITC`` | u16 version | u32 json length | json config | records | u32 CRC32.

    Each record: u16 name length, name (utf-8), u8 rank, rank x u32 dims,
    float32 little-endian payload. Records follow sorted name order; the CRC
    covers all record bytes. Arrays are stored as float32.
    """
    params.validate(config)
    header = json.dumps(config.to_dict(), sort_keys=True).encode()
    body = bytearray()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype="<f4")
        nb = name.encode()
        body += struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()
    blob = (MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header + bytes(body)
            + struct.pack("<I", zlib.crc32(body)))
    Path(path).write_bytes(blob)


def load_checkpoint(path, expected_num_classes: int | None = None) -> tuple[ViTParams, ViTConfig]:
    blob = Path(path).read_bytes()
    if len(blob) < 10:
        raise TruncatedCheckpointError(f"{path}: file too short for a header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported format version {version}")
    pos = 10
    if pos + hlen > len(blob):
        raise TruncatedCheckpointError(f"{path}: header runs past end of file")
    try:
        config = ViTConfig.from_dict(json.loads(blob[pos:pos + hlen]))
    except (ValueError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable config header: {exc}") from exc
    pos += hlen
    end = len(blob) - 4
    if end < pos:
        raise TruncatedCheckpointError(f"{path}: missing checksum")
    expected = param_shapes(config)
    arrays: dict[str, Tensor] = {}
    body_start = pos

    def need(n: int) -> None:
        if pos + n > end:
            raise TruncatedCheckpointError(f"{path}: record runs past end of file at byte {pos}")

    while pos < end:
        need(2)
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        need(nlen + 1)
        name = blob[pos:pos + nlen].decode("utf-8", errors="replace")
        rank = blob[pos + nlen]
        pos += nlen + 1
        need(4 * rank)
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        size = 4 * int(np.prod(dims, dtype=np.int64))
        need(size)
        payload = np.frombuffer(blob, dtype="<f4", count=size // 4, offset=pos).reshape(dims)
        pos += size
        if name not in expected:
            raise ShapeMismatchError(f"{path}: unexpected array {name!r}")
        if tuple(dims) != expected[name]:
            raise ShapeMismatchError(f"{path}: array {name!r} has shape {tuple(dims)}, "
                                     f"config implies {expected[name]}")
        arrays[name] = Tensor(payload.astype(np.float32), requires_grad=True)
    missing = [n for n in expected if n not in arrays]
    if missing:
        raise TruncatedCheckpointError(f"{path}: missing array {missing[0]!r}")
    (crc,) = struct.unpack_from("<I", blob, end)
    if zlib.crc32(blob[body_start:end]) != crc:
        raise CorruptCheckpointError(f"{path}: payload CRC mismatch")
    if expected_num_classes is not None and config.num_classes != expected_num_classes:
        raise ClassCountMismatchError(config.num_classes, expected_num_classes)
    return ViTParams({n: arrays[n] for n in expected}), config
