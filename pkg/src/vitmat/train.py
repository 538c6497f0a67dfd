"""Cross-entropy loss, Adam, and the training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .augment import AugPolicy, augment_image, normalize
from .rng import RngState, ensure_rng
from .tensor import DimensionError, Tensor
from .vit import ConfigurationError, ViTConfig, ViTParams, forward, predict, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 25
    learning_rate: float = 3e-4
    batch_size: int = 8
    seed: int = 0
    precision: str = "float32"
    checkpoint_every: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


# -- loss ---------------------------------------------------------------------

def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over the batch and its gradient ``(softmax - onehot) / B``."""
    z = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim == 1:
        z = z[None]
    b, k = z.shape
    if labels.shape != (b,):
        raise DimensionError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {b} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"cross_entropy: label out of range [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    loss = -logp[np.arange(b), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    dlogits = grad.reshape(np.shape(logits))
    return float(loss), dlogits.astype(z.dtype, copy=False)


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Scalar loss tensor; backward uses the closed-form ``dlogits``."""
    loss, dlogits = cross_entropy(logits.data, labels)
    return T.make_op("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,),
                     lambda g: (g * dlogits,))


# -- optimizer ------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"adam_step: gradient for {name!r} has shape {g.shape}, param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype, copy=False)
    return params, state


# -- loop -----------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float | None = None


def batches(n: int, batch_size: int, rng: RngState) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[s:s + batch_size] for s in range(0, n, batch_size)]


def prepare_batch(images: Sequence[np.ndarray], policy: AugPolicy | None, rng: RngState,
                  dtype) -> np.ndarray:
    out = []
    for i, img in enumerate(images):
        if policy is not None:
            img = augment_image(img, policy, rng.spawn(i))
        out.append(normalize(img, policy.mean if policy else None, policy.std if policy else None))
    return np.stack(out).astype(dtype, copy=False)


def train_epoch(params: ViTParams, config: ViTConfig, images: Sequence[np.ndarray], labels,
                policy: AugPolicy | None, train_config: TrainConfig, state: AdamState,
                rng: RngState, epoch: int = 1) -> EpochStats:
    """One pass over ``images`` in seeded-shuffled batches (last batch may be short).

    ``images`` are uint8 arrays already at ``config.image_size``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and labels.max() >= config.num_classes:
        raise ConfigurationError(
            f"labels reach class {labels.max()} but model has {config.num_classes} classes")
    dtype = params["patch_embed.weight"].dtype
    total_loss, correct = 0.0, 0
    for b, idx in enumerate(batches(len(images), train_config.batch_size, rng)):
        x = prepare_batch([images[i] for i in idx], policy, rng.spawn(b), dtype)
        y = labels[idx]
        params.zero_grad()
        logits = forward(x, params, config, mode="train", rng=rng.spawn(10_000 + b))
        loss = cross_entropy_loss(logits, y)
        loss.backward()
        adam_step(params, params.grads(), state, train_config.learning_rate)
        total_loss += float(loss.data) * len(idx)
        correct += int((np.argmax(logits.data, axis=1) == y).sum())
    n = max(len(images), 1)
    return EpochStats(epoch, total_loss / n, correct / n)


def accuracy(params: ViTParams, config: ViTConfig, images: Sequence[np.ndarray], labels,
             policy: AugPolicy | None = None) -> float:
    if len(images) == 0:
        return float("nan")
    dtype = params["patch_embed.weight"].dtype
    x = np.stack([normalize(im, policy.mean if policy else None, policy.std if policy else None)
                  for im in images]).astype(dtype, copy=False)
    return float((predict(x, params, config) == np.asarray(labels)).mean())


@dataclass
class FitResult:
    history: list[EpochStats]
    params: ViTParams
    best_params: ViTParams
    best_epoch: int


def fit(params: ViTParams, config: ViTConfig, train_images, train_labels, val_images=(),
        val_labels=(), train_config: TrainConfig | None = None, policy: AugPolicy | None = None,
        out_dir=None, on_epoch=None) -> FitResult:
    """Train for ``train_config.epochs`` epochs, tracking the best validation checkpoint.

    Ties in validation accuracy keep the earlier epoch. Without a validation
    set the final epoch counts as best. ``params`` is updated in place and cast
    to ``train_config.precision`` first.
    """
    train_config = train_config or TrainConfig()
    dtype = np.dtype(train_config.precision)
    for t in params.values():
        if t.data.dtype != dtype:
            t.data = t.data.astype(dtype)
    with T.precision(train_config.precision):
        return _fit(params, config, train_images, train_labels, val_images, val_labels,
                    train_config, policy, out_dir, on_epoch)


def _fit(params, config, train_images, train_labels, val_images, val_labels, train_config,
         policy, out_dir, on_epoch) -> FitResult:
    rng = RngState(train_config.seed).spawn(1)
    state = AdamState(beta1=train_config.beta1, beta2=train_config.beta2, eps=train_config.adam_eps)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    aug = policy if train_config.augment else None
    has_val = len(val_images) > 0
    history: list[EpochStats] = []
    best_params, best_epoch, best_acc = params.copy(), 0, -math.inf
    for epoch in range(1, train_config.epochs + 1):
        stats = train_epoch(params, config, train_images, train_labels, aug, train_config,
                            state, rng.spawn(epoch), epoch)
        if has_val:
            stats.val_acc = accuracy(params, config, val_images, val_labels, policy)
        history.append(stats)
        log.info("epoch %d loss %.4f acc %.4f val %s", epoch, stats.train_loss, stats.train_acc,
                 stats.val_acc)
        score = stats.val_acc if has_val else epoch
        if score > best_acc:
            best_params, best_epoch, best_acc = params.copy(), epoch, score
        if out is not None:
            try:
                if train_config.checkpoint_every and epoch % train_config.checkpoint_every == 0:
                    save_checkpoint(params, config, out / f"epoch_{epoch:03d}.vitc")
                if best_epoch == epoch:
                    save_checkpoint(params, config, out / "best.vitc")
            except OSError as exc:
                raise OSError(f"epoch {epoch}: failed to write checkpoint: {exc}") from exc
        if on_epoch is not None:
            on_epoch(stats)
    if out is not None:
        save_checkpoint(params, config, out / "final.vitc")
        write_history(history, out / "history.csv")
    return FitResult(history, params, best_params, best_epoch)


def write_history(history: Sequence[EpochStats], path) -> None:
    """CSV columns ``epoch,train_loss,train_acc[,val_acc]``; floats written with ``repr``."""
    with_val = any(h.val_acc is not None for h in history)
    cols = ["epoch", "train_loss", "train_acc"] + (["val_acc"] if with_val else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for h in history:
            row = asdict(h)
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])
