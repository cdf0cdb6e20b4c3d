"""Contrastive training: the symmetric batch loss, pair-stream plumbing,
the warmup/rsqrt/cooldown schedule, and the optimizer loop.

Batches hold N aligned (left, right) canvases. Both sides go through the
shared encoder and the loss is the mean of the row-wise and column-wise
cross entropies of the temperature-scaled similarity matrix against the
diagonal, computed across the full batch. Text/text pairs are mixed into
image/alt-text batches at an exact per-batch count so composition ratios
are variance free.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, grad_of
from .encoder import EncoderConfig, EncoderParams, encode, init_params
from .errors import ConfigError, ContractError, DataError
from .render import RenderConfig, render_text

IMAGE_ALT_TEXT = "image_alt_text"
TEXT_TEXT = "text_text"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    base_steps: int = 2000
    text_fraction: float = 0.0
    peak_lr: float = 1e-3
    warmup_steps: int | None = None  # None -> 5% of total steps
    cooldown_steps: int | None = None
    weight_decay: float = 1e-4
    grad_clip_norm: float = 1.0
    temperature_init: float = 10.0
    pos_embed_lr_mult: float = 1.0
    seed: int = 0
    log_every: int = 25

    def __post_init__(self):
        if not 0.0 <= self.text_fraction < 1.0:
            raise ConfigError("text_fraction must lie in [0, 1)")
        if self.batch_size < 1 or self.base_steps < 0:
            raise ConfigError("batch_size must be >= 1 and base_steps >= 0")

    @property
    def total_steps(self) -> int:
        return scaled_step_count(self.base_steps, self.text_fraction)

    def resolved_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, round(0.05 * self.total_steps))

    def resolved_cooldown(self) -> int:
        if self.cooldown_steps is not None:
            return self.cooldown_steps
        return max(1, round(0.05 * self.total_steps))


@dataclass
class ContrastiveOutput:
    loss: Tensor
    logits: np.ndarray
    temperature: float


@dataclass
class RenderedPair:
    """One aligned training pair; sides are pixel canvases (or token ids
    for tokenized text towers)."""

    left: np.ndarray
    right: np.ndarray
    tag: str
    left_modality: str = "image"
    right_modality: str = "rendered_text"
    left_text: str | None = None
    right_text: str | None = None


@dataclass
class PairBatch:
    left: np.ndarray
    right: np.ndarray
    tags: list[str]
    left_modalities: list[str] = field(default_factory=list)
    right_modalities: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.left)


def contrastive_loss(left, right, temperature) -> ContrastiveOutput:
    """Symmetric cross entropy over the temperature-scaled similarity
    matrix; targets are the diagonal. Requires unit-norm rows of equal N."""
    left_t = left if isinstance(left, Tensor) else Tensor(np.asarray(left))
    right_t = right if isinstance(right, Tensor) else Tensor(np.asarray(right))
    n_left, n_right = left_t.shape[0], right_t.shape[0]
    if n_left != n_right:
        raise ContractError(f"batch sides differ: {n_left} vs {n_right}")
    temp_t = temperature if isinstance(temperature, Tensor) else Tensor(np.asarray(float(temperature)))
    logits = ad.mul(ad.matmul(left_t, ad.transpose(right_t)), temp_t)
    targets = np.arange(n_left)
    row_ce = ad.tmean(ad.cross_entropy_rows(logits, targets))
    col_ce = ad.tmean(ad.cross_entropy_rows(ad.transpose(logits), targets))
    loss = ad.scale(ad.add(row_ce, col_ce), 0.5)
    return ContrastiveOutput(loss, np.array(logits.data), float(temp_t.data))


def scaled_step_count(base_steps: int, p: float) -> int:
    """Steps needed so the image/alt-text pairs seen matches a run
    without text/text data: ceil(base_steps / (1 - p))."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"text fraction must lie in [0, 1), got {p}")
    return math.ceil(base_steps / (1.0 - p))


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to peak, reciprocal square root decay, and a linear
    cooldown ramp multiplied onto the rsqrt value over the final steps."""
    total = cfg.total_steps
    if not 0 <= step <= total:
        raise ContractError(f"step {step} outside [0, {total}]")
    warmup = cfg.resolved_warmup()
    cooldown = cfg.resolved_cooldown()
    if step <= warmup:
        lr = cfg.peak_lr * (step / warmup if warmup else 1.0)
    else:
        lr = cfg.peak_lr * math.sqrt(warmup / step)
    if cooldown and step > total - cooldown:
        lr *= (total - step) / cooldown
    return lr


# ----------------------------------------------------------- pair streams

def nsp_sentence_pairs(corpus: list[list[str]], seed: int = 0):
    """Infinite stream of (sentence_i, sentence_{i+1}) drawn uniformly
    from all in-document adjacent pairs; never crosses document bounds."""
    pairs = [(d, i) for d, doc in enumerate(corpus) for i in range(len(doc) - 1)]
    if not pairs:
        raise DataError("corpus has no document with two consecutive sentences")
    rng = np.random.default_rng(seed)
    while True:
        d, i = pairs[rng.integers(len(pairs))]
        yield corpus[d][i], corpus[d][i + 1]


class _RenderCache:
    """Memoized text rendering; toy corpora repeat sentences heavily."""

    def __init__(self, cfg: RenderConfig, table, max_entries: int = 4096):
        self.cfg = cfg
        self.table = table
        self.cache: dict[str, np.ndarray] = {}
        self.max_entries = max_entries

    def __call__(self, text: str) -> np.ndarray:
        hit = self.cache.get(text)
        if hit is None:
            hit = render_text(text, self.cfg, self.table).pixels
            if len(self.cache) < self.max_entries:
                self.cache[text] = hit
        return hit


def nsp_pairs(corpus, render_cfg: RenderConfig, table, seed: int = 0):
    """Embedding-based next-sentence-prediction pairs, both sides
    rendered as text images."""
    render = _RenderCache(render_cfg, table)
    for s1, s2 in nsp_sentence_pairs(corpus, seed):
        yield RenderedPair(
            render(s1), render(s2), TEXT_TEXT, "rendered_text", "rendered_text", s1, s2
        )


def parallel_pairs(bitext: list[tuple[str, str]], render_cfg: RenderConfig, table):
    """One pass over aligned sentence pairs (translation or
    back-translation), rendered. Cycle it for epoch-based training."""
    render = _RenderCache(render_cfg, table)
    for src, tgt in bitext:
        yield RenderedPair(
            render(src), render(tgt), TEXT_TEXT, "rendered_text", "rendered_text", src, tgt
        )


def image_text_pairs(images: np.ndarray, captions: list[str], render_cfg: RenderConfig, table, seed: int = 0):
    """Infinite uniform sampling of an in-memory image/alt-text dataset,
    captions rendered on the fly."""
    if len(images) == 0 or len(images) != len(captions):
        raise DataError("need equally many images and captions, at least one")
    render = _RenderCache(render_cfg, table)
    rng = np.random.default_rng(seed)
    while True:
        i = int(rng.integers(len(images)))
        yield RenderedPair(
            images[i], render(captions[i]), IMAGE_ALT_TEXT, "image", "rendered_text",
            None, captions[i],
        )


def paired_batches(
    images: np.ndarray,
    captions: list[str],
    render_cfg: RenderConfig,
    table,
    batch_size: int,
    seed: int = 0,
    augment_noise: float = 0.0,
):
    """Image/alt-text batches drawn without replacement per batch.

    Duplicate pairs inside a contrastive batch make the diagonal targets
    ambiguous (two identical columns cannot both be ranked first), so
    each batch is a fresh no-repeat sample of the dataset. Requires
    batch_size <= dataset size. augment_noise adds fresh per-batch pixel
    noise to the image side, so frozen noise patterns can never become
    the pair-discriminative feature.
    """
    n = len(images)
    if n == 0 or n != len(captions):
        raise DataError("need equally many images and captions, at least one")
    if batch_size > n:
        raise DataError(f"batch_size {batch_size} exceeds dataset size {n}")
    render = _RenderCache(render_cfg, table)
    rendered = np.stack([render(c) for c in captions])
    rng = np.random.default_rng(seed)
    while True:
        idx = rng.choice(n, size=batch_size, replace=False)
        left = images[idx]
        if augment_noise:
            left = np.clip(left + rng.normal(0.0, augment_noise, size=left.shape), -1.0, 1.0)
        yield PairBatch(
            left=left,
            right=rendered[idx],
            tags=[IMAGE_ALT_TEXT] * batch_size,
            left_modalities=["image"] * batch_size,
            right_modalities=["rendered_text"] * batch_size,
        )


def mixed_batches(image_text_source, text_text_source, p: float, batch_size: int, seed: int = 0):
    """Batches with exactly round(p * B) text/text pairs, shuffled within
    the batch; a single joint loss later covers all B rows."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"text fraction must lie in [0, 1), got {p}")
    n_text = round(p * batch_size)
    n_image = batch_size - n_text
    if n_image > 0 and image_text_source is None:
        raise DataError("image/alt-text source required when p < 1")
    if n_text > 0 and text_text_source is None:
        raise DataError("text/text source required when p > 0")
    rng = np.random.default_rng(seed)
    while True:
        rows = []
        try:
            for _ in range(n_image):
                rows.append(next(image_text_source))
            for _ in range(n_text):
                rows.append(next(text_text_source))
        except StopIteration:
            raise DataError("pair source exhausted") from None
        order = rng.permutation(len(rows))
        rows = [rows[i] for i in order]
        yield PairBatch(
            left=np.stack([r.left for r in rows]),
            right=np.stack([r.right for r in rows]),
            tags=[r.tag for r in rows],
            left_modalities=[r.left_modality for r in rows],
            right_modalities=[r.right_modality for r in rows],
        )


# ------------------------------------------------------------- optimizer

class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay and
    unfactored second moments (desk scale does not need factoring)."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, tensors: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float, lr_mults: dict[str, float] | None = None):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in tensors.items():
            g = grads.get(name)
            if g is None:
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            mult = 1.0 if lr_mults is None else lr_mults.get(name, 1.0)
            p.data -= (lr * mult) * (update + self.weight_decay * p.data)


class SgdMomentum:
    """Plain momentum SGD; the transfer recipes fine-tune with it."""

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float, lr_mults: dict[str, float] | None = None):
        for name, p in tensors.items():
            g = grads.get(name)
            if g is None:
                continue
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
                self.velocity[name] = v
            v *= self.momentum
            v += g
            mult = 1.0 if lr_mults is None else lr_mults.get(name, 1.0)
            p.data -= (lr * mult) * v


def cosine_warmup_lr(step: int, total: int, peak: float, warmup: int) -> float:
    """Linear warmup then cosine decay to zero at total steps."""
    if total <= 0:
        return 0.0
    if step < warmup:
        return peak * (step + 1) / max(1, warmup)
    span = max(1, total - warmup)
    progress = (step - warmup) / span
    return peak * 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))


def combine_worker_grads(per_worker: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Sum gradient dicts from data-parallel worker tapes in worker-index
    order, so accumulation is deterministic regardless of completion
    order."""
    total: dict[str, np.ndarray] = {}
    for grads in per_worker:
        for name, g in grads.items():
            if name in total:
                total[name] = total[name] + g
            else:
                total[name] = np.array(g, copy=True)
    return total


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float):
    """Scale all gradients so the global L2 norm is at most max_norm.
    Returns (clipped grads, pre-clip norm)."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = math.sqrt(sq)
    if norm > max_norm > 0:
        factor = max_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


# ------------------------------------------------------------ train loop

def _encode_grouped(params: EncoderParams, cfg: EncoderConfig, pixels: np.ndarray, modalities: list[str]):
    """Encode a batch whose rows may carry different modality tags,
    preserving row order (untied variants route per modality)."""
    unique = set(modalities) or {"image"}
    if len(unique) == 1:
        return encode(params, cfg, pixels, next(iter(unique)))
    mods = np.array(modalities)
    order = []
    parts = []
    for m in sorted(unique):
        idx = np.flatnonzero(mods == m)
        order.extend(idx.tolist())
        parts.append(encode(params, cfg, pixels[idx], m))
    merged = ad.concat(parts, axis=0)
    inverse = np.argsort(order)
    return ad.slice_(merged, (inverse,))


def batch_loss(params: EncoderParams, cfg: EncoderConfig, batch: PairBatch) -> ContrastiveOutput:
    left_mods = batch.left_modalities or ["image"] * len(batch)
    right_mods = batch.right_modalities or ["rendered_text"] * len(batch)
    if (
        cfg.variant == "clippo"
        and batch.left.shape == batch.right.shape
        and "tokenized_text" not in left_mods
        and "tokenized_text" not in right_mods
    ):
        # One fused forward: every row goes through the same shared
        # tower anyway, and a single pass halves per-op overhead.
        n = len(batch)
        both = encode(params, cfg, np.concatenate([batch.left, batch.right]), "image")
        left = ad.slice_(both, (slice(0, n),))
        right = ad.slice_(both, (slice(n, 2 * n),))
    else:
        left = _encode_grouped(params, cfg, batch.left, left_mods)
        right = _encode_grouped(params, cfg, batch.right, right_mods)
    return contrastive_loss(left, right, params.temperature())


def pos_embed_multipliers(params: EncoderParams, mult: float) -> dict[str, float]:
    if mult == 1.0:
        return {}
    return {name: mult for name in params.tensors if name == "pos" or name.endswith("/pos") or name == "txt_pos"}


@dataclass
class TrainResult:
    params: EncoderParams
    metrics: list[tuple[int, float, float, float]]  # (step, loss, lr, temperature)
    checkpoint_path: str | None = None


def write_metrics_csv(path, metrics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "lr", "temperature"])
        writer.writerows(metrics)


def train(
    enc_cfg: EncoderConfig,
    cfg: TrainConfig,
    batches,
    out_dir: str | None = None,
    params: EncoderParams | None = None,
) -> TrainResult:
    """Run the contrastive training loop over a PairBatch stream.

    Per step: forward both sides, symmetric loss, backward, global-norm
    clip, AdamW update with decoupled weight decay, learning rate from
    the warmup/rsqrt/cooldown schedule (evaluated at step+1 so the first
    update is nonzero), and an optional positional-embedding multiplier.
    The temperature is a trained parameter. Aborts on NaN loss.
    """
    if params is None:
        params = init_params(enc_cfg, seed=cfg.seed)
        params.tensors["log_temperature"].data[...] = math.log(cfg.temperature_init)
    opt = AdamW(weight_decay=cfg.weight_decay)
    mults = pos_embed_multipliers(params, cfg.pos_embed_lr_mult)
    total = cfg.total_steps
    metrics: list[tuple[int, float, float, float]] = []
    named = params.tensors
    for step in range(total):
        batch = next(batches)
        with Tape() as tape:
            out = batch_loss(params, enc_cfg, batch)
        loss_val = float(out.loss.data)
        if math.isnan(loss_val):
            raise RuntimeError(f"NaN loss at step {step}")
        raw = backward(tape, out.loss)
        grads = {name: grad_of(raw, t) for name, t in named.items() if id(t) in raw}
        grads, _ = clip_global_norm(grads, cfg.grad_clip_norm)
        lr = lr_at(min(step + 1, total), cfg)
        opt.step(named, grads, lr, mults)
        if step % cfg.log_every == 0 or step == total - 1:
            metrics.append((step, loss_val, lr, float(params.temperature().data)))
    checkpoint_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, "checkpoint")
        params.save(checkpoint_path, extra_meta={"train_steps": total})
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metrics)
    return TrainResult(params, metrics, checkpoint_path)
