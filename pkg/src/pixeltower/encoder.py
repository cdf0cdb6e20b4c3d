"""Shared vision transformer for all tower variants.

One encoder body (patch embed + pre-layernorm transformer blocks +
attention-pooling head + projection) serves regular images and rendered
text alike. Variants differ only in which pieces are duplicated:

- ``clippo``              one pixel tower, everything shared
- ``one_tower_tokenized`` pixel tower plus a word-embedding input path
- ``two_tower``           separate pixel and tokenized-text towers
- ``clippo_untied_embed`` separate patch embeddings per modality
- ``clippo_untied_head``  separate pooling head + projection per modality
- ``clippo_untied_both``  both of the above

The learned contrastive temperature lives here (as its log, so it stays
positive) because it is shared by every variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .container import load_container, save_container
from .errors import ConfigError, ContractError, ShapeError

VARIANTS = (
    "clippo",
    "one_tower_tokenized",
    "two_tower",
    "clippo_untied_embed",
    "clippo_untied_head",
    "clippo_untied_both",
)

MODALITIES = ("image", "rendered_text", "tokenized_text")

TEMPERATURE_INIT = 10.0
INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture description for every tower variant.

    Defaults are the desk-scale configuration (patch 8 on 64px images,
    depth 4, width 64, 4 heads): small enough for CPU runs, structurally
    identical to ViT-B/16, whose reference values are patch 16 on 224px
    images (196 tokens), depth 12, width 768, 12 heads, and a 768-wide
    contrastive representation.
    """

    patch_px: int = 8
    image_px: int = 64
    depth: int = 4
    width: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    rep_dim: int = 64
    channels: int = 1
    variant: str = "clippo"
    vocab_size: int | None = None
    seq_len: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.image_px % self.patch_px:
            raise ConfigError("image_px must be divisible by patch_px")
        if self.width % self.heads:
            raise ConfigError("width must be divisible by heads")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self._tokenized and (not self.vocab_size or not self.seq_len):
            raise ConfigError(f"variant {self.variant} needs vocab_size and seq_len")

    @property
    def _tokenized(self):
        return self.variant in ("one_tower_tokenized", "two_tower")

    @property
    def n_patches(self):
        return (self.image_px // self.patch_px) ** 2

    @property
    def patch_dim(self):
        return self.patch_px * self.patch_px * self.channels

    @property
    def head_dim(self):
        return self.width // self.heads

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class EmbeddingBatch:
    """Unit-norm embedding rows with a modality tag per row."""

    embeddings: np.ndarray
    modalities: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.embeddings.ndim != 2:
            raise ShapeError("embeddings must be N x rep_dim")
        if self.modalities and len(self.modalities) != len(self.embeddings):
            raise ShapeError("one modality tag per row required")


def _tower_shapes(cfg: EncoderConfig, prefix: str, pixel: bool):
    """Yield (name, shape, kind) for one full tower."""
    w, mlp = cfg.width, cfg.mlp_ratio * cfg.width
    if pixel:
        yield prefix + "embed/patch_kernel", (cfg.patch_dim, w), "weight"
        yield prefix + "embed/patch_bias", (w,), "zeros"
        yield prefix + "pos", (cfg.n_patches, w), "weight"
    else:
        yield prefix + "embed/tok_embed", (cfg.vocab_size, w), "weight"
        yield prefix + "pos", (cfg.seq_len, w), "weight"
    for i in range(cfg.depth):
        b = f"{prefix}block{i}/"
        yield b + "ln1/gain", (w,), "ones"
        yield b + "ln1/bias", (w,), "zeros"
        for m in ("wq", "wk", "wv", "wo"):
            yield b + f"attn/{m}", (w, w), "weight"
        for m in ("bq", "bk", "bv", "bo"):
            yield b + f"attn/{m}", (w,), "zeros"
        yield b + "ln2/gain", (w,), "ones"
        yield b + "ln2/bias", (w,), "zeros"
        yield b + "mlp/w1", (w, mlp), "weight"
        yield b + "mlp/b1", (mlp,), "zeros"
        yield b + "mlp/w2", (mlp, w), "weight"
        yield b + "mlp/b2", (w,), "zeros"
    yield prefix + "ln_f/gain", (w,), "ones"
    yield prefix + "ln_f/bias", (w,), "zeros"
    yield from _head_shapes(cfg, prefix + "map/")
    yield prefix + "proj", (w, cfg.rep_dim), "weight"


def _head_shapes(cfg: EncoderConfig, prefix: str):
    w, mlp = cfg.width, cfg.mlp_ratio * cfg.width
    yield prefix + "query", (1, w), "weight"
    for m in ("wq", "wk", "wv", "wo"):
        yield prefix + f"{m}", (w, w), "weight"
    for m in ("bq", "bk", "bv", "bo"):
        yield prefix + f"{m}", (w,), "zeros"
    yield prefix + "ln/gain", (w,), "ones"
    yield prefix + "ln/bias", (w,), "zeros"
    yield prefix + "mlp/w1", (w, mlp), "weight"
    yield prefix + "mlp/b1", (mlp,), "zeros"
    yield prefix + "mlp/w2", (mlp, w), "weight"
    yield prefix + "mlp/b2", (w,), "zeros"


def param_shapes(cfg: EncoderConfig):
    """The full (name, shape, kind) listing for a config, in a fixed order."""
    v = cfg.variant
    if v == "two_tower":
        yield from _tower_shapes(cfg, "img/", pixel=True)
        yield from _tower_shapes(cfg, "txt/", pixel=False)
    else:
        yield from _tower_shapes(cfg, "", pixel=True)
        if v == "one_tower_tokenized":
            yield "txt_embed/tok_embed", (cfg.vocab_size, cfg.width), "weight"
            yield "txt_pos", (cfg.seq_len, cfg.width), "weight"
        if v in ("clippo_untied_embed", "clippo_untied_both"):
            yield "txt_embed/patch_kernel", (cfg.patch_dim, cfg.width), "weight"
            yield "txt_embed/patch_bias", (cfg.width,), "zeros"
        if v in ("clippo_untied_head", "clippo_untied_both"):
            yield from _head_shapes(cfg, "txt_map/")
            yield "txt_proj", (cfg.width, cfg.rep_dim), "weight"
    yield "log_temperature", (), "temperature"


def expected_param_count(cfg: EncoderConfig) -> int:
    """Parameter count as a pure function of the config."""
    return sum(int(np.prod(shape)) if shape else 1 for _, shape, _ in param_shapes(cfg))


def _truncated_normal(rng, shape, std):
    """Normal(0, std) with resampling outside two standard deviations."""
    out = rng.standard_normal(shape)
    for _ in range(100):
        bad = np.abs(out) > 2.0
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum()))
    return out * std


class EncoderParams:
    """All weights for one config: a name -> Tensor mapping."""

    def __init__(self, cfg: EncoderConfig, tensors: dict[str, Tensor]):
        self.cfg = cfg
        self.tensors = tensors

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def param_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def temperature(self) -> Tensor:
        return ad.exp(self.tensors["log_temperature"])

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.cfg,
            {k: Tensor(t.data.copy(), trainable=t.trainable) for k, t in self.tensors.items()},
        )

    def save(self, base_path, extra_meta: dict | None = None):
        meta = {"encoder_config": self.cfg.to_dict()}
        if extra_meta:
            meta.update(extra_meta)
        save_container(base_path, {k: t.data for k, t in self.tensors.items()}, meta)

    @classmethod
    def load(cls, base_path) -> "EncoderParams":
        tensors, meta = load_container(base_path)
        cfg = EncoderConfig.from_dict(meta["encoder_config"])
        wrapped = {k: Tensor(v, trainable=True) for k, v in tensors.items()}
        return cls(cfg, wrapped)


def init_params(cfg: EncoderConfig, seed: int = 0) -> EncoderParams:
    """Deterministic init: truncated-normal (std 0.02) weights, zero
    biases, unit layernorm gains, temperature at its pinned start value."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype)
    tensors: dict[str, Tensor] = {}
    for name, shape, kind in param_shapes(cfg):
        if kind == "weight":
            data = _truncated_normal(rng, shape, INIT_STD)
        elif kind == "zeros":
            data = np.zeros(shape)
        elif kind == "ones":
            data = np.ones(shape)
        elif kind == "temperature":
            data = np.asarray(math.log(TEMPERATURE_INIT))
        else:  # pragma: no cover
            raise ConfigError(f"unknown init kind {kind}")
        tensors[name] = Tensor(np.asarray(data, dtype=dtype), trainable=True)
    return EncoderParams(cfg, tensors)


def patchify(images, cfg: EncoderConfig) -> np.ndarray:
    """Cut (B, H, W, C) pixels into raster-ordered, channel-last flattened
    patches of shape (B, n_patches, patch_dim)."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"expected (B, H, W, C) pixels, got shape {arr.shape}")
    b, h, w, c = arr.shape
    p = cfg.patch_px
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} not divisible by patch {p}")
    gh, gw = h // p, w // p
    tiles = arr.reshape(b, gh, p, gw, p, c).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(tiles.reshape(b, gh * gw, p * p * c))


def _mha(P: EncoderParams, pfx: str, q_in, kv_in, heads: int, head_dim: int):
    """Multi-head attention; q_in may be unbatched (shared query)."""
    scale = 1.0 / math.sqrt(head_dim)
    q = ad.add(ad.matmul(q_in, P[pfx + "wq"]), P[pfx + "bq"])
    k = ad.add(ad.matmul(kv_in, P[pfx + "wk"]), P[pfx + "bk"])
    v = ad.add(ad.matmul(kv_in, P[pfx + "wv"]), P[pfx + "bv"])

    def split(t, unbatched=False):
        n = t.shape[-2]
        if unbatched:
            return ad.transpose(ad.reshape(t, (n, heads, head_dim)), (1, 0, 2))
        return ad.transpose(ad.reshape(t, (-1, n, heads, head_dim)), (0, 2, 1, 3))

    unbatched_q = len(q.shape) == 2
    qh = split(q, unbatched_q)
    kh, vh = split(k), split(v)
    scores = ad.scale(ad.matmul(qh, ad.swap_last_axes(kh)), scale)
    att = ad.softmax_lastdim(scores)
    ctx = ad.matmul(att, vh)  # [B, H, Nq, dh]
    nq = q.shape[-2]
    merged = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (-1, nq, heads * head_dim))
    return ad.add(ad.matmul(merged, P[pfx + "wo"]), P[pfx + "bo"])


def _block(P: EncoderParams, pfx: str, h, cfg: EncoderConfig):
    a = ad.layernorm(h, P[pfx + "ln1/gain"], P[pfx + "ln1/bias"])
    h = ad.add(h, _mha(P, pfx + "attn/", a, a, cfg.heads, cfg.head_dim))
    m = ad.layernorm(h, P[pfx + "ln2/gain"], P[pfx + "ln2/bias"])
    m = ad.gelu(ad.add(ad.matmul(m, P[pfx + "mlp/w1"]), P[pfx + "mlp/b1"]))
    m = ad.add(ad.matmul(m, P[pfx + "mlp/w2"]), P[pfx + "mlp/b2"])
    return ad.add(h, m)


def _map_head(P: EncoderParams, pfx: str, tokens, cfg: EncoderConfig):
    """Attention pooling: one learned query cross-attends over the
    tokens, then a two-layer MLP refines the pooled vector."""
    h = _mha(P, pfx, P[pfx + "query"], tokens, cfg.heads, cfg.head_dim)
    m = ad.layernorm(h, P[pfx + "ln/gain"], P[pfx + "ln/bias"])
    m = ad.gelu(ad.add(ad.matmul(m, P[pfx + "mlp/w1"]), P[pfx + "mlp/b1"]))
    m = ad.add(ad.matmul(m, P[pfx + "mlp/w2"]), P[pfx + "mlp/b2"])
    h = ad.add(h, m)
    return ad.reshape(h, (-1, cfg.width))


def _routes(cfg: EncoderConfig, modality: str):
    """(embed_prefix, block_prefix, head_prefix, tokenized) for a modality."""
    v = cfg.variant
    if modality not in MODALITIES:
        raise ContractError(f"unknown modality {modality!r}")
    tokenized = modality == "tokenized_text"
    if v == "two_tower":
        return ("txt/", "txt/", "txt/", True) if tokenized else ("img/", "img/", "img/", False)
    if tokenized:
        if v != "one_tower_tokenized":
            raise ContractError(f"variant {v} does not accept token ids")
        return "txt_", "", "", True
    head = "txt_" if (modality == "rendered_text" and v in ("clippo_untied_head", "clippo_untied_both")) else ""
    embed = "txt_" if (modality == "rendered_text" and v in ("clippo_untied_embed", "clippo_untied_both")) else ""
    return embed, "", head, False


def _embed_tokens(P: EncoderParams, cfg: EncoderConfig, inputs, modality: str):
    """Input embedding stage: returns a [B, N, width] Tensor."""
    embed, block, head, tokenized = _routes(cfg, modality)
    dtype = np.dtype(cfg.dtype)
    if tokenized:
        ids = np.asarray(inputs)
        if ids.ndim == 1:
            ids = ids[None]
        if not np.issubdtype(ids.dtype, np.integer):
            raise ContractError("tokenized_text expects integer token ids")
        if ids.shape[1] != cfg.seq_len:
            raise ShapeError(f"expected seq_len {cfg.seq_len}, got {ids.shape[1]}")
        onehot = Tensor(np.eye(cfg.vocab_size, dtype=dtype)[ids])
        h = ad.matmul(onehot, P[embed + "embed/tok_embed"])
        return ad.add(h, P[embed + "pos"]), block, head
    arr = np.asarray(inputs)
    if np.issubdtype(arr.dtype, np.integer):
        raise ContractError(f"modality {modality} expects pixel input, got integer ids")
    if arr.ndim == 4 or (arr.ndim == 3 and arr.shape[-1] in (1, 3) and arr.shape[-2] == cfg.image_px):
        arr = patchify(arr, cfg)
    elif arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != cfg.patch_dim:
        raise ShapeError(f"expected (B, {cfg.n_patches}, {cfg.patch_dim}) tokens, got {arr.shape}")
    x = Tensor(arr.astype(dtype))
    kernel = embed + "embed/patch_kernel"
    h = ad.add(ad.matmul(x, P[kernel]), P[embed + "embed/patch_bias"])
    return ad.add(h, P[block + "pos"]), block, head


def encode_tokens_to_features(P: EncoderParams, cfg: EncoderConfig, inputs, modality: str):
    """Run embed + transformer + pooling; returns pooled [B, width] Tensor."""
    h, block, head = _embed_tokens(P, cfg, inputs, modality)
    for i in range(cfg.depth):
        h = _block(P, f"{block}block{i}/", h, cfg)
    h = ad.layernorm(h, P[block + "ln_f/gain"], P[block + "ln_f/bias"])
    return _map_head(P, head + "map/", h, cfg), head


def encode(P: EncoderParams, cfg: EncoderConfig, inputs, modality: str):
    """Embed inputs into the shared contrastive space.

    inputs: pixel canvases (B, H, W, C), pre-cut patch tokens
    (B, N, patch_dim), or integer token ids (B, seq_len) for tokenized
    variants. Returns a unit-norm [B, rep_dim] Tensor.
    """
    pooled, head = encode_tokens_to_features(P, cfg, inputs, modality)
    projected = ad.matmul(pooled, P[head + "proj"])
    return ad.l2_normalize_lastdim(projected)


def encode_batch(P: EncoderParams, cfg: EncoderConfig, inputs, modality: str) -> EmbeddingBatch:
    emb = encode(P, cfg, inputs, modality).data
    return EmbeddingBatch(np.asarray(emb, dtype=np.float64), [modality] * len(emb))


def resize_positional_embeddings(params: EncoderParams, new_image_px: int) -> EncoderParams:
    """Adapt a checkpoint to a new resolution by bilinearly resizing its
    positional-embedding grids; all other weights are shared unchanged.
    Training a few more steps at the new size completes the adaptation.
    """
    from .render import resample_bilinear

    old_cfg = params.cfg
    if new_image_px % old_cfg.patch_px:
        raise ConfigError(f"{new_image_px}px not divisible by patch {old_cfg.patch_px}")
    new_cfg = EncoderConfig(**{**old_cfg.to_dict(), "image_px": new_image_px})
    side_old = old_cfg.image_px // old_cfg.patch_px
    side_new = new_image_px // old_cfg.patch_px
    tensors = {}
    for name, t in params.tensors.items():
        if (name == "pos" or name.endswith("/pos")) and t.data.shape[0] == side_old**2:
            grid = t.data.reshape(side_old, side_old, old_cfg.width)
            resized = resample_bilinear(grid, side_new, side_new)
            tensors[name] = Tensor(
                resized.reshape(side_new**2, old_cfg.width).astype(t.data.dtype), trainable=True
            )
        else:
            tensors[name] = Tensor(t.data.copy(), trainable=t.trainable)
    return EncoderParams(new_cfg, tensors)


def layer_activations(P: EncoderParams, cfg: EncoderConfig, inputs, modality: str = "image"):
    """Post-block token activations for each transformer layer, as numpy
    arrays of shape (B, N, width); used by representation analyses."""
    h, block, _ = _embed_tokens(P, cfg, inputs, modality)
    acts = []
    for i in range(cfg.depth):
        h = _block(P, f"{block}block{i}/", h, cfg)
        acts.append(np.array(h.data, dtype=np.float64))
    return acts
