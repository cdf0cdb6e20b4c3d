"""Deterministic monospace text rasterization onto fixed-size canvases.

Text is laid out left-to-right, top-to-bottom on a 16px line grid and
blitted from bitmap glyphs, so identical (text, config, font) inputs
produce bit-identical pixel buffers. Canvases hold floating-point values;
pure text renders contain exactly two values, the background and the
foreground. The same canvases feed the encoder directly, which is why the
default value range is [-1, 1] with a mid-gray background (+0.25) and
black ink (-1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CompositionError, ConfigError, ContractError, DataError, ShapeError
from .glyphs import GLYPH_HEIGHT, GlyphTable

SEPARATOR = " [SEP] "


@dataclass(frozen=True)
class RenderConfig:
    width_px: int = 224
    height_px: int = 224
    line_height_px: int = 16
    background_value: float = 0.25
    foreground_value: float = -1.0
    value_range: tuple[float, float] = (-1.0, 1.0)
    wrap_mode: str = "word"  # "word" (greedy, char fallback) or "char"
    channels: int = 1

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ConfigError("canvas dimensions must be positive")
        if self.line_height_px != GLYPH_HEIGHT:
            raise ConfigError(f"line height must equal glyph height {GLYPH_HEIGHT}")
        if self.wrap_mode not in ("word", "char"):
            raise ConfigError(f"unknown wrap mode {self.wrap_mode!r}")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        lo, hi = self.value_range
        if not (lo <= self.background_value <= hi and lo <= self.foreground_value <= hi):
            raise ConfigError("background/foreground outside value range")

    @property
    def max_lines(self) -> int:
        return self.height_px // self.line_height_px


@dataclass(frozen=True)
class LayoutPlan:
    """Raster-ordered glyph placements: (codepoint, x_px, y_px)."""

    placements: tuple[tuple[int, int, int], ...]
    lines_used: int
    truncated: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "placements": [list(p) for p in self.placements],
                "lines_used": self.lines_used,
                "truncated": self.truncated,
            }
        )


@dataclass
class RenderedImage:
    """Float pixel canvas (H, W, C) plus the layout that produced it.

    meta is None for natural images. background_value records what counts
    as empty for patch-occupancy queries; None when unknown (e.g. images
    loaded from disk).
    """

    pixels: np.ndarray
    meta: LayoutPlan | None = None
    background_value: float | None = None

    @property
    def height_px(self):
        return self.pixels.shape[0]

    @property
    def width_px(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]


class _Cursor:
    """Mutable layout state shared by the wrap strategies."""

    def __init__(self, cfg: RenderConfig):
        self.cfg = cfg
        self.x = 0
        self.line = 0
        self.placements: list[tuple[int, int, int]] = []
        self.truncated = False

    def newline(self):
        self.line += 1
        self.x = 0

    def fits_here(self, width):
        return self.line < self.cfg.max_lines and self.x + width <= self.cfg.width_px

    def place(self, codepoint, width):
        self.placements.append((codepoint, self.x, self.line * self.cfg.line_height_px))
        self.x += width

    def flow_char(self, codepoint, width):
        # Char-level wrap: break the line whenever the glyph does not fit.
        if self.x + width > self.cfg.width_px:
            self.newline()
        if self.line >= self.cfg.max_lines:
            self.truncated = True
            return
        self.place(codepoint, width)


def _advance(table: GlyphTable, ch: str) -> int:
    return table.lookup(ord(ch)).width_px


def layout_text(text: str, cfg: RenderConfig, table: GlyphTable) -> LayoutPlan:
    """Plan glyph placements for text on the configured canvas.

    Layout is monospace with advance equal to each glyph's width. '\\n'
    forces a line break. In word mode, words (maximal runs of non-space,
    non-newline characters) wrap greedily: a word that does not fit the
    remainder of the line moves to the next line, and a word wider than
    the whole canvas falls back to character flow from a fresh line.
    When no further full line exists, remaining characters flow into the
    space left on the current line and the rest is dropped with
    truncated=True; dropped spaces never set the flag. Layout is total:
    any text yields a plan.
    """
    cur = _Cursor(cfg)
    if cfg.wrap_mode == "char":
        for ch in text:
            if ch == "\n":
                cur.newline()
                continue
            cur.flow_char(ord(ch), _advance(table, ch))
    else:
        i, n = 0, len(text)
        while i < n:
            ch = text[i]
            if ch == "\n":
                cur.newline()
                i += 1
            elif ch == " ":
                w = _advance(table, ch)
                if cur.fits_here(w):
                    cur.place(ord(ch), w)
                i += 1
            else:
                j = i
                while j < n and text[j] not in (" ", "\n"):
                    j += 1
                word = text[i:j]
                widths = [_advance(table, c) for c in word]
                word_w = sum(widths)
                out_of_lines = cur.line + 1 >= cfg.max_lines
                if cur.fits_here(word_w):
                    for c, w in zip(word, widths):
                        cur.place(ord(c), w)
                elif word_w <= cfg.width_px and not out_of_lines:
                    cur.newline()
                    for c, w in zip(word, widths):
                        cur.place(ord(c), w)
                else:
                    # Word wider than the canvas (or no next line left):
                    # character flow, from a fresh line when one exists.
                    if cur.x > 0 and word_w > cfg.width_px and not out_of_lines:
                        cur.newline()
                    for c, w in zip(word, widths):
                        cur.flow_char(ord(c), w)
                i = j
    lines_used = 0
    if cur.placements:
        lines_used = max(y for _, _, y in cur.placements) // cfg.line_height_px + 1
    return LayoutPlan(tuple(cur.placements), lines_used, cur.truncated)


def _blit(pixels: np.ndarray, plan: LayoutPlan, cfg: RenderConfig, table: GlyphTable):
    for codepoint, x, y in plan.placements:
        glyph = table.lookup(codepoint)
        for row in range(GLYPH_HEIGHT):
            bits = glyph.rows[row]
            if not bits:
                continue
            for col in range(glyph.width_px):
                if bits >> (glyph.width_px - 1 - col) & 1:
                    pixels[y + row, x + col, :] = cfg.foreground_value


def render_text(text: str, cfg: RenderConfig, table: GlyphTable) -> RenderedImage:
    """Rasterize text onto a fresh background canvas."""
    plan = layout_text(text, cfg, table)
    pixels = np.full(
        (cfg.height_px, cfg.width_px, cfg.channels), cfg.background_value, dtype=np.float64
    )
    _blit(pixels, plan, cfg, table)
    return RenderedImage(pixels, plan, cfg.background_value)


def render_sentence_pair(s1: str, s2: str, cfg: RenderConfig, table: GlyphTable) -> RenderedImage:
    """Render two sentences on one canvas, joined by the literal ' [SEP] '."""
    return render_text(s1 + SEPARATOR + s2, cfg, table)


def resample_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) array; aspect distortion permitted.

    Samples at (i + 0.5) * scale - 0.5 with edge clamping, which keeps
    the identity resize exact.
    """
    in_h, in_w = pixels.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = pixels[y0][:, x0] * (1 - wx) + pixels[y0][:, x1] * wx
    bot = pixels[y1][:, x0] * (1 - wx) + pixels[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def compose_question_image(
    image: RenderedImage,
    question: str,
    cfg: RenderConfig,
    table: GlyphTable,
    position: str = "top",
) -> RenderedImage:
    """Place a rendered question band on the canvas and fill the rest
    with the bilinearly resized natural image.

    position selects where the band sits: "top", "middle", or "bottom".
    For "middle" the resized image is split around the band so that all
    remaining rows are covered. An empty question yields a zero-height
    band (the image fills the canvas). Raises CompositionError when the
    question needs more lines than leave at least one image row.
    """
    if position not in ("top", "middle", "bottom"):
        raise ContractError(f"unknown position {position!r}")
    if image.channels != cfg.channels:
        raise ShapeError(
            f"image has {image.channels} channels, config wants {cfg.channels}"
        )
    tall = RenderConfig(
        width_px=cfg.width_px,
        height_px=(len(question) + 1) * GLYPH_HEIGHT,
        background_value=cfg.background_value,
        foreground_value=cfg.foreground_value,
        value_range=cfg.value_range,
        wrap_mode=cfg.wrap_mode,
        channels=cfg.channels,
    )
    plan = layout_text(question, tall, table)
    band_h = plan.lines_used * cfg.line_height_px
    if band_h >= cfg.height_px:
        raise CompositionError(
            f"question needs {plan.lines_used} lines; canvas holds {cfg.max_lines}"
        )

    if position == "top":
        band_y = 0
    elif position == "bottom":
        band_y = cfg.height_px - band_h
    else:
        band_y = (cfg.height_px - band_h) // 2

    pixels = np.full(
        (cfg.height_px, cfg.width_px, cfg.channels), cfg.background_value, dtype=np.float64
    )
    resized = resample_bilinear(image.pixels.astype(np.float64), cfg.height_px - band_h, cfg.width_px)
    pixels[:band_y] = resized[:band_y]
    pixels[band_y + band_h :] = resized[band_y:]
    shifted = LayoutPlan(
        tuple((cp, x, y + band_y) for cp, x, y in plan.placements),
        plan.lines_used,
        plan.truncated,
    )
    _blit(pixels, shifted, cfg, table)
    return RenderedImage(pixels, shifted, cfg.background_value)


def overlay_text(
    image: RenderedImage,
    text: str,
    cfg: RenderConfig,
    table: GlyphTable,
    position: str = "top",
) -> RenderedImage:
    """Stamp a rendered text band over the image without resizing it.

    Used by the typographic-attack probe: the band (background fill plus
    glyphs) overwrites the image rows at the chosen position. Empty text
    leaves the image untouched.
    """
    if position not in ("top", "middle", "bottom"):
        raise ContractError(f"unknown position {position!r}")
    tall = RenderConfig(
        width_px=image.width_px,
        height_px=(len(text) + 1) * GLYPH_HEIGHT,
        background_value=cfg.background_value,
        foreground_value=cfg.foreground_value,
        value_range=cfg.value_range,
        wrap_mode=cfg.wrap_mode,
        channels=image.channels,
    )
    plan = layout_text(text, tall, table)
    band_h = plan.lines_used * GLYPH_HEIGHT
    pixels = image.pixels.astype(np.float64).copy()
    if band_h == 0:
        return RenderedImage(pixels, None, image.background_value)
    if band_h > image.height_px:
        raise CompositionError("overlay text taller than the image")
    if position == "top":
        band_y = 0
    elif position == "bottom":
        band_y = image.height_px - band_h
    else:
        band_y = (image.height_px - band_h) // 2
    pixels[band_y : band_y + band_h] = cfg.background_value
    shifted = LayoutPlan(
        tuple((cp, x, y + band_y) for cp, x, y in plan.placements),
        plan.lines_used,
        plan.truncated,
    )
    _blit(pixels, shifted, cfg, table)
    return RenderedImage(pixels, shifted, image.background_value)


def used_patch_count(img: RenderedImage, patch_px: int) -> int:
    """1 + raster index of the last patch holding any non-background
    pixel; 0 for a blank canvas.

    This is the visual sequence length of a text render when patches are
    the model's tokens. Requires patch-divisible dimensions and a known
    background value.
    """
    h, w = img.height_px, img.width_px
    if h % patch_px or w % patch_px:
        raise ShapeError(f"canvas {h}x{w} not divisible by patch {patch_px}")
    if img.background_value is None:
        raise ContractError("image has no background value; not a text render")
    ink = (img.pixels != img.background_value).any(axis=2)
    grid = ink.reshape(h // patch_px, patch_px, w // patch_px, patch_px)
    occupied = grid.any(axis=(1, 3)).ravel()
    hits = np.flatnonzero(occupied)
    return 0 if hits.size == 0 else int(hits[-1]) + 1


def to_bytes_image(img: RenderedImage, value_range=None) -> np.ndarray:
    lo, hi = value_range if value_range is not None else (-1.0, 1.0)
    scaled = np.clip((img.pixels - lo) / (hi - lo), 0.0, 1.0)
    return np.round(scaled * 255.0).astype(np.uint8)


def write_pnm(path, img: RenderedImage, value_range=None):
    """Write the canvas as binary P5 (1 channel) or P6 (3 channels)."""
    data = to_bytes_image(img, value_range)
    magic = b"P5" if img.channels == 1 else b"P6"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (img.width_px, img.height_px))
        fh.write(data.tobytes())


def read_pnm(path, value_range=(-1.0, 1.0)) -> RenderedImage:
    """Read a binary P5/P6 file back into a float canvas."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields = []
    i = 0
    while len(fields) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        fields.append(raw[i:j])
        i = j
    i += 1  # single whitespace after maxval
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise DataError(f"not a P5/P6 file (magic {magic!r})")
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    data = np.frombuffer(raw[i : i + count], dtype=np.uint8).reshape(height, width, channels)
    lo, hi = value_range
    pixels = lo + (data.astype(np.float64) / maxval) * (hi - lo)
    return RenderedImage(pixels, None, None)
