#!/usr/bin/env python3
"""Render text as images with the bitmap font.

Text enters the model the same way photographs do: as pixel canvases.
This script renders a few strings, prints a terminal preview, and shows
how patch occupancy measures the "token length" of a rendered sentence.
"""

import numpy as np

from pixeltower.glyphs import load_builtin_table
from pixeltower.render import RenderConfig, render_sentence_pair, render_text, used_patch_count, write_pnm

table = load_builtin_table()
cfg = RenderConfig(width_px=224, height_px=224)

img = render_text("Rendering text as pixels removes the tokenizer.", cfg, table)
print(f"canvas: {img.pixels.shape}, values: {sorted(set(np.unique(img.pixels)))}")
print(f"lines used: {img.meta.lines_used}, truncated: {img.meta.truncated}")

# Terminal preview of the first two text lines (32px tall, downsampled 2x).
fg = cfg.foreground_value
for y in range(0, 32, 2):
    row = "".join("#" if (img.pixels[y, x : x + 2, 0] == fg).any() else "." for x in range(0, 224, 2))
    print(row[:100])

# Patch occupancy = the visual sequence length at 16px patches.
for text in ["a", "a few words", "a sentence that wraps onto several lines " * 3]:
    n = used_patch_count(render_text(text, cfg, table), 16)
    print(f"{n:4d} patches <- {text[:50]!r}")

# Sentence pairs share one canvas, separated by a literal [SEP] marker.
pair = render_sentence_pair("First sentence.", "Second one.", cfg, table)
write_pnm("demo_render.pgm", pair)
print("wrote demo_render.pgm (P5)")
