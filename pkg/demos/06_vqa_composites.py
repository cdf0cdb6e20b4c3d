#!/usr/bin/env python3
"""Question-over-image composites for VQA-as-classification.

The question is rendered into a text band and the photograph is resized
to fill the remaining rows, so a single image-only encoder sees both at
once. The band can sit at the top, middle, or bottom.
"""

import numpy as np

from pixeltower.glyphs import load_builtin_table
from pixeltower.render import RenderConfig, RenderedImage, compose_question_image, write_pnm
from pixeltower.synthetic import make_vqa_dataset

table = load_builtin_table()
cfg = RenderConfig(width_px=64, height_px=64)

vqa = make_vqa_dataset(4, seed=0, image_px=64)
print("answer vocabulary:", vqa.answers)

for position in ("top", "middle", "bottom"):
    composed = compose_question_image(
        RenderedImage(vqa.images[0]), vqa.questions[0], cfg, table, position=position
    )
    band_rows = composed.meta.lines_used * 16
    print(f"{position:7s}: question band {band_rows}px, image fills the remaining {64 - band_rows}px")
    write_pnm(f"demo_vqa_{position}.pgm", composed)

print("wrote demo_vqa_top.pgm / _middle / _bottom")
print(f"question {vqa.questions[0]!r} -> answer {vqa.answers[vqa.answer_ids[0]]!r}")
