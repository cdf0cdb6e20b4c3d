#!/usr/bin/env python3
"""Visual patches vs subword tokens: who needs fewer?

A byte-level BPE vocabulary compresses text it was trained on but pays
byte-by-byte for everything else. Rendered text costs the same patches
everywhere. The report counts, per language, how often the visual
sequence is strictly shorter; over 75% counts as "more efficient".
"""

from pixeltower.bpe import bpe_decode, bpe_encode, bpe_train, efficiency_report, visual_sequence_length
from pixeltower.glyphs import load_builtin_table
from pixeltower.render import RenderConfig

table = load_builtin_table()
rcfg = RenderConfig(width_px=224, height_px=224)

english = "the quick brown fox jumps over the lazy dog and then naps in the warm sun "
vocab = bpe_train(english * 30, 400)
print(f"vocab size {vocab.size} ({len(vocab.merges)} merges)")

sample = "the quick brown fox naps"
ids = bpe_encode(vocab, sample)
print(f"{sample!r}: {len(ids)} subword tokens, {visual_sequence_length(sample, rcfg, table)} visual patches")
assert bpe_decode(vocab, ids) == sample.encode()

corpora = {
    "en": [english.strip()] * 8,
    "el": ["αβγδ εζηθ ικλμ νξοπ"] * 8,  # unseen script: byte fallback
}
report = efficiency_report(corpora, {"bpe400": vocab}, rcfg, table)
print("\nlanguage tokenizer  visual(mean)  subword(mean)  shorter  verdict")
for row in report.rows:
    print(
        f"{row.language:8s} {row.tokenizer:10s} {row.visual_mean:10.1f} {row.subword_mean:13.1f}"
        f"  {row.shorter_fraction:6.2f}  {row.verdict}"
    )
