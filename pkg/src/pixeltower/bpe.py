"""Byte-level byte-pair encoding and the visual-vs-subword sequence
length comparison.

The vocabulary starts from all 256 single bytes (total coverage, like
byte fallback) and grows by repeatedly merging the most frequent
adjacent pair; ties break lexicographically on the byte strings so
training is fully deterministic. Encoding applies merges in training
order, which is equivalent to repeatedly applying the lowest-ranked
merge present (new adjacencies always involve the just-created piece,
whose merges rank later).

The efficiency report renders each sentence and counts occupied patches
as the visual sequence length, comparing against subword lengths per
vocabulary; "more efficient" is the conservative rule of being strictly
shorter on more than 75% of samples.
"""

from __future__ import annotations

import json
import statistics
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .render import RenderConfig, render_text, used_patch_count

EFFICIENCY_THRESHOLD = 0.75


@dataclass
class Vocab:
    """Byte-level BPE vocabulary: 256 base bytes + ordered merges."""

    merges: list[tuple[bytes, bytes]] = field(default_factory=list)
    specials: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._pieces = [bytes([i]) for i in range(256)]
        self._ranks: dict[tuple[bytes, bytes], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            self._ranks[(a, b)] = rank
            self._pieces.append(a + b)
        self._piece_ids = {p: i for i, p in enumerate(self._pieces)}

    @property
    def size(self) -> int:
        return 256 + len(self.merges) + len(self.specials)

    def piece(self, token_id: int) -> bytes:
        return self._pieces[token_id]

    def to_json(self) -> str:
        return json.dumps(
            {
                "merges": [[a.hex(), b.hex()] for a, b in self.merges],
                "specials": self.specials,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        raw = json.loads(text)
        merges = [(bytes.fromhex(a), bytes.fromhex(b)) for a, b in raw["merges"]]
        return cls(merges, raw.get("specials", []))


def _merge_once(seq: list[bytes], pair: tuple[bytes, bytes]) -> list[bytes]:
    """Replace non-overlapping occurrences of pair, left to right."""
    a, b = pair
    out = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == a and seq[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def bpe_train(corpus, target_size: int, seed: int = 0) -> Vocab:
    """Grow a vocabulary to target_size pieces over the corpus bytes.

    Each round merges the most frequent adjacent pair, breaking count
    ties by the lexicographically smallest (left bytes, right bytes);
    stops early once no adjacent pair remains (the corpus has collapsed
    to a single piece). The seed is accepted for interface symmetry but
    unused: training is deterministic.
    """
    if isinstance(corpus, str):
        corpus = corpus.encode("utf-8")
    if target_size <= 256:
        raise ContractError("target_size must exceed the 256 base bytes")
    if len(corpus) == 0:
        raise DataError("empty corpus")
    seq = [bytes([b]) for b in corpus]
    merges: list[tuple[bytes, bytes]] = []
    while 256 + len(merges) < target_size:
        counts = Counter(zip(seq, seq[1:]))
        if not counts:
            break
        best_count = max(counts.values())
        best = min(p for p, c in counts.items() if c == best_count)
        merges.append(best)
        seq = _merge_once(seq, best)
    return Vocab(merges)


def bpe_encode(vocab: Vocab, text) -> list[int]:
    """Encode text (str or bytes) to token ids: UTF-8 bytes, then merges
    applied in training order. Total: every byte is a base piece."""
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    seq = [bytes([b]) for b in data]
    ranks = vocab._ranks
    while len(seq) > 1:
        best_rank = None
        best_pair = None
        for pair in zip(seq, seq[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank, best_pair = r, pair
        if best_pair is None:
            break
        seq = _merge_once(seq, best_pair)
    ids = vocab._piece_ids
    return [ids[p] for p in seq]


def bpe_decode(vocab: Vocab, token_ids) -> bytes:
    """Inverse of bpe_encode, exact at the byte level."""
    return b"".join(vocab.piece(i) for i in token_ids)


def visual_sequence_length(text: str, render_cfg: RenderConfig, table, patch_px: int = 16) -> int:
    """Patches occupied by the rendered text, up to the last patch that
    contains ink; the visual token count of the pixel model."""
    img = render_text(text, render_cfg, table)
    return used_patch_count(img, patch_px)


@dataclass
class EfficiencyRow:
    language: str
    tokenizer: str
    sample_count: int
    visual_median: float
    visual_mean: float
    subword_median: float
    subword_mean: float
    shorter_fraction: float
    verdict: bool


@dataclass
class EfficiencyReport:
    rows: list[EfficiencyRow]

    def to_csv(self) -> str:
        header = (
            "language,tokenizer,sample_count,visual_median,visual_mean,"
            "subword_median,subword_mean,shorter_fraction,verdict"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.language},{r.tokenizer},{r.sample_count},{r.visual_median},"
                f"{r.visual_mean:.4f},{r.subword_median},{r.subword_mean:.4f},"
                f"{r.shorter_fraction:.6f},{r.verdict}"
            )
        return "\n".join(lines) + "\n"


def efficiency_report(
    corpora: dict[str, list[str]],
    vocabs: dict[str, Vocab],
    render_cfg: RenderConfig,
    table,
    sample_n: int | None = None,
    external_lengths: dict[str, dict[str, list[int]]] | None = None,
    patch_px: int = 16,
    seed: int = 0,
) -> EfficiencyReport:
    """Per-language, per-tokenizer length comparison.

    corpora maps language tag -> sentences; vocabs maps tokenizer name
    -> Vocab; external_lengths maps tokenizer name -> language ->
    precomputed per-sentence lengths aligned with the corpus order (one
    integer per sentence), letting outside tokenizers join the
    comparison. A sample of sample_n sentences per language is drawn
    with a seeded rng; ties count as not-shorter and the verdict is
    strict: shorter on more than 75% of samples.
    """
    if not corpora:
        raise ContractError("need at least one corpus")
    external_lengths = external_lengths or {}
    if not vocabs and not external_lengths:
        raise ContractError("need at least one vocabulary or external length file")
    rng = np.random.default_rng(seed)
    rows: list[EfficiencyRow] = []
    for language in sorted(corpora):
        sentences = corpora[language]
        if not sentences:
            raise DataError(f"empty corpus for language {language!r}")
        idx = np.arange(len(sentences))
        if sample_n is not None and sample_n < len(sentences):
            idx = rng.choice(len(sentences), size=sample_n, replace=False)
        elif sample_n is not None and sample_n > len(sentences):
            warnings.warn(
                f"sample_n {sample_n} exceeds corpus size {len(sentences)} for {language}; using all"
            )
        sampled = [sentences[i] for i in idx]
        visual = [visual_sequence_length(s, render_cfg, table, patch_px) for s in sampled]

        def add_row(name, subword):
            shorter = sum(v < s for v, s in zip(visual, subword))
            fraction = shorter / len(sampled)
            rows.append(
                EfficiencyRow(
                    language=language,
                    tokenizer=name,
                    sample_count=len(sampled),
                    visual_median=statistics.median(visual),
                    visual_mean=statistics.fmean(visual),
                    subword_median=statistics.median(subword),
                    subword_mean=statistics.fmean(subword),
                    shorter_fraction=fraction,
                    verdict=fraction > EFFICIENCY_THRESHOLD,
                )
            )

        for name in sorted(vocabs):
            add_row(name, [len(bpe_encode(vocabs[name], s)) for s in sampled])
        for name in sorted(external_lengths):
            per_lang = external_lengths[name]
            if language not in per_lang:
                continue
            all_lengths = per_lang[language]
            if len(all_lengths) != len(sentences):
                raise DataError(
                    f"external lengths for {name}/{language} have {len(all_lengths)} entries, "
                    f"corpus has {len(sentences)}"
                )
            add_row(name, [all_lengths[i] for i in idx])
    return EfficiencyReport(rows)
