"""File-format loaders for the training and evaluation pipelines.

Formats are deliberately plain text:

- image/alt-text: TSV lines ``image_path<TAB>caption`` (images are P5/P6)
- sentence corpus: UTF-8, one sentence per line, blank line = document
  boundary
- bitext: ``source<TAB>target`` per line
- task files: TSV with 2 or 3 tab-separated fields depending on the task
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .render import read_pnm


@dataclass
class PairedImageText:
    """In-memory image/alt-text dataset; rows are aligned."""

    images: np.ndarray  # (M, H, W, C)
    captions: list[str]

    def __post_init__(self):
        if len(self.images) != len(self.captions):
            raise DataError("images and captions must be aligned")

    def __len__(self):
        return len(self.images)


def load_corpus(path) -> list[list[str]]:
    """Sentence corpus: one sentence per line, blank line ends a document."""
    docs: list[list[str]] = []
    current: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.strip():
                current.append(line)
            elif current:
                docs.append(current)
                current = []
    if current:
        docs.append(current)
    if not docs:
        raise DataError(f"empty corpus: {path}")
    return docs


def load_bitext(path) -> list[tuple[str, str]]:
    """Aligned sentence pairs, ``src<TAB>tgt`` per line."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"line {line_no}: expected 2 tab-separated fields, got {len(parts)}")
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise DataError(f"empty bitext: {path}")
    return pairs


def load_image_text_tsv(path, value_range=(-1.0, 1.0)) -> PairedImageText:
    """``image_path<TAB>caption`` rows; paths are relative to the TSV."""
    base = os.path.dirname(os.path.abspath(path))
    images = []
    captions = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"line {line_no}: expected image_path<TAB>caption")
            img_path = parts[0]
            if not os.path.isabs(img_path):
                img_path = os.path.join(base, img_path)
            images.append(read_pnm(img_path, value_range).pixels)
            captions.append(parts[1])
    if not images:
        raise DataError(f"empty dataset: {path}")
    return PairedImageText(np.stack(images), captions)


def load_task_tsv(path, fields: int):
    """Generic task file: `fields` tab-separated columns per line."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != fields:
                raise DataError(f"line {line_no}: expected {fields} tab-separated fields")
            rows.append(tuple(parts))
    if not rows:
        raise DataError(f"empty task file: {path}")
    return rows
