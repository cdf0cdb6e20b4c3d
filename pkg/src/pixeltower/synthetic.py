"""Generated desk-scale datasets: captioned shape images and a matching
visual question answering task.

Ten classes (five shapes times solid/hollow) are drawn as grayscale
canvases in the renderer's [-1, 1] value convention. Captions describe
class plus size and position so every training pair has a unique string;
class prompts ("solid circle") are the class phrase alone. The VQA set
asks one-word questions with answers from a small closed set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import PairedImageText

SHAPES = ("circle", "square", "triangle", "cross", "diamond")
STYLES = ("solid", "hollow")
SIZE_WORDS = ("small", "big")
POSITION_WORDS = ("top left", "top right", "low left", "low right")

BACKGROUND = 0.3
INK = -0.8


def class_names() -> list[str]:
    return [f"{style} {shape}" for style in STYLES for shape in SHAPES]


def _shape_mask(shape: str, px: int, cx: float, cy: float, r: float) -> np.ndarray:
    ys, xs = np.mgrid[0:px, 0:px]
    dx, dy = xs - cx, ys - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if shape == "triangle":
        # Upward triangle: apex at cy - r, base at cy + r.
        t = (dy + r) / (2 * r)
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= t * r)
    if shape == "cross":
        arm = max(1.5, r / 3)
        return ((np.abs(dx) <= arm) | (np.abs(dy) <= arm)) & (np.abs(dx) <= r) & (np.abs(dy) <= r)
    raise ValueError(f"unknown shape {shape!r}")


def _erode(mask: np.ndarray, steps: int = 2) -> np.ndarray:
    out = mask
    for _ in range(steps):
        shrunk = out.copy()
        shrunk[1:] &= out[:-1]
        shrunk[:-1] &= out[1:]
        shrunk[:, 1:] &= out[:, :-1]
        shrunk[:, :-1] &= out[:, 1:]
        out = shrunk
    return out


def draw_shape(shape: str, style: str, px: int, cx: float, cy: float, r: float, rng, noise: float = 0.02) -> np.ndarray:
    """One grayscale canvas with the inked shape; optional pixel noise."""
    canvas = np.full((px, px), BACKGROUND)
    mask = _shape_mask(shape, px, cx, cy, r)
    if style == "hollow":
        mask = mask & ~_erode(mask, steps=2)
    canvas[mask] = INK
    if noise:
        canvas += rng.normal(0.0, noise, size=(px, px))
    return np.clip(canvas, -1.0, 1.0)[:, :, None]


def _cell_center(pos_index: int, px: int) -> tuple[float, float]:
    row, col = divmod(pos_index, 2)
    quarter = px // 4
    return quarter * (1 + 2 * col), quarter * (1 + 2 * row)


def _radius(size_index: int, px: int) -> float:
    return px / 9.0 if size_index == 0 else px / 5.0


@dataclass
class ShapesDataset:
    train: PairedImageText
    train_labels: np.ndarray
    heldout_images: np.ndarray
    heldout_labels: np.ndarray
    prompts: list[str]
    train_specs: list[dict] = None  # per-pair draw recipe for augmentation


def make_shapes_dataset(seed: int = 0, image_px: int = 64, heldout_per_class: int = 20) -> ShapesDataset:
    """Ten-class captioned dataset with unique caption strings.

    Training covers every (class, size, corner) cell once, plus three
    centered anchor pairs per class whose captions are the bare class
    phrase and its size variants ("solid circle", "solid circle small",
    "solid circle big"). Every caption starts with the class phrase, so
    zero-shot prompts share their rendered prefix with all captions of
    the class.

    Training images are stored noise-free: fixed per-image noise would
    itself become the easiest pair-discriminative feature under a
    contrastive loss. Add fresh noise per batch at train time (see
    paired_batches' augment_noise) and the held-out draws, which do
    carry fresh noise, stay in distribution.
    """
    rng = np.random.default_rng(seed)
    prompts = class_names()
    images, captions, labels, specs = [], [], [], []
    for label, prompt in enumerate(prompts):
        style, shape = prompt.split(" ")
        for size_i, size_word in enumerate(SIZE_WORDS):
            for pos_i, pos_word in enumerate(POSITION_WORDS):
                cx, cy = _cell_center(pos_i, image_px)
                cx += rng.uniform(-2, 2)
                cy += rng.uniform(-2, 2)
                images.append(draw_shape(shape, style, image_px, cx, cy, _radius(size_i, image_px), rng, noise=0.0))
                captions.append(f"{style} {shape} {size_word} {pos_word}")
                labels.append(label)
                specs.append({"shape": shape, "style": style, "kind": "corner", "size_i": size_i, "pos_i": pos_i})
        # Centered anchors; the first caption is the zero-shot prompt.
        anchors = [
            (prompt, image_px / 7.0, "bare"),
            (f"{prompt} small", _radius(0, image_px), "small"),
            (f"{prompt} big", _radius(1, image_px), "big"),
        ]
        for text, r, kind in anchors:
            cx = image_px / 2 + rng.uniform(-3, 3)
            cy = image_px / 2 + rng.uniform(-3, 3)
            images.append(draw_shape(shape, style, image_px, cx, cy, r, rng, noise=0.0))
            captions.append(text)
            labels.append(label)
            specs.append({"shape": shape, "style": style, "kind": kind, "size_i": None, "pos_i": None})
    train = PairedImageText(np.stack(images), captions)

    # Held-out draws match the anchors' centered placement (the corner
    # cells are tied to position captions during training) and test
    # generalization over fresh noise, jitter, and radius interpolation.
    held_images, held_labels = [], []
    for label, prompt in enumerate(prompts):
        style, shape = prompt.split(" ")
        for _ in range(heldout_per_class):
            cx = image_px / 2 + rng.uniform(-3, 3)
            cy = image_px / 2 + rng.uniform(-3, 3)
            r = rng.uniform(_radius(0, image_px), _radius(1, image_px))
            held_images.append(draw_shape(shape, style, image_px, cx, cy, r, rng))
            held_labels.append(label)
    return ShapesDataset(
        train=train,
        train_labels=np.array(labels),
        heldout_images=np.stack(held_images),
        heldout_labels=np.array(held_labels),
        prompts=prompts,
        train_specs=specs,
    )


def draw_from_spec(spec: dict, image_px: int, rng, noise: float = 0.02) -> np.ndarray:
    """One fresh draw of a training pair's image.

    Attributes a caption does not mention are free and get randomized:
    corner pairs keep their size and corner (jitter only), size anchors
    roam over all five cells, and the bare class anchor roams radius
    across the whole small-to-big range at the center. Captions stay
    truthful under every draw.
    """
    kind = spec["kind"]
    small, big = _radius(0, image_px), _radius(1, image_px)
    if kind == "corner":
        cx, cy = _cell_center(spec["pos_i"], image_px)
        cx += rng.uniform(-2, 2)
        cy += rng.uniform(-2, 2)
        r = _radius(spec["size_i"], image_px) + rng.uniform(-0.8, 0.8)
    else:
        # Anchors stay centered with disjoint radius bands per caption,
        # so no two captions of a class share an image distribution and
        # retrieval over the fixed pairs stays learnable.
        cx = image_px / 2 + rng.uniform(-3, 3)
        cy = image_px / 2 + rng.uniform(-3, 3)
        if kind == "small":
            r = small + rng.uniform(-0.8, 0.8)
        elif kind == "big":
            r = big + rng.uniform(-0.8, 0.8)
        else:  # bare: the middle band between small and big
            mid = (small + big) / 2
            r = mid + rng.uniform(-0.8, 0.8)
    return draw_shape(spec["shape"], spec["style"], image_px, cx, cy, r, rng, noise=noise)


def augmented_shape_batches(
    ds: ShapesDataset,
    render_cfg,
    table,
    batch_size: int,
    seed: int = 0,
    noise: float = 0.02,
    anchor_weight: float = 2.0,
):
    """PairBatch stream over the shapes dataset with per-draw image
    augmentation; captions (and their renders) are fixed, images are
    redrawn from their specs every time. Batches sample pairs without
    replacement so contrastive targets stay unambiguous; anchor pairs
    (the class-phrase captions that carry the zero-shot alignment) are
    oversampled by anchor_weight."""
    from .render import render_text
    from .training import IMAGE_ALT_TEXT, PairBatch

    n = len(ds.train)
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
    image_px = ds.train.images.shape[1]
    rendered = np.stack(
        [render_text(c, render_cfg, table).pixels for c in ds.train.captions]
    )
    weights = np.array(
        [1.0 if spec["kind"] == "corner" else anchor_weight for spec in ds.train_specs]
    )
    weights /= weights.sum()
    rng = np.random.default_rng(seed)
    while True:
        idx = rng.choice(n, size=batch_size, replace=False, p=weights)
        left = np.stack(
            [draw_from_spec(ds.train_specs[i], image_px, rng, noise) for i in idx]
        )
        yield PairBatch(
            left=left,
            right=rendered[idx],
            tags=[IMAGE_ALT_TEXT] * batch_size,
            left_modalities=["image"] * batch_size,
            right_modalities=["rendered_text"] * batch_size,
        )


def augmented_shape_pairs(ds: ShapesDataset, render_cfg, table, seed: int = 0, noise: float = 0.02):
    """Single-pair stream (for batch mixing with text/text sources),
    images freshly drawn per sample."""
    from .render import render_text
    from .training import IMAGE_ALT_TEXT, RenderedPair

    n = len(ds.train)
    image_px = ds.train.images.shape[1]
    rendered = [render_text(c, render_cfg, table).pixels for c in ds.train.captions]
    rng = np.random.default_rng(seed)
    while True:
        i = int(rng.integers(n))
        yield RenderedPair(
            draw_from_spec(ds.train_specs[i], image_px, rng, noise),
            rendered[i],
            IMAGE_ALT_TEXT,
            "image",
            "rendered_text",
            None,
            ds.train.captions[i],
        )


@dataclass
class VqaDataset:
    images: np.ndarray
    questions: list[str]
    answer_ids: np.ndarray
    answers: list[str]  # id -> answer string


VQA_QUESTIONS = ("shape?", "solid?")


def make_vqa_dataset(n: int, seed: int = 0, image_px: int = 64) -> VqaDataset:
    """Shape/style questions over fresh shape images.

    "shape?" is answered with the shape word, "solid?" with yes/no, so
    the answer set has seven entries and the global majority answer is
    yes or no at roughly a quarter of the examples.
    """
    rng = np.random.default_rng(seed)
    answers = list(SHAPES) + ["yes", "no"]
    answer_id = {a: i for i, a in enumerate(answers)}
    images, questions, ids = [], [], []
    for _ in range(n):
        shape = SHAPES[rng.integers(len(SHAPES))]
        style = STYLES[rng.integers(len(STYLES))]
        pos_i = int(rng.integers(len(POSITION_WORDS) + 1))
        if pos_i < len(POSITION_WORDS):
            cx, cy = _cell_center(pos_i, image_px)
        else:
            cx, cy = image_px / 2, image_px / 2
        cx += rng.uniform(-2, 2)
        cy += rng.uniform(-2, 2)
        r = _radius(int(rng.integers(2)), image_px) + rng.uniform(-1, 1)
        images.append(draw_shape(shape, style, image_px, cx, cy, r, rng))
        if rng.random() < 0.5:
            questions.append(VQA_QUESTIONS[0])
            ids.append(answer_id[shape])
        else:
            questions.append(VQA_QUESTIONS[1])
            ids.append(answer_id["yes" if style == "solid" else "no"])
    return VqaDataset(np.stack(images), questions, np.array(ids), answers)
