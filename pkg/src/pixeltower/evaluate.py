"""Transfer and evaluation protocols over a trained checkpoint.

Everything reduces to embeddings from the shared tower: zero-shot
classification ranks class-name renders against image embeddings,
retrieval ranks the two sides of a paired batch against each other, the
few-shot probe fits a closed-form ridge classifier on frozen features,
VQA fine-tunes the full model on question-over-image composites with a
fresh classification head, sentence tasks train a small MLP on rendered
sentences, and the typographic probe re-scores images after stamping a
confounder word onto them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, grad_of
from .encoder import EncoderParams, encode, encode_tokens_to_features, patchify
from .errors import ConfigError, ContractError, DataError
from .render import (
    RenderConfig,
    RenderedImage,
    compose_question_image,
    overlay_text,
    render_sentence_pair,
    render_text,
)
from .training import AdamW, SgdMomentum, clip_global_norm, cosine_warmup_lr

METRIC_KINDS = ("accuracy", "recall_at_k", "f1", "matthews", "spearman")


@dataclass
class MetricsRecord:
    task: str
    kind: str
    value: float
    split: str = "test"
    config_digest: str = ""

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if self.kind in ("accuracy", "recall_at_k") and not 0.0 <= self.value <= 1.0:
            raise ContractError(f"{self.kind} outside [0, 1]: {self.value}")
        if not -1.0 <= self.value <= 1.0:
            raise ContractError(f"metric outside [-1, 1]: {self.value}")


# ------------------------------------------------------------- metrics

def accuracy_score(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    return float((pred == target).mean())


def f1_binary(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    tp = int(((pred == 1) & (target == 1)).sum())
    fp = int(((pred == 1) & (target == 0)).sum())
    fn = int(((pred == 0) & (target == 1)).sum())
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def matthews_corr(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    tp = int(((pred == 1) & (target == 1)).sum())
    tn = int(((pred == 0) & (target == 0)).sum())
    fp = int(((pred == 1) & (target == 0)).sum())
    fn = int(((pred == 0) & (target == 1)).sum())
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0  # constant predictions or labels
    return float((tp * tn - fp * fn) / math.sqrt(denom))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0
        i = j + 1
    return ranks


def spearman_corr(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    ra, rb = _average_ranks(a), _average_ranks(b)
    sa, sb = ra.std(), rb.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(((ra - ra.mean()) * (rb - rb.mean())).mean() / (sa * sb))


# --------------------------------------------------------- embeddings

class EncoderBundle:
    """A checkpoint plus its rendering setup; embeds images and texts in
    chunks so evaluation memory stays flat."""

    def __init__(self, params: EncoderParams, render_cfg: RenderConfig, table, batch_size: int = 64):
        self.params = params
        self.cfg = params.cfg
        self.render_cfg = render_cfg
        self.table = table
        self.batch_size = batch_size

    def _chunks(self, arr):
        for i in range(0, len(arr), self.batch_size):
            yield arr[i : i + self.batch_size]

    def embed_images(self, images) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        outs = [encode(self.params, self.cfg, c, "image").data for c in self._chunks(images)]
        return np.vstack(outs).astype(np.float64)

    def render_texts(self, texts) -> np.ndarray:
        return np.stack([render_text(t, self.render_cfg, self.table).pixels for t in texts])

    def embed_texts(self, texts) -> np.ndarray:
        outs = []
        for chunk in self._chunks(list(texts)):
            pixels = self.render_texts(chunk)
            outs.append(encode(self.params, self.cfg, pixels, "rendered_text").data)
        return np.vstack(outs).astype(np.float64)

    def embed_sentence_pairs(self, pairs) -> np.ndarray:
        outs = []
        for chunk in self._chunks(list(pairs)):
            pixels = np.stack(
                [render_sentence_pair(a, b, self.render_cfg, self.table).pixels for a, b in chunk]
            )
            outs.append(encode(self.params, self.cfg, pixels, "rendered_text").data)
        return np.vstack(outs).astype(np.float64)


# ----------------------------------------------------------- zero shot

def zero_shot_classify(
    image_embs: np.ndarray,
    class_texts: list[str],
    bundle: EncoderBundle,
    labels=None,
    prompt_template: str | None = None,
):
    """Rank rendered class descriptions against image embeddings.

    Prediction is the argmax cosine similarity (ties resolve to the
    lowest class index). Returns (predictions, accuracy-or-None).
    """
    if len(class_texts) < 2:
        raise ContractError("need at least two classes")
    prompts = [prompt_template.format(c) if prompt_template else c for c in class_texts]
    class_embs = bundle.embed_texts(prompts)
    sims = np.asarray(image_embs) @ class_embs.T
    preds = sims.argmax(axis=1)  # argmax returns the first (lowest) index on ties
    acc = None if labels is None else accuracy_score(preds, labels)
    return preds, acc


def zero_shot_from_embeddings(image_embs: np.ndarray, class_embs: np.ndarray, labels=None):
    """Same ranking rule with precomputed class embeddings."""
    sims = np.asarray(image_embs) @ np.asarray(class_embs).T
    preds = sims.argmax(axis=1)
    acc = None if labels is None else accuracy_score(preds, labels)
    return preds, acc


# ----------------------------------------------------------- retrieval

@dataclass
class RecallResult:
    left_to_right: float
    right_to_left: float


def _recall_one_way(scores: np.ndarray, k: int) -> float:
    n = scores.shape[0]
    hits = 0
    for i in range(n):
        row = scores[i]
        rank = int((row > row[i]).sum() + ((row == row[i]) & (np.arange(n) < i)).sum())
        if rank < k:
            hits += 1
    return hits / n


def retrieval_recall(left_embs: np.ndarray, right_embs: np.ndarray, k: int) -> RecallResult:
    """recall@k for both retrieval directions over aligned pairs; ties
    rank by index so results are deterministic."""
    left_embs, right_embs = np.asarray(left_embs), np.asarray(right_embs)
    if left_embs.shape[0] != right_embs.shape[0]:
        raise ContractError("paired embeddings must align")
    n = left_embs.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"k must lie in [1, {n}], got {k}")
    scores = left_embs @ right_embs.T
    return RecallResult(_recall_one_way(scores, k), _recall_one_way(scores.T, k))


# ------------------------------------------------------- linear probe

def few_shot_linear_probe(
    train_embs: np.ndarray,
    train_labels: np.ndarray,
    test_embs: np.ndarray,
    test_labels: np.ndarray,
    shots: int,
    seed: int = 0,
    ridge: float = 1e-2,
) -> float:
    """Closed-form ridge classifier on `shots` seeded exemplars per class;
    returns held-out accuracy."""
    train_labels = np.asarray(train_labels)
    classes = np.unique(train_labels)
    rng = np.random.default_rng(seed)
    picked = []
    for c in classes:
        idx = np.flatnonzero(train_labels == c)
        if len(idx) < shots:
            raise DataError(f"class {c} has {len(idx)} examples, needs {shots}")
        picked.extend(rng.choice(idx, size=shots, replace=False))
    picked = np.array(sorted(picked))
    x = np.asarray(train_embs, dtype=np.float64)[picked]
    y = np.zeros((len(picked), len(classes)))
    class_to_col = {c: j for j, c in enumerate(classes)}
    for row, lab in enumerate(train_labels[picked]):
        y[row, class_to_col[lab]] = 1.0
    xa = np.hstack([x, np.ones((len(x), 1))])
    reg = ridge * np.eye(xa.shape[1])
    reg[-1, -1] = 0.0  # bias unregularized
    w = np.linalg.solve(xa.T @ xa + reg, xa.T @ y)
    ta = np.hstack([np.asarray(test_embs, dtype=np.float64), np.ones((len(test_embs), 1))])
    preds = classes[(ta @ w).argmax(axis=1)]
    return accuracy_score(preds, test_labels)


# ------------------------------------------------------------ vqa

@dataclass(frozen=True)
class VqaFinetuneConfig:
    steps: int = 400
    batch_size: int = 32
    lr_grid: tuple[float, ...] = (0.03,)
    warmup_frac: float = 0.1
    momentum: float = 0.9
    head_lr_mult: float = 10.0
    pos_embed_lr_mult: float = 1.0
    position: str = "top"
    grad_clip_norm: float = 1.0
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.lr_grid:
            raise ConfigError("learning-rate grid must be nonempty")


def _compose_vqa_pixels(images, questions, render_cfg, table, position):
    out = []
    for img, q in zip(images, questions):
        composed = compose_question_image(
            RenderedImage(np.asarray(img), None, None), q, render_cfg, table, position
        )
        out.append(composed.pixels)
    return np.stack(out)


def _vqa_forward(params, cfg, head, tokens_batch):
    pooled, _ = encode_tokens_to_features(params, cfg, tokens_batch, "image")
    return ad.matmul(pooled, head)


def _finetune_once(params, cfg, tokens, answer_ids, n_answers, ft, lr, seed):
    work = params.copy()
    rng = np.random.default_rng(seed)
    head = Tensor((rng.standard_normal((cfg.width, n_answers)) * 0.02).astype(cfg.dtype), trainable=True)
    named = dict(work.tensors)
    del named["log_temperature"]  # contrastive-only parameter
    named = {**named, "vqa_head": head}
    mults = {"vqa_head": ft.head_lr_mult}
    if ft.pos_embed_lr_mult != 1.0:
        for name in named:
            if name == "pos" or name.endswith("/pos"):
                mults[name] = ft.pos_embed_lr_mult
    opt = SgdMomentum(momentum=ft.momentum)
    warmup = max(1, round(ft.warmup_frac * ft.steps))
    n = len(tokens)
    for step in range(ft.steps):
        batch_idx = rng.integers(0, n, size=min(ft.batch_size, n))
        with Tape() as tape:
            logits = _vqa_forward(work, cfg, head, tokens[batch_idx])
            loss = ad.tmean(ad.cross_entropy_rows(logits, answer_ids[batch_idx]))
        raw = backward(tape, loss)
        grads = {name: grad_of(raw, t) for name, t in named.items() if id(t) in raw}
        grads, _ = clip_global_norm(grads, ft.grad_clip_norm)
        lr_now = cosine_warmup_lr(step, ft.steps, lr, warmup)
        opt.step(named, grads, lr_now, mults)
    return work, head


def _vqa_accuracy(params, cfg, head, tokens, answer_ids, batch_size=64):
    correct = 0
    for i in range(0, len(tokens), batch_size):
        logits = _vqa_forward(params, cfg, head, tokens[i : i + batch_size]).data
        preds = logits.argmax(axis=1)
        target = answer_ids[i : i + batch_size]
        correct += int(((preds == target) & (target >= 0)).sum())
    return correct / len(tokens)


@dataclass
class VqaResult:
    accuracy: float
    chosen_lr: float
    position: str


def vqa_finetune(
    params: EncoderParams,
    train_images,
    train_questions,
    train_answer_ids,
    test_images,
    test_questions,
    test_answer_ids,
    n_answers: int,
    render_cfg: RenderConfig,
    table,
    ft: VqaFinetuneConfig = VqaFinetuneConfig(),
) -> VqaResult:
    """Classification-style VQA transfer.

    Questions are rendered into the image at the configured position,
    the contrastive projection is replaced by a fresh answer head, and
    the whole model is fine-tuned with momentum SGD under a cosine
    schedule with linear warmup (head learning rate multiplied by 10).
    When the grid has several rates the choice is made on a held-out
    slice of the training set, then the winner is retrained on all of
    it. Unknown answers at eval (id < 0) count as wrong.
    """
    cfg = params.cfg
    train_answer_ids = np.asarray(train_answer_ids)
    test_answer_ids = np.asarray(test_answer_ids)
    train_tokens = patchify(
        _compose_vqa_pixels(train_images, train_questions, render_cfg, table, ft.position), cfg
    )
    test_tokens = patchify(
        _compose_vqa_pixels(test_images, test_questions, render_cfg, table, ft.position), cfg
    )
    chosen = ft.lr_grid[0]
    if len(ft.lr_grid) > 1:
        rng = np.random.default_rng(ft.seed)
        order = rng.permutation(len(train_tokens))
        n_val = max(1, round(ft.val_fraction * len(order)))
        val_idx, fit_idx = order[:n_val], order[n_val:]
        best = -1.0
        for lr in ft.lr_grid:
            work, head = _finetune_once(
                params, cfg, train_tokens[fit_idx], train_answer_ids[fit_idx], n_answers, ft, lr, ft.seed
            )
            acc = _vqa_accuracy(work, cfg, head, train_tokens[val_idx], train_answer_ids[val_idx])
            if acc > best:
                best, chosen = acc, lr
    work, head = _finetune_once(
        params, cfg, train_tokens, train_answer_ids, n_answers, ft, chosen, ft.seed
    )
    acc = _vqa_accuracy(work, cfg, head, test_tokens, test_answer_ids)
    return VqaResult(accuracy=acc, chosen_lr=chosen, position=ft.position)


# --------------------------------------------------------- mlp transfer

@dataclass(frozen=True)
class TransferHeadConfig:
    kind: str = "mlp_2x768"  # linear | mlp_2x768 | classifier_head
    hidden: int = 768
    lr: float = 1e-2
    steps: int = 300
    batch_size: int = 32
    warmup: int = 20
    weight_decay: float = 1e-4
    head_lr_mult: float = 1.0
    freeze_encoder: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp_2x768", "classifier_head"):
            raise ConfigError(f"unknown head kind {self.kind!r}")


def _init_head(kind, in_dim, hidden, out_dim, rng, dtype):
    def w(shape):
        return Tensor((rng.standard_normal(shape) * 0.02).astype(dtype), trainable=True)

    def b(n):
        return Tensor(np.zeros(n, dtype=dtype), trainable=True)

    if kind in ("linear", "classifier_head"):
        return {"w0": w((in_dim, out_dim)), "b0": b(out_dim)}
    return {
        "w0": w((in_dim, hidden)),
        "b0": b(hidden),
        "w1": w((hidden, hidden)),
        "b1": b(hidden),
        "w2": w((hidden, out_dim)),
        "b2": b(out_dim),
    }


def _head_forward(kind, head, x):
    if kind in ("linear", "classifier_head"):
        return ad.add(ad.matmul(x, head["w0"]), head["b0"])
    h = ad.gelu(ad.add(ad.matmul(x, head["w0"]), head["b0"]))
    h = ad.gelu(ad.add(ad.matmul(h, head["w1"]), head["b1"]))
    return ad.add(ad.matmul(h, head["w2"]), head["b2"])


def mlp_transfer(
    bundle: EncoderBundle,
    rows,
    metric: str,
    head_cfg: TransferHeadConfig = TransferHeadConfig(),
    task_name: str = "sentence_task",
) -> MetricsRecord:
    """Sentence-task transfer: render single sentences (or pairs via the
    [SEP] layout), take the frozen contrastive representation, and train
    the configured head (a 2-hidden-layer MLP by default).

    rows are (text, label) or (text1, text2, label); classification
    labels are integers, spearman tasks use float targets and a 1-output
    regression head trained with squared error. freeze_encoder=False
    fine-tunes a working copy of the encoder together with the head.
    """
    if metric not in ("accuracy", "f1", "matthews", "spearman"):
        raise ConfigError(f"metric {metric!r} not supported for sentence tasks")
    pairs = len(rows[0]) == 3
    if pairs:
        pixels = np.stack(
            [render_sentence_pair(r[0], r[1], bundle.render_cfg, bundle.table).pixels for r in rows]
        )
    else:
        pixels = bundle.render_texts([r[0] for r in rows])
    raw_labels = [r[-1] for r in rows]
    regression = metric == "spearman"
    if regression:
        targets = np.asarray(raw_labels, dtype=np.float64)
        out_dim = 1
    else:
        targets = np.asarray(raw_labels, dtype=np.int64)
        out_dim = int(targets.max()) + 1
        if metric in ("f1", "matthews") and out_dim > 2:
            raise ConfigError(f"{metric} needs binary labels")
        out_dim = max(out_dim, 2)
    rng = np.random.default_rng(head_cfg.seed)
    n = len(pixels)
    order = rng.permutation(n)
    split = max(1, int(0.8 * n))
    train_idx, test_idx = order[:split], order[split:]
    if len(test_idx) == 0:
        test_idx = train_idx
    work = bundle.params if head_cfg.freeze_encoder else bundle.params.copy()
    cfg = work.cfg
    tokens = patchify(pixels, cfg)
    head = _init_head(head_cfg.kind, cfg.rep_dim, head_cfg.hidden, out_dim, rng, np.float64)
    trainable = dict(head)
    if not head_cfg.freeze_encoder:
        trainable.update({k: t for k, t in work.tensors.items() if k != "log_temperature"})
    opt = AdamW(weight_decay=head_cfg.weight_decay)
    mults = {k: head_cfg.head_lr_mult for k in head}

    if head_cfg.freeze_encoder:
        feats_all = np.vstack(
            [
                encode(work, cfg, tokens[i : i + 64], "rendered_text").data
                for i in range(0, n, 64)
            ]
        ).astype(np.float64)

    def features(idx, taped: bool):
        if head_cfg.freeze_encoder:
            return Tensor(feats_all[idx])
        if taped:
            return encode(work, cfg, tokens[idx], "rendered_text")
        return Tensor(encode(work, cfg, tokens[idx], "rendered_text").data)

    for step in range(head_cfg.steps):
        idx = rng.integers(0, len(train_idx), size=min(head_cfg.batch_size, len(train_idx)))
        batch = train_idx[idx]
        with Tape() as tape:
            out = _head_forward(head_cfg.kind, head, features(batch, taped=True))
            if regression:
                err = ad.sub(ad.reshape(out, (-1,)), Tensor(targets[batch]))
                loss = ad.tmean(ad.mul(err, err))
            else:
                loss = ad.tmean(ad.cross_entropy_rows(out, targets[batch]))
        raw = backward(tape, loss)
        grads = {k: grad_of(raw, t) for k, t in trainable.items() if id(t) in raw}
        lr = cosine_warmup_lr(step, head_cfg.steps, head_cfg.lr, head_cfg.warmup)
        opt.step(trainable, grads, lr, mults)
    out = _head_forward(head_cfg.kind, head, features(test_idx, taped=False)).data
    if regression:
        value = spearman_corr(out[:, 0], targets[test_idx])
    else:
        preds = out.argmax(axis=1)
        y = targets[test_idx]
        if metric == "accuracy":
            value = accuracy_score(preds, y)
        elif metric == "f1":
            value = f1_binary(preds, y)
        else:
            value = matthews_corr(preds, y)
    return MetricsRecord(task=task_name, kind=metric, value=float(value))


# --------------------------------------------------- typographic probe

@dataclass
class TypoAttackResult:
    clean_accuracy: float
    attacked_accuracy: float
    drop: float
    position: str


def typographic_attack_eval(
    bundle: EncoderBundle,
    images,
    true_labels,
    class_texts: list[str],
    confounder_texts: list[str],
    position: str = "top",
) -> TypoAttackResult:
    """Stamp an incorrect label word onto each image and measure the
    zero-shot accuracy drop. Confounders must differ from each image's
    true class text."""
    true_labels = np.asarray(true_labels)
    if len(confounder_texts) != len(images):
        raise DataError("one confounder per image required")
    for i, conf in enumerate(confounder_texts):
        if conf == class_texts[true_labels[i]]:
            raise DataError(f"confounder equals true label for image {i}")
    clean_embs = bundle.embed_images(np.asarray(images))
    class_embs = bundle.embed_texts(class_texts)
    _, clean_acc = zero_shot_from_embeddings(clean_embs, class_embs, true_labels)
    attacked = np.stack(
        [
            overlay_text(
                RenderedImage(np.asarray(img), None, None), conf, bundle.render_cfg, bundle.table, position
            ).pixels
            for img, conf in zip(images, confounder_texts)
        ]
    )
    attacked_embs = bundle.embed_images(attacked)
    _, attacked_acc = zero_shot_from_embeddings(attacked_embs, class_embs, true_labels)
    return TypoAttackResult(
        clean_accuracy=clean_acc,
        attacked_accuracy=attacked_acc,
        drop=clean_acc - attacked_acc,
        position=position,
    )
