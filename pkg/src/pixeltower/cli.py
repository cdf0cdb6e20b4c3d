"""Command-line entry point.

Subcommands: render, train, embed, eval, tokstats, analyze, selfcheck.
Every run takes --out, writes its resolved configuration there, and
derives all randomness from --seed. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import analysis, bpe
from .config import RunConfig
from .container import load_container, save_container
from .datasets import load_bitext, load_corpus, load_image_text_tsv, load_task_tsv
from .encoder import EncoderConfig, EncoderParams, init_params
from .errors import DataError, PixeltowerError
from .evaluate import (
    EncoderBundle,
    MetricsRecord,
    TransferHeadConfig,
    VqaFinetuneConfig,
    few_shot_linear_probe,
    mlp_transfer,
    retrieval_recall,
    typographic_attack_eval,
    vqa_finetune,
    zero_shot_classify,
)
from .glyphs import builtin_font_path, load_glyph_table
from .render import (
    RenderConfig,
    RenderedImage,
    compose_question_image,
    read_pnm,
    render_sentence_pair,
    render_text,
    write_pnm,
)
from .synthetic import augmented_shape_batches, augmented_shape_pairs, make_shapes_dataset, make_vqa_dataset
from .training import (
    TrainConfig,
    image_text_pairs,
    mixed_batches,
    nsp_pairs,
    parallel_pairs,
    train,
)

MODALITY_CODES = {"image": 0, "rendered_text": 1, "tokenized_text": 2}
MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}


def _add_font(p):
    p.add_argument("--font", default=builtin_font_path(), help="path to a .hex font file")


def _add_out(p, required=True):
    p.add_argument("--out", required=required, help="output directory")


def _render_cfg(args, width=None, height=None, channels=1):
    return RenderConfig(
        width_px=width or args.width,
        height_px=height or args.height,
        channels=channels,
    )


def _load_bundle(args, batch_size=64):
    params = EncoderParams.load(args.checkpoint)
    cfg = params.cfg
    rcfg = RenderConfig(width_px=cfg.image_px, height_px=cfg.image_px, channels=cfg.channels)
    table = load_glyph_table(args.font)
    return EncoderBundle(params, rcfg, table, batch_size=batch_size)


def _write_metrics(out_dir, records):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "metrics.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "kind", "value", "split", "config_digest"])
        for r in records:
            writer.writerow([r.task, r.kind, f"{r.value:.6f}", r.split, r.config_digest])
    return path


# ----------------------------------------------------------------- render

def cmd_render(args):
    table = load_glyph_table(args.font)
    cfg = _render_cfg(args, channels=args.channels)
    if args.text_file:
        with open(args.text_file, "r", encoding="utf-8") as fh:
            text = fh.read().rstrip("\n")
    else:
        text = args.text or ""
    if args.image:
        base = read_pnm(args.image)
        img = compose_question_image(base, text, cfg, table, position=args.position)
    elif args.text2 is not None:
        img = render_sentence_pair(text, args.text2, cfg, table)
    else:
        img = render_text(text, cfg, table)
    os.makedirs(args.out, exist_ok=True)
    ext = "pgm" if cfg.channels == 1 else "ppm"
    image_path = os.path.join(args.out, f"render.{ext}")
    write_pnm(image_path, img)
    with open(os.path.join(args.out, "render.json"), "w", encoding="utf-8") as fh:
        fh.write(img.meta.to_json() if img.meta else "{}")
    run = RunConfig(
        {
            "text": text,
            "width": cfg.width_px,
            "height": cfg.height_px,
            "position": args.position,
            "font": os.path.abspath(args.font),
        }
    )
    run.write_resolved(args.out)
    print(image_path)
    return 0


# ------------------------------------------------------------------ train

TRAIN_DEFAULTS = {
    "batch_size": 64,
    "base_steps": 2000,
    "text_fraction": 0.0,
    "peak_lr": 1e-3,
    "weight_decay": 1e-4,
    "grad_clip_norm": 1.0,
    "temperature_init": 10.0,
    "pos_embed_lr_mult": 1.0,
    "seed": 0,
    "image_px": 64,
    "patch_px": 8,
    "depth": 4,
    "width": 64,
    "heads": 4,
    "rep_dim": 64,
    "variant": "clippo",
    "dtype": "float32",
}


def cmd_train(args):
    overrides = {
        "text_fraction": args.p,
        "base_steps": args.steps,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "peak_lr": args.peak_lr,
        "pos_embed_lr_mult": args.pos_embed_lr_mult,
        "dtype": args.dtype,
    }
    run = RunConfig.resolve(TRAIN_DEFAULTS, args.config, overrides)
    v = run.values
    enc_cfg = EncoderConfig(
        patch_px=v["patch_px"],
        image_px=v["image_px"],
        depth=v["depth"],
        width=v["width"],
        heads=v["heads"],
        rep_dim=v["rep_dim"],
        variant=v["variant"],
        dtype=v["dtype"],
    )
    tr_cfg = TrainConfig(
        batch_size=v["batch_size"],
        base_steps=v["base_steps"],
        text_fraction=v["text_fraction"],
        peak_lr=v["peak_lr"],
        weight_decay=v["weight_decay"],
        grad_clip_norm=v["grad_clip_norm"],
        temperature_init=v["temperature_init"],
        pos_embed_lr_mult=v["pos_embed_lr_mult"],
        seed=v["seed"],
    )
    table = load_glyph_table(args.font)
    rcfg = RenderConfig(width_px=v["image_px"], height_px=v["image_px"], channels=1)
    shapes = None
    if args.images_tsv:
        data = load_image_text_tsv(args.images_tsv)
        images, captions = data.images, data.captions
        image_source = image_text_pairs(images, captions, rcfg, table, seed=v["seed"] + 1)
    elif args.synthetic:
        shapes = make_shapes_dataset(seed=v["seed"], image_px=v["image_px"])
        image_source = augmented_shape_pairs(shapes, rcfg, table, seed=v["seed"] + 1)
    else:
        raise DataError("train needs --images-tsv or --synthetic")
    text_source = None
    if v["text_fraction"] > 0:
        if args.corpus:
            text_source = nsp_pairs(load_corpus(args.corpus), rcfg, table, seed=v["seed"] + 2)
        elif args.bitext:
            pairs = load_bitext(args.bitext)

            def cycled():
                while True:
                    yield from parallel_pairs(pairs, rcfg, table)

            text_source = cycled()
        else:
            raise DataError("text_fraction > 0 needs --corpus or --bitext")
    if shapes is not None and v["text_fraction"] == 0:
        # Dedicated batcher: fresh draws, no duplicate pairs per batch.
        batches = augmented_shape_batches(shapes, rcfg, table, v["batch_size"], seed=v["seed"] + 3)
    else:
        batches = mixed_batches(
            image_source, text_source, v["text_fraction"], v["batch_size"], seed=v["seed"] + 3
        )
    result = train(enc_cfg, tr_cfg, batches, out_dir=args.out)
    run.write_resolved(args.out)
    print(result.checkpoint_path)
    return 0


# ------------------------------------------------------------------ embed

def cmd_embed(args):
    bundle = _load_bundle(args)
    rows = []
    with open(args.manifest, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            rows.append((line_no, line))
    embeddings = []
    modalities = []
    base = os.path.dirname(os.path.abspath(args.manifest))
    for line_no, line in rows:
        try:
            if line.startswith("text:"):
                emb = bundle.embed_texts([line[5:]])
                modalities.append("rendered_text")
            else:
                path = line if os.path.isabs(line) else os.path.join(base, line)
                emb = bundle.embed_images(read_pnm(path).pixels[None])
                modalities.append("image")
        except OSError as exc:
            raise DataError(f"manifest row {line_no}: {exc}") from exc
        embeddings.append(emb[0])
    dim = bundle.cfg.rep_dim
    stack = np.array(embeddings, dtype=np.float64).reshape(len(embeddings), dim if embeddings else 0)
    codes = np.array([MODALITY_CODES[m] for m in modalities], dtype=np.uint8)
    save_container(
        args.out,
        {"embeddings": stack, "modality": codes},
        meta={"modality_names": MODALITY_NAMES, "checkpoint": os.path.abspath(args.checkpoint)},
    )
    print(args.out + ".json")
    return 0


def _load_embeddings(base):
    tensors, meta = load_container(base)
    embs = tensors["embeddings"]
    codes = tensors.get("modality")
    modalities = [MODALITY_NAMES.get(int(c), "image") for c in codes] if codes is not None else []
    return embs, modalities


# ------------------------------------------------------------------- eval

def _synthetic_eval_data(args, bundle):
    shapes = make_shapes_dataset(seed=args.data_seed, image_px=bundle.cfg.image_px)
    return shapes


def cmd_eval(args):
    bundle = _load_bundle(args)
    records = []
    digest = RunConfig(
        {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    ).digest[:16]
    if args.mode == "zeroshot":
        shapes = _synthetic_eval_data(args, bundle)
        embs = bundle.embed_images(shapes.heldout_images)
        _, acc = zero_shot_classify(
            embs, shapes.prompts, bundle, labels=shapes.heldout_labels,
            prompt_template=args.prompt_template,
        )
        records.append(MetricsRecord("zeroshot_shapes", "accuracy", acc, "heldout", digest))
    elif args.mode == "retrieval":
        if args.images_tsv:
            data = load_image_text_tsv(args.images_tsv)
            images, captions = data.images, data.captions
        else:
            shapes = _synthetic_eval_data(args, bundle)
            images, captions = shapes.train.images, shapes.train.captions
        left = bundle.embed_images(images)
        right = bundle.embed_texts(captions)
        res = retrieval_recall(left, right, args.k)
        records.append(MetricsRecord("retrieval_image_to_text", "recall_at_k", res.left_to_right, "train", digest))
        records.append(MetricsRecord("retrieval_text_to_image", "recall_at_k", res.right_to_left, "train", digest))
    elif args.mode == "probe":
        shapes = _synthetic_eval_data(args, bundle)
        train_embs = bundle.embed_images(shapes.train.images)
        test_embs = bundle.embed_images(shapes.heldout_images)
        acc = few_shot_linear_probe(
            train_embs, shapes.train_labels, test_embs, shapes.heldout_labels,
            shots=args.shots, seed=args.seed,
        )
        records.append(MetricsRecord(f"probe_{args.shots}shot", "accuracy", acc, "heldout", digest))
    elif args.mode == "vqa":
        vqa_train = make_vqa_dataset(args.vqa_train_n, seed=args.data_seed, image_px=bundle.cfg.image_px)
        vqa_test = make_vqa_dataset(args.vqa_test_n, seed=args.data_seed + 1, image_px=bundle.cfg.image_px)
        ft = VqaFinetuneConfig(
            steps=args.steps,
            batch_size=args.batch_size,
            lr_grid=tuple(float(x) for x in args.lr_grid.split(",")),
            position=args.position,
            pos_embed_lr_mult=args.pos_embed_lr_mult,
            seed=args.seed,
        )
        res = vqa_finetune(
            bundle.params,
            vqa_train.images, vqa_train.questions, vqa_train.answer_ids,
            vqa_test.images, vqa_test.questions, vqa_test.answer_ids,
            n_answers=len(vqa_train.answers),
            render_cfg=bundle.render_cfg, table=bundle.table, ft=ft,
        )
        records.append(MetricsRecord(f"vqa_{args.position}", "accuracy", res.accuracy, "test", digest))
    elif args.mode == "transfer":
        fields = 3 if args.pairs else 2
        rows = load_task_tsv(args.task_file, fields)
        if args.metric == "spearman":
            rows = [(*r[:-1], float(r[-1])) for r in rows]
        else:
            rows = [(*r[:-1], int(r[-1])) for r in rows]
        head_cfg = TransferHeadConfig(hidden=args.hidden, steps=args.steps, seed=args.seed)
        rec = mlp_transfer(bundle, rows, args.metric, head_cfg, task_name=os.path.basename(args.task_file))
        rec.config_digest = digest
        records.append(rec)
    elif args.mode == "typo":
        shapes = _synthetic_eval_data(args, bundle)
        rng = np.random.default_rng(args.seed)
        labels = shapes.heldout_labels
        confounders = []
        for lab in labels:
            other = int(rng.integers(len(shapes.prompts) - 1))
            if other >= lab:
                other += 1
            confounders.append(shapes.prompts[other])
        res = typographic_attack_eval(
            bundle, shapes.heldout_images, labels, shapes.prompts, confounders, position=args.position
        )
        records.append(MetricsRecord("typo_clean", "accuracy", res.clean_accuracy, "heldout", digest))
        records.append(MetricsRecord(f"typo_attacked_{args.position}", "accuracy", res.attacked_accuracy, "heldout", digest))
    path = _write_metrics(args.out, records)
    for r in records:
        print(f"{r.task},{r.kind},{r.value:.4f}")
    print(path)
    return 0


# --------------------------------------------------------------- tokstats

def cmd_tokstats(args):
    table = load_glyph_table(args.font)
    rcfg = RenderConfig(width_px=args.width, height_px=args.height)
    corpora = {}
    for name in sorted(os.listdir(args.corpus_dir)):
        if not name.endswith(".txt"):
            continue
        lang = name[:-4]
        with open(os.path.join(args.corpus_dir, name), "r", encoding="utf-8") as fh:
            sentences = [line.rstrip("\n") for line in fh if line.strip()]
        corpora[lang] = sentences
    if not corpora:
        raise DataError(f"no .txt corpora under {args.corpus_dir}")
    vocabs = {}
    for spec_str in args.vocab or []:
        name, _, path = spec_str.partition("=")
        if not path:
            raise DataError(f"--vocab wants name=path, got {spec_str!r}")
        with open(path, "r", encoding="utf-8") as fh:
            vocabs[name] = bpe.Vocab.from_json(fh.read())
    if args.train_vocab:
        joined = "\n".join("\n".join(s) for s in corpora.values())
        vocabs[f"bpe{args.train_vocab}"] = bpe.bpe_train(joined, args.train_vocab)
    external = {}
    for spec_str in args.external_lengths or []:
        parts = spec_str.split(":", 2)
        if len(parts) != 3:
            raise DataError(f"--external-lengths wants name:lang:path, got {spec_str!r}")
        name, lang, path = parts
        with open(path, "r", encoding="utf-8") as fh:
            lengths = [int(line) for line in fh if line.strip()]
        external.setdefault(name, {})[lang] = lengths
    report = bpe.efficiency_report(
        corpora, vocabs, rcfg, table,
        sample_n=args.sample_n, external_lengths=external, seed=args.seed,
    )
    os.makedirs(os.path.dirname(os.path.abspath(args.out_file)), exist_ok=True)
    with open(args.out_file, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    for row in report.rows:
        print(f"{row.language},{row.tokenizer},shorter={row.shorter_fraction:.3f},verdict={row.verdict}")
    return 0


# ---------------------------------------------------------------- analyze

def cmd_analyze(args):
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "patchpca":
        params = EncoderParams.load(args.checkpoint)
        key = "embed/patch_kernel" if "embed/patch_kernel" in params else "img/embed/patch_kernel"
        kernel = params[key].data
        images, spectrum = analysis.patch_kernel_pca(
            kernel, params.cfg.patch_px, params.cfg.channels, components=args.components
        )
        np.savetxt(os.path.join(args.out, "spectrum.csv"), spectrum, delimiter=",")
        # One P5 grid: components tiled horizontally, normalized per component.
        tiles = []
        for comp in images:
            span = np.abs(comp).max() or 1.0
            tiles.append(comp[:, :, 0] / span)
        grid = np.concatenate(tiles, axis=1)[:, :, None]
        write_pnm(os.path.join(args.out, "components.pgm"), RenderedImage(grid, None, None))
        print(os.path.join(args.out, "spectrum.csv"))
        return 0
    embs, modalities = _load_embeddings(args.embeddings)
    img = embs[[i for i, m in enumerate(modalities) if m == "image"]]
    txt = embs[[i for i, m in enumerate(modalities) if m != "image"]]
    if args.mode == "gap":
        gap = analysis.modality_gap(img, txt)
        with open(os.path.join(args.out, "gap.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"{gap}\n")
        print(f"modality_gap {gap:.6f}")
    elif args.mode == "pca":
        coords, ratios = analysis.pca_project(embs, components=args.components)
        header = ",".join(f"pc{i}" for i in range(coords.shape[1]))
        np.savetxt(os.path.join(args.out, "coords.csv"), coords, delimiter=",", header=header)
        np.savetxt(os.path.join(args.out, "variance_ratio.csv"), ratios, delimiter=",")
        print(os.path.join(args.out, "coords.csv"))
    elif args.mode == "hist":
        counts, edges = analysis.pairwise_distance_hist(img, txt, bins=args.bins)
        rows = np.column_stack([edges[:-1], edges[1:], counts])
        np.savetxt(
            os.path.join(args.out, "hist.csv"), rows, delimiter=",", header="lo,hi,count"
        )
        print(os.path.join(args.out, "hist.csv"))
    elif args.mode == "cka":
        a, _ = _load_embeddings(args.embeddings)
        b, _ = _load_embeddings(args.embeddings_b)
        value = analysis.linear_cka(a, b)
        with open(os.path.join(args.out, "cka.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"{value}\n")
        print(f"linear_cka {value:.6f}")
    return 0


# -------------------------------------------------------------- selfcheck

def cmd_selfcheck(args):
    import math

    from . import autodiff as ad
    from .autodiff import Tensor
    from .encoder import encode
    from .training import contrastive_loss

    table = load_glyph_table(args.font)
    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        if not ok:
            failures.append(name)

    cfg = RenderConfig(width_px=224, height_px=224)
    a = render_text("selfcheck determinism", cfg, table)
    b = render_text("selfcheck determinism", cfg, table)
    check("renderer determinism", a.pixels.tobytes() == b.pixels.tobytes())
    values = set(np.unique(a.pixels))
    check("renderer two-valued", values <= {cfg.background_value, cfg.foreground_value})
    from .encoder import patchify as _patchify

    enc224 = EncoderConfig(patch_px=16, image_px=224)
    check("224px render is 196 patches", _patchify(a.pixels, enc224).shape[1] == 196)

    enc = EncoderConfig(patch_px=4, image_px=8, depth=1, width=8, heads=2, mlp_ratio=2, rep_dim=6)
    params = init_params(enc, seed=0)
    rng = np.random.default_rng(0)
    left = rng.uniform(-1, 1, (2, 8, 8, 1))
    right = rng.uniform(-1, 1, (2, 8, 8, 1))

    def loss_fn():
        le = encode(params, enc, left, "image")
        re = encode(params, enc, right, "rendered_text")
        return contrastive_loss(le, re, params.temperature()).loss

    err = ad.check_gradients(loss_fn, params.tensors, eps=1e-5, sample_per_tensor=3, seed=1)
    check(f"gradient check (max rel err {err:.2e})", err < 1e-3)

    e = np.array([[1.0, 0.0]])
    check("loss N=1 is zero", abs(float(contrastive_loss(e, e, 10.0).loss.data)) < 1e-12)
    rows = np.tile(np.array([[0.6, 0.8]]), (4, 1))
    check(
        "loss identical rows is log N",
        abs(float(contrastive_loss(rows, rows, 5.0).loss.data) - math.log(4)) < 1e-9,
    )
    x = rng.standard_normal((5, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.standard_normal((5, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    sym = abs(
        float(contrastive_loss(x, y, 10.0).loss.data) - float(contrastive_loss(y, x, 10.0).loss.data)
    )
    check("loss symmetry", sym < 1e-12)
    return 1 if failures else 0


# ------------------------------------------------------------------ parser

def build_parser():
    parser = argparse.ArgumentParser(prog="pixeltower", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("render", help="rasterize text (optionally over an image)")
    p.add_argument("--text")
    p.add_argument("--text-file")
    p.add_argument("--text2", help="second sentence; renders a [SEP] pair")
    p.add_argument("--image", help="natural image (P5/P6) for question composition")
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--channels", type=int, default=1, choices=(1, 3))
    p.add_argument("--position", default="top", choices=("top", "middle", "bottom"))
    _add_font(p)
    _add_out(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="contrastive training")
    p.add_argument("--config")
    p.add_argument("--p", type=float, default=None, help="text/text fraction")
    p.add_argument("--steps", type=int, default=None, help="base steps")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--peak-lr", type=float, default=None)
    p.add_argument("--pos-embed-lr-mult", type=float, default=None)
    p.add_argument("--dtype", default=None, choices=("float32", "float64"))
    p.add_argument("--synthetic", action="store_true", help="use the generated shapes dataset")
    p.add_argument("--images-tsv")
    p.add_argument("--corpus")
    p.add_argument("--bitext")
    _add_font(p)
    _add_out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a manifest of images and text: lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    _add_font(p)
    p.add_argument("--out", required=True, help="output container base path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluation protocols")
    p.add_argument("mode", choices=("zeroshot", "retrieval", "probe", "vqa", "transfer", "typo"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=100)
    p.add_argument("--images-tsv")
    p.add_argument("--prompt-template")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--shots", type=int, default=10)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr-grid", default="0.03")
    p.add_argument("--position", default="top", choices=("top", "middle", "bottom"))
    p.add_argument("--pos-embed-lr-mult", type=float, default=1.0)
    p.add_argument("--vqa-train-n", type=int, default=400)
    p.add_argument("--vqa-test-n", type=int, default=200)
    p.add_argument("--task-file")
    p.add_argument("--pairs", action="store_true")
    p.add_argument("--metric", default="accuracy", choices=("accuracy", "f1", "matthews", "spearman"))
    p.add_argument("--hidden", type=int, default=768)
    _add_font(p)
    _add_out(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tokstats", help="visual vs subword sequence lengths")
    p.add_argument("--corpus-dir", required=True, help="directory of <lang>.txt files")
    p.add_argument("--vocab", action="append", help="name=vocab.json (repeatable)")
    p.add_argument("--train-vocab", type=int, help="train a BPE vocab of this size on the corpora")
    p.add_argument("--external-lengths", action="append", help="name:lang:path (repeatable)")
    p.add_argument("--sample-n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--height", type=int, default=224)
    _add_font(p)
    p.add_argument("--out", dest="out_file", required=True, help="report CSV path")
    p.set_defaults(func=cmd_tokstats)

    p = sub.add_parser("analyze", help="representation analyses")
    p.add_argument("mode", choices=("gap", "pca", "hist", "cka", "patchpca"))
    p.add_argument("--embeddings", help="embedding container base path")
    p.add_argument("--embeddings-b", help="second container (cka)")
    p.add_argument("--checkpoint", help="checkpoint base (patchpca)")
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--bins", type=int, default=50)
    _add_out(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selfcheck", help="run the built-in invariant suite")
    _add_font(p)
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if not getattr(args, "command", None):
        parser.print_help()
        return 2
    if getattr(args, "command", None) == "analyze":
        if args.components is None:
            args.components = 30 if args.mode == "patchpca" else 2
        if args.mode == "patchpca" and not args.checkpoint:
            print("analyze patchpca needs --checkpoint", file=sys.stderr)
            return 2
        if args.mode in ("gap", "pca", "hist") and not args.embeddings:
            print(f"analyze {args.mode} needs --embeddings", file=sys.stderr)
            return 2
        if args.mode == "cka" and (not args.embeddings or not args.embeddings_b):
            print("analyze cka needs --embeddings and --embeddings-b", file=sys.stderr)
            return 2
    if getattr(args, "command", None) == "eval":
        if args.mode == "transfer" and not args.task_file:
            print("eval transfer needs --task-file", file=sys.stderr)
            return 2
    try:
        return args.func(args) or 0
    except PixeltowerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
