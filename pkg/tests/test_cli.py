import json
import os

import numpy as np
import pytest

from pixeltower.cli import main
from pixeltower.config import RunConfig, parse_config_file
from pixeltower.container import load_container, save_container
from pixeltower.errors import ConfigError, DataError


# --------------------------------------------------------------- container

def test_container_round_trip(tmp_path):
    tensors = {
        "a": np.arange(12, dtype=np.float64).reshape(3, 4),
        "b": np.arange(5, dtype=np.float32),
        "scalar": np.asarray(2.5),
        "codes": np.array([1, 2, 3], dtype=np.uint8),
    }
    base = tmp_path / "box"
    save_container(base, tensors, meta={"note": "hi"})
    back, meta = load_container(base)
    assert meta["note"] == "hi"
    for name, arr in tensors.items():
        assert back[name].dtype == arr.dtype
        assert back[name].shape == arr.shape
        assert np.array_equal(back[name], arr)


def test_container_manifest_is_json_with_offsets(tmp_path):
    base = tmp_path / "box"
    save_container(base, {"x": np.zeros(2), "y": np.ones(3, dtype=np.float32)})
    manifest = json.load(open(str(base) + ".json"))
    entries = {e["name"]: e for e in manifest["tensors"]}
    assert entries["x"]["offset"] == 0
    assert entries["x"]["nbytes"] == 16
    assert entries["y"]["offset"] == 16
    assert os.path.getsize(str(base) + ".bin") == 16 + 12


def test_container_missing_file_raises(tmp_path):
    with pytest.raises(DataError):
        load_container(tmp_path / "absent")


# ------------------------------------------------------------------ config

def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text('alpha = 3\nbeta = 0.5  # comment\nname = "hello"\nflag = true\n')
    values = parse_config_file(path)
    assert values == {"alpha": 3, "beta": 0.5, "name": "hello", "flag": True}


def test_config_precedence_and_digest(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("alpha = 3\n")
    defaults = {"alpha": 1, "beta": 2}
    a = RunConfig.resolve(defaults, path, {"beta": None})
    assert a.values == {"alpha": 3, "beta": 2}
    b = RunConfig.resolve(defaults, path, {"beta": 7})
    assert b.values["beta"] == 7
    assert a.digest != b.digest
    assert a.digest == RunConfig.resolve(defaults, path, {}).digest


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mystery = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.resolve({"alpha": 1}, path, {})


def test_config_writes_resolved(tmp_path):
    run = RunConfig({"a": 1, "b": "x"})
    out = run.write_resolved(tmp_path)
    text = open(out).read()
    assert 'b = "x"' in text
    assert run.digest in text


# --------------------------------------------------------------------- cli

def test_cli_no_args_usage():
    assert main([]) == 2


def test_cli_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_cli_render_writes_artifacts(tmp_path):
    out = tmp_path / "render_out"
    code = main(["render", "--text", "hi", "--width", "64", "--height", "32", "--out", str(out)])
    assert code == 0
    assert (out / "render.pgm").exists()
    sidecar = json.load(open(out / "render.json"))
    assert sidecar["lines_used"] == 1
    assert not sidecar["truncated"]
    assert (out / "resolved_config.txt").exists()


def test_cli_render_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["render", "--text", "same text", "--out", str(out)]) == 0
    assert (a / "render.pgm").read_bytes() == (b / "render.pgm").read_bytes()


def test_cli_render_requires_out(capsys):
    assert main(["render", "--text", "hi"]) == 2


def _tiny_train(tmp_path, seed="0"):
    out = tmp_path / "run"
    code = main(
        [
            "train", "--synthetic", "--steps", "2", "--batch-size", "4", "--seed", seed,
            "--out", str(out),
            "--config", str(_tiny_cfg_file(tmp_path)),
        ]
    )
    assert code == 0
    return out


def _tiny_cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    if not path.exists():
        path.write_text(
            "image_px = 32\npatch_px = 8\ndepth = 1\nwidth = 8\nheads = 2\nrep_dim = 8\n"
        )
    return path


def test_cli_train_and_embed_and_analyze(tmp_path):
    run_dir = _tiny_train(tmp_path)
    assert (run_dir / "checkpoint.json").exists()
    assert (run_dir / "metrics.csv").exists()
    assert (run_dir / "resolved_config.txt").exists()

    manifest = tmp_path / "manifest.txt"
    img_dir = tmp_path
    from pixeltower.render import RenderConfig, render_text, write_pnm
    from pixeltower.glyphs import load_builtin_table

    img = render_text("x", RenderConfig(width_px=32, height_px=32), load_builtin_table())
    write_pnm(img_dir / "img.pgm", img)
    manifest.write_text("text:hello\ntext:world\nimg.pgm\n")
    emb_base = tmp_path / "embs"
    code = main(
        ["embed", "--checkpoint", str(run_dir / "checkpoint"), "--manifest", str(manifest), "--out", str(emb_base)]
    )
    assert code == 0
    tensors, meta = load_container(emb_base)
    assert tensors["embeddings"].shape == (3, 8)
    assert tensors["modality"].tolist() == [1, 1, 0]

    out2 = tmp_path / "embs2"
    code = main(
        ["embed", "--checkpoint", str(run_dir / "checkpoint"), "--manifest", str(manifest), "--out", str(out2)]
    )
    assert code == 0
    assert (tmp_path / "embs.bin").read_bytes() == (tmp_path / "embs2.bin").read_bytes()

    gap_out = tmp_path / "gap"
    assert main(["analyze", "gap", "--embeddings", str(emb_base), "--out", str(gap_out)]) == 0
    assert (gap_out / "gap.txt").exists()
    pca_out = tmp_path / "pca"
    assert main(["analyze", "pca", "--embeddings", str(emb_base), "--out", str(pca_out)]) == 0
    assert (pca_out / "coords.csv").exists()
    patch_out = tmp_path / "patch"
    assert (
        main(["analyze", "patchpca", "--checkpoint", str(run_dir / "checkpoint"), "--out", str(patch_out), "--components", "4"]) == 0
    )
    assert (patch_out / "components.pgm").exists()
    assert (patch_out / "spectrum.csv").exists()


def test_cli_train_rejects_missing_data(tmp_path):
    code = main(["train", "--steps", "1", "--out", str(tmp_path / "x")])
    assert code == 1  # domain error: no data source


def test_cli_embed_bad_manifest_row(tmp_path):
    run_dir = _tiny_train(tmp_path)
    manifest = tmp_path / "bad.txt"
    manifest.write_text("missing_image.pgm\n")
    code = main(
        ["embed", "--checkpoint", str(run_dir / "checkpoint"), "--manifest", str(manifest), "--out", str(tmp_path / "e")]
    )
    assert code == 1


def test_cli_tokstats(tmp_path):
    corpus_dir = tmp_path / "corpora"
    corpus_dir.mkdir()
    (corpus_dir / "aa.txt").write_text("hello world\nshort line\n")
    (corpus_dir / "bb.txt").write_text("αβγ δε\nζηθ\n")
    out_csv = tmp_path / "report.csv"
    code = main(
        ["tokstats", "--corpus-dir", str(corpus_dir), "--train-vocab", "280", "--out", str(out_csv)]
    )
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("language,tokenizer")
    assert len(lines) == 3  # two languages x one vocab


def test_cli_selfcheck():
    assert main(["selfcheck"]) == 0


def test_cli_eval_zeroshot_and_retrieval(tmp_path):
    run_dir = _tiny_train(tmp_path)
    out = tmp_path / "ev"
    code = main(
        ["eval", "retrieval", "--checkpoint", str(run_dir / "checkpoint"), "--k", "5", "--out", str(out)]
    )
    assert code == 0
    rows = (out / "metrics.csv").read_text().splitlines()
    assert rows[0] == "task,kind,value,split,config_digest"
    assert len(rows) == 3


def test_cli_eval_transfer(tmp_path):
    run_dir = _tiny_train(tmp_path)
    task = tmp_path / "task.tsv"
    task.write_text("yes yes\t1\nno\t0\n" * 6)
    out = tmp_path / "tr"
    code = main(
        [
            "eval", "transfer", "--checkpoint", str(run_dir / "checkpoint"),
            "--task-file", str(task), "--metric", "accuracy", "--hidden", "8",
            "--steps", "20", "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "metrics.csv").exists()
