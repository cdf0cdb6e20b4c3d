import numpy as np
import pytest

from pixeltower import autodiff as ad
from pixeltower.autodiff import Tape, Tensor, backward, grad_of
from pixeltower.encoder import EncoderConfig, encode, init_params, resize_positional_embeddings
from pixeltower.errors import ConfigError
from pixeltower.training import combine_worker_grads


def test_resize_positional_embeddings_shapes():
    cfg = EncoderConfig(patch_px=4, image_px=8, depth=1, width=8, heads=2, mlp_ratio=2, rep_dim=4)
    params = init_params(cfg, seed=0)
    bigger = resize_positional_embeddings(params, 16)
    assert bigger.cfg.image_px == 16
    assert bigger["pos"].data.shape == (16, 8)  # 4x4 patch grid
    # Non-positional weights are carried over unchanged.
    assert np.array_equal(bigger["proj"].data, params["proj"].data)
    # The adapted model runs at the new resolution.
    x = np.random.default_rng(1).uniform(-1, 1, (2, 16, 16, 1))
    emb = encode(bigger, bigger.cfg, x, "image").data
    assert emb.shape == (2, 4)


def test_resize_identity_when_size_unchanged():
    cfg = EncoderConfig(patch_px=4, image_px=8, depth=1, width=8, heads=2, mlp_ratio=2, rep_dim=4)
    params = init_params(cfg, seed=2)
    same = resize_positional_embeddings(params, 8)
    assert np.allclose(same["pos"].data, params["pos"].data)


def test_resize_rejects_indivisible():
    cfg = EncoderConfig(patch_px=4, image_px=8, depth=1, width=8, heads=2, mlp_ratio=2, rep_dim=4)
    params = init_params(cfg, seed=0)
    with pytest.raises(ConfigError):
        resize_positional_embeddings(params, 10)


def test_combine_worker_grads_order_and_sum():
    a = {"w": np.array([1.0, 2.0]), "b": np.array([1.0])}
    b = {"w": np.array([10.0, 20.0])}
    total = combine_worker_grads([a, b])
    assert np.array_equal(total["w"], [11.0, 22.0])
    assert np.array_equal(total["b"], [1.0])
    # Inputs are not mutated.
    assert np.array_equal(a["w"], [1.0, 2.0])


def test_worker_shards_equal_single_tape():
    """Two half-batch tapes summed reproduce the full-batch gradient of a
    sum-structured loss (data-parallel contract)."""
    rng = np.random.default_rng(3)
    w = Tensor(rng.standard_normal((4, 3)), trainable=True)
    x = rng.standard_normal((6, 4))

    def shard_loss(rows):
        return ad.tsum(ad.mul(ad.matmul(Tensor(rows), w), ad.matmul(Tensor(rows), w)))

    with Tape() as tape:
        full = shard_loss(x)
    g_full = grad_of(backward(tape, full), w)

    shards = []
    for rows in (x[:3], x[3:]):
        with Tape() as tape:
            loss = shard_loss(rows)
        shards.append({"w": grad_of(backward(tape, loss), w)})
    combined = combine_worker_grads(shards)
    assert np.allclose(combined["w"], g_full, atol=1e-12)
