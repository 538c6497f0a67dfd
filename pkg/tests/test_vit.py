import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vitmat import tensor as T
from vitmat.rng import RngState
from vitmat.tensor import Tensor
from vitmat.train import cross_entropy_loss
from vitmat.vit import (ConfigurationError, ViTConfig, ViTParams, embed, encoder_block, forward,
                        init_params, mhsa, param_shapes, patchify, predict)


def block_params(d, hidden, seed=0, scale=0.3):
    r = RngState(seed)
    names = {"ln1.gamma": (d,), "ln1.beta": (d,), "ln2.gamma": (d,), "ln2.beta": (d,),
             "attn.wq": (d, d), "attn.bq": (d,), "attn.wk": (d, d), "attn.bk": (d,),
             "attn.wv": (d, d), "attn.bv": (d,), "attn.wo": (d, d), "attn.bo": (d,),
             "mlp.w1": (d, hidden), "mlp.b1": (hidden,), "mlp.w2": (hidden, d), "mlp.b2": (d,)}
    return {k: Tensor(r.normal(s) * scale + (1.0 if k.endswith("gamma") else 0.0)) for k, s in names.items()}


# -- config ----------------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ConfigurationError):
        ViTConfig(image_size=30, patch_size=8)
    with pytest.raises(ConfigurationError):
        ViTConfig(embed_dim=64, heads=5)
    with pytest.raises(ConfigurationError):
        ViTConfig(dropout_rate=1.0)
    base = ViTConfig()
    assert (base.num_patches, base.patch_dim, base.hidden_dim) == (196, 768, 3072)


def test_config_dict_round_trip():
    c = ViTConfig.tiny(4, class_names=("a", "b", "c", "d"))
    assert ViTConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ConfigurationError):
        ViTConfig.from_dict({**c.to_dict(), "bogus": 1})


def test_param_shapes_are_canonical():
    shapes = param_shapes(ViTConfig.tiny(3))
    assert shapes["block.1.attn.wq"] == (64, 64)
    assert shapes["block.0.mlp.w1"] == (64, 256)
    assert shapes["pos_embed"] == (17, 64)
    assert shapes["head.weight"] == (64, 3)
    assert len(shapes) == 4 + 16 * 2 + 4


# -- patchify / embed --------------------------------------------------------------

def test_patchify_default_shape():
    assert patchify(np.zeros((224, 224, 3)), 16).shape == (196, 768)


def test_patchify_tiny_shape():
    assert patchify(np.zeros((32, 32, 3)), 8).shape == (16, 192)


def test_patchify_constant():
    out = patchify(np.full((32, 32, 3), 0.25), 8)
    assert (out == 0.25).all()


def test_patchify_order():
    img = np.arange(8 * 8 * 3, dtype=np.float64).reshape(8, 8, 3)
    out = patchify(img, 4)
    # patch 1 is the top-right block; rows (r, c, channel) flattened
    assert np.array_equal(out[1], img[0:4, 4:8, :].reshape(-1))
    assert np.array_equal(out[2], img[4:8, 0:4, :].reshape(-1))


def test_patchify_not_divisible():
    with pytest.raises(ConfigurationError):
        patchify(np.zeros((30, 30, 3)), 8)


def _embed_params(n, pd, d, seed=0, zero_pos=False, zero_proj=False):
    r = RngState(seed)
    return {
        "patch_embed.weight": Tensor(np.zeros((pd, d)) if zero_proj else r.normal((pd, d))),
        "patch_embed.bias": Tensor(np.zeros(d) if zero_proj else r.normal(d)),
        "cls_token": Tensor(r.normal((1, d))),
        "pos_embed": Tensor(np.zeros((n + 1, d)) if zero_pos else r.normal((n + 1, d))),
    }


def test_embed_zero_patches_gives_bias():
    p = _embed_params(4, 12, 6, zero_pos=True)
    out = embed(np.zeros((4, 12)), p).data
    assert np.array_equal(out[1:], np.tile(p["patch_embed.bias"].data, (4, 1)))
    assert np.array_equal(out[0], p["cls_token"].data[0])


def test_embed_zero_projection_gives_pos():
    p = _embed_params(4, 12, 6, zero_proj=True)
    out = embed(RngState(1).normal((4, 12)), p).data
    expected = p["pos_embed"].data.copy()
    expected[0] += p["cls_token"].data[0]
    assert np.array_equal(out, expected)


def test_embed_default_shape():
    p = _embed_params(196, 768, 8)
    assert embed(np.zeros((196, 768)), p).shape == (197, 8)


def test_embed_shape_mismatch():
    with pytest.raises(T.DimensionError):
        embed(np.zeros((5, 12)), _embed_params(4, 12, 6))


# -- attention --------------------------------------------------------------------

def test_mhsa_zero_qk_is_uniform():
    d = 8
    bp = block_params(d, 16, seed=3)
    bp["attn.wq"] = T.zeros((d, d))
    bp["attn.wk"] = T.zeros((d, d))
    bp["attn.bq"] = T.zeros(d)
    bp["attn.bk"] = T.zeros(d)
    x = Tensor(RngState(4).normal((5, d)))
    out, attn = mhsa(x, bp, heads=1, return_attention=True)
    assert np.allclose(attn, 1 / 5)
    v = x.data @ bp["attn.wv"].data + bp["attn.bv"].data
    expected = v.mean(0) @ bp["attn.wo"].data + bp["attn.bo"].data
    assert np.allclose(out.data, np.tile(expected, (5, 1)), atol=1e-12)


@given(st.integers(0, 2**32), st.sampled_from([1, 2, 4, 8]), st.integers(1, 12))
def test_attention_rows_sum_to_one(seed, heads, tokens):
    with T.precision("float64"):
        x = Tensor(RngState(seed).normal((tokens, 16)) * 3)
        _, attn = mhsa(x, block_params(16, 32, seed, scale=1.0), heads, return_attention=True)
    assert np.allclose(attn.sum(-1), 1.0, atol=1e-6)


def test_mhsa_matches_per_head_reference():
    with T.precision("float64"):
        d, h = 64, 4
        bp = block_params(d, 4 * d, seed=9, scale=0.2)
        x = RngState(10).normal((5, d))
        out = mhsa(Tensor(x), bp, h).data
    w = {k: v.data for k, v in bp.items()}
    q, k, v = (x @ w[f"attn.w{n}"] + w[f"attn.b{n}"] for n in "qkv")
    dk = d // h
    heads = []
    for i in range(h):
        sl = slice(i * dk, (i + 1) * dk)
        logits = q[:, sl] @ k[:, sl].T / math.sqrt(dk)
        e = np.exp(logits - logits.max(1, keepdims=True))
        heads.append((e / e.sum(1, keepdims=True)) @ v[:, sl])
    ref = np.concatenate(heads, axis=1) @ w["attn.wo"] + w["attn.bo"]
    assert np.abs(out - ref).max() < 1e-5


def test_mhsa_heads_must_divide():
    with pytest.raises(ConfigurationError):
        mhsa(Tensor(np.zeros((3, 10))), block_params(10, 20), heads=3)


# -- encoder block -----------------------------------------------------------------

def test_zero_block_is_identity():
    bp = {k: T.zeros(v.shape) for k, v in block_params(8, 16).items()}
    x = Tensor(RngState(2).normal((5, 8)))
    assert encoder_block(x, bp, 2).data.tobytes() == x.data.tobytes()


def test_block_shape_preserved():
    x = Tensor(RngState(2).normal((2, 7, 16)))
    assert encoder_block(x, block_params(16, 64), 4).shape == (2, 7, 16)


def test_block_input_gradient():
    with T.precision("float64"):
        bp = block_params(8, 16, seed=5)
        x = Tensor(RngState(6).normal((4, 8)))
        w = Tensor(RngState(7).normal((4, 8)))
        err = T.grad_check(lambda t: T.sum(T.mul(encoder_block(t, bp, 2), w)), x)
    assert err < 1e-4


# -- forward / init ----------------------------------------------------------------

def test_forward_logit_count_bmd():
    cfg = ViTConfig.tiny(11)
    p = init_params(cfg, RngState(0))
    assert forward(np.zeros((32, 32, 3), np.float32), p, cfg).shape == (11,)


def test_forward_batched_matches_single(tiny_config, tiny_params):
    x = RngState(3).normal((3, 32, 32, 3)).astype(np.float32)
    batch = forward(x, tiny_params, tiny_config).data
    for i in range(3):
        assert np.allclose(forward(x[i], tiny_params, tiny_config).data, batch[i], atol=1e-5)


def test_head_permutation_equivariance(tiny_config, tiny_params):
    x = RngState(3).normal((32, 32, 3)).astype(np.float32)
    base = forward(x, tiny_params, tiny_config).data
    perm = [2, 0, 1]
    p2 = tiny_params.copy()
    p2["head.weight"].data = p2["head.weight"].data[:, perm].copy()
    p2["head.bias"].data = p2["head.bias"].data[perm].copy()
    assert np.array_equal(forward(x, p2, tiny_config).data, base[perm])


def test_infer_deterministic(tiny_config, tiny_params):
    x = RngState(3).normal((32, 32, 3)).astype(np.float32)
    a = forward(x, tiny_params, tiny_config).data
    assert a.tobytes() == forward(x, tiny_params, tiny_config).data.tobytes()


def test_dropout_only_in_train_mode():
    cfg = ViTConfig.tiny(3, dropout_rate=0.5)
    p = init_params(cfg, RngState(0))
    x = RngState(3).normal((32, 32, 3)).astype(np.float32)
    infer = forward(x, p, cfg).data
    assert np.array_equal(infer, forward(x, p, cfg, mode="infer", rng=RngState(5)).data)
    train = forward(x, p, cfg, mode="train", rng=RngState(5)).data
    assert not np.array_equal(train, infer)
    assert np.array_equal(train, forward(x, p, cfg, mode="train", rng=RngState(5)).data)


def test_forward_reports_first_bad_array(tiny_config, tiny_params):
    arrays = dict(tiny_params)
    arrays["block.0.attn.wk"] = T.zeros((64, 32))
    with pytest.raises(ConfigurationError, match="block.0.attn.wk"):
        forward(np.zeros((32, 32, 3), np.float32), ViTParams(arrays), tiny_config)
    arrays["block.0.attn.wk"] = tiny_params["block.0.attn.wk"]
    del arrays["norm.beta"]
    with pytest.raises(ConfigurationError, match="norm.beta"):
        forward(np.zeros((32, 32, 3), np.float32), ViTParams(arrays), tiny_config)


def test_forward_rejects_wrong_image_size(tiny_config, tiny_params):
    with pytest.raises(ConfigurationError):
        forward(np.zeros((64, 64, 3), np.float32), tiny_params, tiny_config)


def test_predict_argmax(tiny_config, tiny_params):
    x = RngState(3).normal((5, 32, 32, 3)).astype(np.float32)
    logits = forward(x, tiny_params, tiny_config).data
    assert np.array_equal(predict(x, tiny_params, tiny_config, batch_size=2), logits.argmax(1))


def test_init_deterministic(tiny_config):
    a, b = init_params(tiny_config, RngState(1)), init_params(tiny_config, RngState(1))
    assert all(a[k].data.tobytes() == b[k].data.tobytes() for k in a)
    c = init_params(tiny_config, RngState(2))
    assert not np.array_equal(a["head.weight"].data, c["head.weight"].data)


def test_init_values(tiny_config, tiny_params):
    for name, t in tiny_params.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            assert (t.data == 1.0).all()
        elif leaf in ("beta", "bias") or leaf in ("bq", "bk", "bv", "bo", "b1", "b2"):
            assert (t.data == 0.0).all()
        else:
            assert t.data.std() > 0
    assert np.abs(tiny_params["block.0.attn.wq"].data).max() <= 2 * 0.02 / 0.8796256610342398 + 1e-7


def test_init_std_default_projection():
    cfg = ViTConfig(num_classes=11, depth=1)
    w = init_params(cfg, RngState(0))["patch_embed.weight"].data
    assert w.shape == (768, 768)
    assert abs(float(w.std()) - 0.02) < 0.002


def test_shape_chain_default():
    d = 8
    cfg = ViTConfig(embed_dim=d, depth=1, heads=2, num_classes=11)
    p = init_params(cfg, RngState(0))
    img = np.zeros((224, 224, 3), np.float32)
    patches = patchify(img, 16)
    assert patches.shape == (196, 768)
    x = embed(patches, p)
    assert x.shape == (197, d)
    assert encoder_block(x, p.block(0), cfg.heads).shape == (197, d)
    assert forward(img, p, cfg).shape == (11,)


def test_every_attention_row_sums_to_one(tiny_config, tiny_params):
    x = Tensor(patchify(RngState(1).normal((32, 32, 3)), 8))
    h = embed(x, tiny_params)
    for i in range(tiny_config.depth):
        bp = tiny_params.block(i)
        _, attn = mhsa(T.layer_norm(h, bp["ln1.gamma"], bp["ln1.beta"]), bp, tiny_config.heads,
                       return_attention=True)
        assert attn.shape == (4, 17, 17)
        assert np.allclose(attn.sum(-1), 1.0, atol=1e-6)
        h = encoder_block(h, bp, tiny_config.heads)


def test_end_to_end_gradient_sample():
    # a quick spot check; the full sweep is in the acceptance suite
    with T.precision("float64"):
        cfg = ViTConfig.tiny(3)
        p = init_params(cfg, RngState(0))
        x = RngState(1).normal((2, 32, 32, 3))
        y = np.array([0, 2])
        for name in ("head.weight", "block.1.mlp.w1", "pos_embed"):
            t = p[name]
            idx = RngState(len(name)).integers(t.data.size, 6)
            err = T.grad_check(lambda _: cross_entropy_loss(forward(x, p, cfg), y), t,
                               eps=1e-3, indices=idx.tolist(), stencil=4)
            assert err < 1e-4, name
