"""Glyph attention head: projection size, losses, pooling."""

import numpy as np
import pytest

from siga import tensor as T
from siga.config import TrainConfig
from siga.errors import ContractError
from siga.glan import (dice_loss, glan_loss, glyph_head_forward,
                       pool_glyph_features, projection_param_count,
                       union_ce_loss)
from siga.model import init_params
from siga.tensor import Tensor, grad_check


def test_projection_count_formula():
    assert projection_param_count(256, 26) == 6912


def test_projection_sized_by_geometry_not_vocabulary():
    # the classifier grows with the symbol set; the glyph projection does not
    cfg = TrainConfig()
    params = init_params(cfg, T.rng(0))
    from siga.decoder import VOCAB
    assert params["dec.cls.w"].data.shape[1] == VOCAB
    assert params["glan.proj.w"].data.size == cfg.c0 * (1 + cfg.m_chars)
    assert projection_param_count(32, 8) == 32 * 9


def test_projection_weight_matches_formula():
    cfg = TrainConfig()
    params = init_params(cfg, T.rng(0))
    w = params["glan.proj.w"]
    assert w.data.size == projection_param_count(cfg.c0, cfg.m_chars)


def _head_inputs(b=2, c0=4, h=4, w=8, m=3, seed=5):
    gen = T.rng(seed)
    o0 = Tensor(gen.normal(size=(b, c0, h, w)))
    params = {}
    for pre in ("glan.g1.a", "glan.g1.b", "glan.feat.a", "glan.feat.b"):
        params[pre + ".w"] = Tensor(gen.normal(0, 0.3, size=(c0, c0, 3, 3)),
                                    requires_grad=True)
        params[pre + ".gamma"] = Tensor(np.ones((1, c0, 1, 1)), requires_grad=True)
        params[pre + ".beta"] = Tensor(np.zeros((1, c0, 1, 1)), requires_grad=True)
    params["glan.proj.w"] = Tensor(gen.normal(0, 0.3, size=(1 + m, c0)),
                                   requires_grad=True)
    return o0, params


def test_head_output_shapes_and_simplex():
    o0, params = _head_inputs()
    s_gam, feats = glyph_head_forward(o0, params)
    assert s_gam.shape == (2, 4, 4, 8)
    assert feats.shape == (2, 4, 4, 8)
    np.testing.assert_allclose(s_gam.data.sum(axis=1), 1.0, atol=1e-12)
    assert s_gam.data.min() >= 0.0
    T.tape().clear()


def test_dice_perfect_match_near_zero():
    p = np.zeros((1, 3, 2, 4))
    p[0, 1, :, :2] = 1.0
    p[0, 2, :, 2:] = 1.0
    t = p.copy()
    val = dice_loss(Tensor(p), Tensor(t), [2]).item()
    assert val == pytest.approx(0.0, abs=1e-6)


def test_dice_disjoint_is_one():
    p = np.zeros((1, 2, 2, 4))
    t = np.zeros((1, 2, 2, 4))
    p[0, 1, :, :2] = 1.0
    t[0, 1, :, 2:] = 1.0
    assert dice_loss(Tensor(p), Tensor(t), [1]).item() == pytest.approx(1.0, abs=1e-6)


def test_dice_hand_value_half_overlap():
    # pred covers 4 pixels, target 4, overlap 2: 1 - 2*2/(4+4) = 0.5
    p = np.zeros((1, 2, 2, 4))
    t = np.zeros((1, 2, 2, 4))
    p[0, 1, :, :2] = 1.0
    t[0, 1, :, 1:3] = 1.0
    assert dice_loss(Tensor(p), Tensor(t), [1]).item() == pytest.approx(0.5, abs=1e-6)


def test_dice_only_counts_present_channels():
    gen = T.rng(3)
    p = gen.uniform(0.01, 0.99, size=(1, 4, 2, 4))
    t = (gen.uniform(size=(1, 4, 2, 4)) > 0.5).astype(float)
    short = dice_loss(Tensor(p), Tensor(t), [1]).item()
    t2 = t.copy()
    t2[0, 2:] = 0.3                          # junk beyond length 1
    assert dice_loss(Tensor(p), Tensor(t2), [1]).item() == pytest.approx(short)


def test_dice_rejects_excess_target_channels():
    with pytest.raises(ContractError):
        dice_loss(Tensor(np.zeros((1, 2, 2, 2))), Tensor(np.zeros((1, 4, 2, 2))), [1])


def test_dice_rejects_bad_length():
    p = Tensor(np.zeros((1, 3, 2, 2)))
    with pytest.raises(ContractError):
        dice_loss(p, p, [0])
    with pytest.raises(ContractError):
        dice_loss(p, p, [3])


def test_union_ce_hand_value():
    # one pixel, union prob 0.8 vs target 1: -ln(0.8)
    s_gam = Tensor(np.array([0.2, 0.5, 0.3]).reshape(1, 3, 1, 1))
    s_gt = np.zeros((1, 3, 1, 1))
    s_gt[0, 0] = 0.0                         # background 0 => foreground target 1
    val = union_ce_loss(s_gam, Tensor(s_gt)).item()
    assert val == pytest.approx(-np.log(0.8), abs=1e-9)


def test_union_ce_matched_masses_small():
    s_gam = Tensor(np.array([0.01, 0.49, 0.50]).reshape(1, 3, 1, 1))
    s_gt = np.zeros((1, 3, 1, 1))
    s_gt[0, 0] = 0.01                        # target foreground 0.99
    val = union_ce_loss(s_gam, Tensor(s_gt)).item()
    bce = -(0.99 * np.log(0.99) + 0.01 * np.log(0.01))
    assert val == pytest.approx(bce, abs=1e-9)


def test_glan_loss_is_sum_of_parts():
    o0, params = _head_inputs()
    s_gam, _ = glyph_head_forward(o0, params)
    gen = T.rng(11)
    s_gt = (gen.uniform(size=(2, 4, 4, 8)) > 0.5).astype(float)
    total, parts = glan_loss(s_gam, Tensor(s_gt), [3, 2])
    assert total.item() == pytest.approx(parts["dice"].item() + parts["union_ce"].item())
    T.tape().clear()


def test_pool_uniform_attention_is_spatial_mean():
    gen = T.rng(7)
    feats = Tensor(gen.normal(size=(2, 5, 4, 8)))
    s_gam = np.zeros((2, 3, 4, 8))
    s_gam[:, 1] = 1.0 / 32                  # slot 0 spread evenly, others empty
    pooled = pool_glyph_features(feats, Tensor(s_gam))
    assert pooled.shape == (2, 2, 5)
    want = feats.data.mean(axis=(2, 3))
    np.testing.assert_allclose(pooled.data[:, 0], want, rtol=1e-6)


def test_pool_one_hot_attention_picks_pixel():
    gen = T.rng(8)
    feats = Tensor(gen.normal(size=(1, 3, 2, 4)))
    s_gam = np.zeros((1, 2, 2, 4))
    s_gam[0, 1, 1, 2] = 1.0
    pooled = pool_glyph_features(feats, Tensor(s_gam))
    np.testing.assert_allclose(pooled.data[0, 0], feats.data[0, :, 1, 2], rtol=1e-6)


def test_pool_empty_slot_stays_finite_and_small():
    feats = Tensor(np.ones((1, 3, 2, 4)))
    s_gam = np.zeros((1, 2, 2, 4))          # slot has zero mass
    pooled = pool_glyph_features(feats, Tensor(s_gam))
    assert np.isfinite(pooled.data).all()
    assert np.abs(pooled.data).max() < 1e-3


def test_glan_loss_gradient_matches_fd():
    o0, params = _head_inputs(b=1, c0=3, h=4, w=6, m=2, seed=9)
    gen = T.rng(10)
    s_gt = np.zeros((1, 3, 4, 6))
    s_gt[0, 0] = (gen.uniform(size=(4, 6)) > 0.6).astype(float)
    s_gt[0, 1] = (1.0 - s_gt[0, 0]) * (np.arange(6) < 3)[None, :]
    s_gt[0, 2] = (1.0 - s_gt[0, 0]) * (np.arange(6) >= 3)[None, :]
    tgt = Tensor(s_gt)

    def f(x):
        s_gam, _ = glyph_head_forward(x, params)
        total, _ = glan_loss(s_gam, tgt, [2])
        return total

    gap = grad_check(f, o0)
    T.tape().clear()
    assert gap <= 1e-4


def test_pooling_gradient_matches_fd():
    o0, params = _head_inputs(b=1, c0=3, h=4, w=6, m=2, seed=12)

    def f(x):
        s_gam, feats = glyph_head_forward(x, params)
        pooled = pool_glyph_features(feats, s_gam)
        return T.tensor_mean(T.mul(pooled, pooled))

    gap = grad_check(f, o0)
    T.tape().clear()
    assert gap <= 1e-4
