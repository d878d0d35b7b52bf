"""Glyph attention network.

A small head over the full-resolution pyramid features that softly
assigns every pixel to one of 1+M channels (background plus one channel
per character slot) and extracts a parallel feature map for pooling.
Supervision comes from the glyph pseudo-label: an overlap (Dice) term
on the character channels that are actually present, and a union
cross-entropy tying all character channels together against the
foreground.  The channel projection is bias-free, so its parameter
count is exactly channels * (1 + M) and independent of vocabulary size.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .counters import COUNTERS
from .errors import ContractError
from .layers import conv_block
from .tensor import EPS, Tensor


def projection_param_count(channels: int, m_slots: int) -> int:
    """Size of the pixel-to-channel projection: channels * (1 + M)."""
    return channels * (1 + m_slots)


def glyph_head_forward(o0: Tensor, params: dict):
    """Per-pixel glyph attention and pooling features.

    Returns (s_gam, feats): s_gam (B, 1+M, H, W) softmax over channels
    at every pixel, feats (B, C0, H, W).
    """
    COUNTERS.glyph_head_forwards += 1
    g = conv_block(o0, params, "glan.g1.a")
    g = conv_block(g, params, "glan.g1.b")
    logits = T.conv2d_1x1(g, params["glan.proj.w"])     # bias-free projection
    s_gam = T.softmax(logits, axis=1)
    f = conv_block(o0, params, "glan.feat.a")
    feats = conv_block(f, params, "glan.feat.b")
    return s_gam, feats


def _length_mask(lengths, b: int, t_steps: int) -> np.ndarray:
    m = np.zeros((b, t_steps))
    for i, ln in enumerate(lengths):
        if not (1 <= ln <= t_steps):
            raise ContractError(f"length {ln} outside [1, {t_steps}]")
        m[i, :ln] = 1.0
    return m


def dice_loss(s_gam: Tensor, s_gt: Tensor, lengths) -> Tensor:
    """Soft-overlap loss on the present character channels.

    Per channel: 1 - 2*sum(p*t) / (sum(p) + sum(t)); averaged over each
    sample's first L character channels, then over the batch.  A perfect
    match scores ~0, disjoint supports score 1.
    """
    b, n_s = s_gam.shape[0], s_gam.shape[1]
    t_chan = s_gt.shape[1] - 1
    if t_chan > n_s - 1:
        raise ContractError(f"target has {t_chan} character channels, head has {n_s - 1}")
    pred = s_gam[:, 1:1 + t_chan]
    targ = s_gt[:, 1:1 + t_chan]
    inter = T.tensor_sum(T.mul(pred, targ), axis=(2, 3))          # (B, T)
    psum = T.tensor_sum(pred, axis=(2, 3))
    tsum = T.tensor_sum(targ, axis=(2, 3))
    dice = T.sub(1.0, T.div(T.mul(inter, 2.0), T.add(T.add(psum, tsum), EPS)))
    mask = _length_mask(lengths, b, t_chan)
    inv_len = 1.0 / mask.sum(axis=1)
    per_sample = T.mul(T.tensor_sum(T.mul(dice, Tensor(mask)), axis=1), Tensor(inv_len))
    return T.tensor_mean(per_sample)


def union_ce_loss(s_gam: Tensor, s_gt: Tensor) -> Tensor:
    """Pixel BCE between the summed character channels and foreground.

    The target is one minus the background channel of the pseudo-label
    (a constant), so gradient reaches only the prediction.
    """
    union = T.tensor_sum(s_gam[:, 1:], axis=1, keepdims=True)     # (B, 1, H, W)
    target = Tensor(1.0 - s_gt.data[:, 0:1])
    pred = T.clamp(union, EPS, 1.0 - EPS)
    ce = T.sub(0.0, T.add(T.mul(target, T.log(pred)),
                          T.mul(T.sub(1.0, target), T.log(T.sub(1.0, pred)))))
    return T.tensor_mean(ce)


def glan_loss(s_gam: Tensor, s_gt: Tensor, lengths):
    """Dice plus union CE; returns (total, parts dict)."""
    l_dice = dice_loss(s_gam, s_gt, lengths)
    l_cel = union_ce_loss(s_gam, s_gt)
    return T.add(l_dice, l_cel), {"dice": l_dice, "union_ce": l_cel}


def pool_glyph_features(feats: Tensor, s_gam: Tensor) -> Tensor:
    """Attention-weighted mean feature per character slot.

    feats (B, C, H, W), s_gam (B, 1+M, H, W) -> (B, M, C).  Slot m uses
    channel m+1 as weights, normalized by its mass plus a small guard.
    """
    COUNTERS.glyph_poolings += 1
    b, c, h, w = feats.shape
    m_slots = s_gam.shape[1] - 1
    attn = T.reshape(s_gam[:, 1:], (b, m_slots, 1, h, w))
    fx = T.reshape(feats, (b, 1, c, h, w))
    weighted = T.tensor_sum(T.mul(attn, fx), axis=(3, 4))         # (B, M, C)
    mass = T.tensor_sum(s_gam[:, 1:], axis=(2, 3))                # (B, M)
    denom = T.add(T.reshape(mass, (b, m_slots, 1)), EPS)
    return T.div(weighted, denom)
