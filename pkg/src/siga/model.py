"""Parameter construction, character fusion, and the combined loss.

``init_params`` builds every learnable tensor in a fixed order from one
seeded generator, so two runs with the same seed produce bitwise-equal
models.  ``total_loss`` wires the forward graph according to the
structure switches: with ``enable_js`` off only the encoder/decoder path
exists and none of the mask, alignment, or glyph machinery is even
allocated; ``enable_acfm`` additionally routes pooled glyph features
back into the decoder through a learned gate.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .alignment import alignment_loss, interpolate_alpha
from .config import TrainConfig
from .counters import COUNTERS
from .decoder import (VOCAB, decode_sequence, encode, recognition_loss,
                      teacher_targets)
from .errors import ContractError
from .glan import glan_loss, glyph_head_forward, pool_glyph_features
from .gpc import build_glyph_pseudo_label
from .layers import he_normal, linear, xavier_normal
from .tensor import Tensor
from .textseg import pyramid_forward, seg_loss


def _conv_block_params(p, gen, prefix, cout, cin):
    p[prefix + ".w"] = he_normal(gen, (cout, cin, 3, 3), fan_in=cin * 9)
    p[prefix + ".gamma"] = np.ones((1, cout, 1, 1))
    p[prefix + ".beta"] = np.zeros((1, cout, 1, 1))


def init_params(cfg: TrainConfig, gen: np.random.Generator) -> dict:
    """Learnable tensors keyed by dotted name, in fixed creation order."""
    c, c0, c1, c2, e = cfg.channels, cfg.c0, cfg.c1, cfg.c2, cfg.embed
    raw: dict = {}
    _conv_block_params(raw, gen, "enc.stem", c0, 1)
    _conv_block_params(raw, gen, "enc.b1", c1, c0)
    _conv_block_params(raw, gen, "enc.b2", c2, c1)
    raw["enc.proj.w"] = xavier_normal(gen, (c, c2), c2, c)
    raw["enc.proj.b"] = np.zeros((1, c, 1, 1))

    raw["att.v.w"] = xavier_normal(gen, (c, c), c, c)
    raw["att.s.w"] = xavier_normal(gen, (c, c), c, c)
    raw["att.b"] = np.zeros((1, c, 1, 1))
    raw["att.e.w"] = xavier_normal(gen, (1, c), c, 1)

    raw["dec.embed"] = gen.normal(0.0, 0.1, size=(VOCAB + 1, e))
    din = c + e
    for gate in ("z", "r", "h"):
        raw[f"dec.w{gate}"] = xavier_normal(gen, (din, c), din, c)
        raw[f"dec.u{gate}"] = xavier_normal(gen, (c, c), c, c)
        raw[f"dec.b{gate}"] = np.zeros(c)
    raw["dec.cls.w"] = xavier_normal(gen, (c, VOCAB), c, VOCAB)
    raw["dec.cls.b"] = np.zeros(VOCAB)

    if cfg.enable_js:
        _conv_block_params(raw, gen, "pyr.o2.a", c2, c2)
        _conv_block_params(raw, gen, "pyr.o2.b", c2, c2)
        _conv_block_params(raw, gen, "pyr.o1.a", c1, c2 + c1)
        _conv_block_params(raw, gen, "pyr.o1.b", c1, c1)
        _conv_block_params(raw, gen, "pyr.o0.a", c0, c1 + c0)
        _conv_block_params(raw, gen, "pyr.o0.b", c0, c0)
        raw["pyr.mask.w"] = xavier_normal(gen, (1, c0), c0, 1)
        raw["pyr.mask.b"] = np.zeros((1, 1, 1, 1))

        _conv_block_params(raw, gen, "glan.g1.a", c0, c0)
        _conv_block_params(raw, gen, "glan.g1.b", c0, c0)
        raw["glan.proj.w"] = xavier_normal(gen, (1 + cfg.m_chars, c0), c0, 1 + cfg.m_chars)
        _conv_block_params(raw, gen, "glan.feat.a", c0, c0)
        _conv_block_params(raw, gen, "glan.feat.b", c0, c0)

    if cfg.enable_acfm:
        raw["fuse.proj.w"] = xavier_normal(gen, (c0, c), c0, c)
        raw["fuse.proj.b"] = np.zeros(c)
        raw["fuse.gate.w"] = xavier_normal(gen, (2 * c, c), 2 * c, c)
        raw["fuse.gate.b"] = np.zeros(c)

    return {k: Tensor(v, requires_grad=True) for k, v in raw.items()}


def gate_fuse(g: Tensor, glyph_vec: Tensor, params: dict) -> Tensor:
    """Convex blend of the attention glimpse and a glyph feature.

    z = sigmoid(W [g; i] + b); returns z*g + (1-z)*i, elementwise.
    """
    COUNTERS.fusion_gates += 1
    if g.shape != glyph_vec.shape:
        raise ContractError(f"gate_fuse: {g.shape} vs {glyph_vec.shape}")
    z = T.sigmoid(linear(T.concat([g, glyph_vec], axis=1),
                         params["fuse.gate.w"], params["fuse.gate.b"]))
    return T.add(T.mul(z, g), T.mul(T.sub(1.0, z), glyph_vec))


def _make_fuse_fn(feats, s_gam, params, cfg):
    """Pool glyph vectors once, return the per-step fusion callback."""
    pooled = pool_glyph_features(feats, s_gam)                    # (B, M, C0)
    b, m_slots, c0 = pooled.shape
    flat = T.reshape(pooled, (b * m_slots, c0))
    proj = linear(flat, params["fuse.proj.w"], params["fuse.proj.b"])
    glyph_rows = T.reshape(proj, (b, m_slots, cfg.channels))

    def fuse(g, t):
        if t >= m_slots:
            return g
        return gate_fuse(g, glyph_rows[:, t], params)
    return fuse


def total_loss(batch: dict, params: dict, cfg: TrainConfig, frozen_glyph_target=None):
    """Forward pass and combined objective for one batch.

    ``batch`` carries ``images`` (B,1,H,W), ``labels`` (list of str) and,
    when the joint strategy is on, ``s_pl`` (B,1,H,W) pseudo-labels with
    a ``valid`` (B,) mask flagging usable ones.

    The glyph target is rebuilt from detached values every call; since
    no gradient flows through it, a finite-difference oracle must hold
    it fixed, so ``frozen_glyph_target`` can inject a pre-built one.

    Returns (loss, parts, extras): ``parts`` maps the metrics-log names
    to floats; ``extras`` exposes intermediate tensors for callers that
    want to inspect or visualize.
    """
    images, labels = batch["images"], batch["labels"]
    enc = encode(images, params)
    fuse_fn = None
    extras: dict = {"enc": enc}

    if cfg.enable_js:
        s_m, o0 = pyramid_forward(enc.p0, enc.p1, enc.p2, params)
        s_gam, feats = glyph_head_forward(o0, params)
        extras.update(s_m=s_m, s_gam=s_gam)
        if cfg.enable_acfm:
            fuse_fn = _make_fuse_fn(feats, s_gam, params, cfg)

    logits, trace = decode_sequence(enc, params, cfg.t_steps, labels=labels,
                                    fuse_fn=fuse_fn)
    extras["logits"], extras["trace"] = logits, trace
    targets = teacher_targets(labels, cfg.t_steps)
    l_rec = recognition_loss(logits, targets)
    loss = T.mul(l_rec, cfg.w_rec)
    parts = {"loss_rec": l_rec.item(), "loss_ins": 0.0,
             "loss_seq": 0.0, "loss_seg": 0.0}

    if cfg.enable_js:
        if "s_pl" not in batch:
            raise ContractError("joint strategy needs pseudo-labels in the batch")
        l_ins = seg_loss(s_m, batch["s_pl"], batch.get("valid"))
        parts["loss_ins"] = l_ins.item()
        loss = T.add(loss, T.mul(l_ins, cfg.w_ins))

        beta = interpolate_alpha(trace, cfg.width)
        if cfg.align_cor or cfg.align_dif:
            l_seq, _ = alignment_loss(trace, s_m, cfg.mu, cfg.lam,
                                      use_cor=cfg.align_cor, use_dif=cfg.align_dif)
            parts["loss_seq"] = l_seq.item()
            loss = T.add(loss, T.mul(l_seq, cfg.w_seq))

        gpl = (frozen_glyph_target if frozen_glyph_target is not None
               else build_glyph_pseudo_label(beta, s_m, trace.lengths, cfg.delta))
        extras["s_gt"] = gpl.s_gt
        l_seg, _ = glan_loss(s_gam, gpl.s_gt, gpl.lengths)
        parts["loss_seg"] = l_seg.item()
        loss = T.add(loss, T.mul(l_seg, cfg.w_seg))

    parts["loss_total"] = loss.item()
    return loss, parts, extras
