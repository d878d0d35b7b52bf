"""Encoder and attention decoder for strip images.

The encoder is a small conv pyramid: full-resolution features P0, then
P1 at half and P2 at quarter resolution.  P2 is collapsed to a single
row and projected to give the horizontal feature sequence the decoder
attends over.  The decoder is a GRU with one-layer additive attention;
each step mixes the sequence into a glimpse, updates the state, and
emits character logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import CHARSET
from .errors import ContractError, ShapeError
from .layers import conv_block, halve_h, halve_hw, linear
from .tensor import EPS, Tensor

VOCAB = len(CHARSET) + 1          # characters + end marker
EOS_ID = len(CHARSET)
START_ID = VOCAB                  # embedding-only row, never a logit


def encode_label(label: str) -> list:
    try:
        return [CHARSET.index(c) for c in label.lower()]
    except ValueError:
        bad = next(c for c in label.lower() if c not in CHARSET)
        raise ContractError(f"unknown symbol {bad!r} in label {label!r}") from None


def teacher_targets(labels: list, t_steps: int) -> np.ndarray:
    """(B, T) int array: character ids then end-marker padding."""
    out = np.full((len(labels), t_steps), EOS_ID, dtype=np.int64)
    for b, label in enumerate(labels):
        ids = encode_label(label)
        if len(ids) > t_steps - 1:
            raise ContractError(
                f"label {label!r} has {len(ids)} symbols, budget allows {t_steps - 1}")
        out[b, :len(ids)] = ids
    return out


def ids_to_string(ids) -> str:
    chars = []
    for i in ids:
        if i == EOS_ID:
            break
        chars.append(CHARSET[int(i)])
    return "".join(chars)


@dataclass
class EncoderOut:
    p0: Tensor      # (B, C0, H, W)
    p1: Tensor      # (B, C1, H/2, W/2)
    p2: Tensor      # (B, C2, H/4, W/4)
    h_seq: Tensor   # (B, C, 1, N) with N = W/4


@dataclass
class AttentionTrace:
    alpha: Tensor               # (B, T, N) attention rows, on the tape
    lengths: list | None = None  # per-sample label lengths (teacher forcing)
    beta: Tensor | None = None   # (B, T, W) filled by the alignment module


def encode(images, params: dict) -> EncoderOut:
    """Run the conv backbone. images: (B, 1, H, W) array or tensor."""
    x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=np.float64))
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"encode wants (B, 1, H, W), got {x.shape}")
    p0 = conv_block(x, params, "enc.stem")
    p1 = halve_hw(conv_block(p0, params, "enc.b1"))
    p2 = halve_hw(conv_block(p1, params, "enc.b2"))
    row = p2
    while row.shape[2] > 1:
        row = halve_h(row)
    h_seq = T.add(T.conv2d_1x1(row, params["enc.proj.w"]), params["enc.proj.b"])
    return EncoderOut(p0=p0, p1=p1, p2=p2, h_seq=h_seq)


def attention_step(h_seq: Tensor, s_prev: Tensor, params: dict):
    """Additive attention over the feature row.

    Returns (g, alpha): glimpse (B, C) and weights (B, N), rows
    summing to one.
    """
    b, c, _, n = h_seq.shape
    proj_h = T.conv2d_1x1(h_seq, params["att.v.w"])              # (B, A, 1, N)
    proj_s = linear(s_prev, params["att.s.w"])                   # (B, A)
    proj_s = T.reshape(proj_s, (b, proj_s.shape[1], 1, 1))
    u = T.tanh(T.add(T.add(proj_h, proj_s), params["att.b"]))
    scores = T.conv2d_1x1(u, params["att.e.w"])                  # (B, 1, 1, N)
    alpha = T.softmax(scores, axis=-1)
    g = T.tensor_sum(T.mul(alpha, h_seq), axis=3)                # (B, C, 1)
    return T.reshape(g, (b, c)), T.reshape(alpha, (b, n))


def decode_step(g: Tensor, y_prev: np.ndarray, s_prev: Tensor, params: dict):
    """One GRU update plus classifier.

    y_prev holds previous symbol ids (B,).  Returns (logits, s_new);
    an update gate of one keeps the state unchanged.
    """
    e_prev = T.embedding_lookup(params["dec.embed"], y_prev)     # (B, E)
    x = T.concat([g, e_prev], axis=1)
    z = T.sigmoid(T.add(T.add(linear(x, params["dec.wz"]), linear(s_prev, params["dec.uz"])),
                        params["dec.bz"]))
    r = T.sigmoid(T.add(T.add(linear(x, params["dec.wr"]), linear(s_prev, params["dec.ur"])),
                        params["dec.br"]))
    cand = T.tanh(T.add(T.add(linear(x, params["dec.wh"]),
                              linear(T.mul(r, s_prev), params["dec.uh"])),
                        params["dec.bh"]))
    s_new = T.add(T.mul(z, s_prev), T.mul(T.sub(1.0, z), cand))
    logits = linear(s_new, params["dec.cls.w"], params["dec.cls.b"])
    return logits, s_new


def decode_sequence(enc: EncoderOut, params: dict, t_steps: int,
                    labels: list | None = None, fuse_fn=None):
    """Unroll the decoder for a fixed step budget.

    With ``labels`` the input at each step is the ground-truth previous
    symbol (teacher forcing); otherwise the previous argmax.  Logits are
    produced for every step regardless of where the end marker lands.
    ``fuse_fn(g, t)`` may replace the glimpse before the GRU update.

    Returns (logits (B, T, V) on the tape, AttentionTrace).
    """
    h_seq = enc.h_seq
    b, c = h_seq.shape[0], h_seq.shape[1]
    targets = teacher_targets(labels, t_steps) if labels is not None else None
    s = Tensor(np.zeros((b, c)))
    y_prev = np.full(b, START_ID, dtype=np.int64)
    step_logits, step_alphas = [], []
    for t in range(t_steps):
        g, alpha = attention_step(h_seq, s, params)
        if fuse_fn is not None:
            g = fuse_fn(g, t)
        logits, s = decode_step(g, y_prev, s, params)
        step_logits.append(T.reshape(logits, (b, 1, VOCAB)))
        step_alphas.append(T.reshape(alpha, (b, 1, alpha.shape[1])))
        if targets is not None:
            y_prev = targets[:, t]
        else:
            y_prev = logits.data.argmax(axis=1).astype(np.int64)
    all_logits = T.concat(step_logits, axis=1)
    trace = AttentionTrace(alpha=T.concat(step_alphas, axis=1),
                           lengths=[len(l) for l in labels] if labels is not None else None)
    return all_logits, trace


def recognition_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Cross-entropy over characters plus the first end marker.

    Steps after a sample's end marker are padding and carry no loss
    (the usual attention-decoder convention); the mean is taken over
    the counted steps only.
    """
    b, t_steps, v = logits.shape
    if targets.shape != (b, t_steps):
        raise ContractError(f"targets shape {targets.shape} vs logits {logits.shape}")
    probs = T.softmax(logits, axis=2)
    onehot = np.zeros((b, t_steps, v))
    onehot[np.arange(b)[:, None], np.arange(t_steps)[None, :], targets] = 1.0
    picked = T.tensor_sum(T.mul(probs, onehot), axis=2)          # (B, T)
    is_eos = targets == EOS_ID
    first_eos = np.where(is_eos.any(axis=1), np.argmax(is_eos, axis=1), t_steps - 1)
    weight = (np.arange(t_steps)[None, :] <= first_eos[:, None]).astype(np.float64)
    nll = T.mul(T.sub(0.0, T.log(T.clamp(picked, EPS, 1.0))), weight)
    return T.div(T.tensor_sum(nll), float(weight.sum()))


def greedy_decode(enc: EncoderOut, params: dict, t_steps: int, fuse_fn=None):
    """Inference pass: (strings, logits array, alpha array)."""
    logits, trace = decode_sequence(enc, params, t_steps, labels=None, fuse_fn=fuse_fn)
    ids = logits.data.argmax(axis=2)
    return [ids_to_string(row) for row in ids], logits.data, trace.alpha.data
