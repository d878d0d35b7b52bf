"""Diagnostic rendering of every intermediate mask for one image.

Writes plain PGM panels: the k-means pseudo-label, the predicted
foreground mask, one squashed-attention strip per decode step, the
glyph pseudo-label channels, and the glyph attention channels.  This is
a debugging tool, so unlike evaluation it may run the training-only
target builders.
"""

from __future__ import annotations

import os

import numpy as np

from . import tensor as T
from .checkpoint import config_from_meta, load_checkpoint
from .data import read_image, write_image
from .decoder import encode, greedy_decode
from .errors import ConfigError
from .glan import glyph_head_forward
from .gpc import build_glyph_pseudo_label
from .model import _make_fuse_fn
from .tensor import no_grad
from .textseg import kmeans_mask, pyramid_forward

STRIP_ROWS = 8


def _strip(row: np.ndarray) -> np.ndarray:
    return np.repeat(row[None, :], STRIP_ROWS, axis=0)


def render_panels(ckpt_path: str, image_path: str, out_dir: str) -> list:
    """Run the model on one image and write all panels; returns paths."""
    params, meta = load_checkpoint(ckpt_path)
    cfg = config_from_meta(meta)
    img = read_image(image_path)
    if img.shape != (cfg.height, cfg.width):
        raise ConfigError(f"image is {img.shape}, checkpoint wants "
                          f"{(cfg.height, cfg.width)}")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, arr):
        path = os.path.join(out_dir, name)
        write_image(path, np.clip(arr, 0.0, 1.0))
        written.append(path)

    emit("s_pl.pgm", kmeans_mask(img, k=2))

    batch = img[None, None]
    with no_grad():
        enc = encode(batch, params)
        s_m = s_gam = None
        fuse_fn = None
        if cfg.enable_js:
            s_m, o0 = pyramid_forward(enc.p0, enc.p1, enc.p2, params)
            s_gam, feats = glyph_head_forward(o0, params)
            if cfg.enable_acfm:
                fuse_fn = _make_fuse_fn(feats, s_gam, params, cfg)
        preds, _, alpha = greedy_decode(enc, params, cfg.t_steps, fuse_fn=fuse_fn)
        beta = alpha @ T._interp_matrix(alpha.shape[-1], cfg.width)

    with open(os.path.join(out_dir, "prediction.txt"), "w", encoding="utf-8") as f:
        f.write(preds[0] + "\n")
    written.append(os.path.join(out_dir, "prediction.txt"))

    sig = 1.0 / (1.0 + np.exp(-cfg.mu * (beta[0] - cfg.lam)))
    for t in range(cfg.t_steps):
        emit(f"sigma_beta_t{t + 1:02d}.pgm", _strip(sig[t]))

    if cfg.enable_js:
        emit("s_m.pgm", s_m.data[0, 0])
        gpl = build_glyph_pseudo_label(beta, s_m, [min(len(preds[0]), cfg.t_steps)],
                                       cfg.delta)
        for c in range(gpl.s_gt.shape[1]):
            emit(f"s_gt_c{c:02d}.pgm", gpl.s_gt.data[0, c])
        for c in range(s_gam.shape[1]):
            emit(f"s_gam_c{c:02d}.pgm", s_gam.data[0, c])
    return written
