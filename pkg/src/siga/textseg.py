"""Text / background separation.

Two halves live here.  ``kmeans_mask`` produces a binary foreground
pseudo-label from raw pixel intensities with 2-means clustering; it is
pure numpy, runs outside the tape, and is only ever called while
preparing training targets.  ``pyramid_forward`` is the learned
counterpart: a top-down feature pyramid over the encoder maps that
predicts a soft foreground mask, trained against the pseudo-label with
``seg_loss``.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .counters import COUNTERS
from .errors import ContractError, DegenerateImage
from .layers import conv_block
from .tensor import EPS, Tensor


def kmeans_mask(image: np.ndarray, k: int = 2, max_iter: int = 20) -> np.ndarray:
    """Binary foreground mask from scalar-intensity k-means.

    Centroids start at the min and max intensity and follow Lloyd
    updates until assignments stop changing.  The foreground cluster is
    the one with the smaller share of the image border; ties go to the
    brighter centroid.  Deterministic, no RNG involved.

    Raises DegenerateImage when the intensity spread is below 1e-6.
    """
    if k != 2:
        raise ContractError(f"kmeans_mask supports k=2 only, got k={k}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ContractError(f"kmeans_mask wants a 2-D image, got shape {img.shape}")
    COUNTERS.kmeans_calls += 1
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-6:
        raise DegenerateImage(f"intensity spread {hi - lo:.2e} below 1e-6")
    c0, c1 = lo, hi
    assign = img > (c0 + c1) / 2.0
    for _ in range(max_iter):
        n1 = int(assign.sum())
        if n1 == 0 or n1 == img.size:
            break
        c0 = float(img[~assign].mean())
        c1 = float(img[assign].mean())
        new_assign = img > (c0 + c1) / 2.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    border = np.zeros_like(assign, dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    nb = border.sum()
    share1 = float((assign & border).sum()) / nb
    share0 = float(((~assign) & border).sum()) / nb
    if share1 < share0:
        fg = assign
    elif share0 < share1:
        fg = ~assign
    else:
        fg = assign if c1 >= c0 else ~assign    # tie: brighter cluster wins
    return fg.astype(np.float64)


def _phi(x: Tensor, p: dict, prefix: str) -> Tensor:
    """Two conv3x3+standardize+relu blocks."""
    y = conv_block(x, p, prefix + ".a")
    return conv_block(y, p, prefix + ".b")


def pyramid_forward(p0: Tensor, p1: Tensor, p2: Tensor, params: dict):
    """Top-down refinement of the encoder pyramid.

    The coarsest map is refined, doubled, fused with the next finer map,
    and so on, until a full-resolution feature map O0 remains; a
    pointwise sigmoid head on O0 gives the soft foreground mask.

    Returns (s_m, o0) with s_m: (B, 1, H, W), o0: (B, C0, H, W).
    """
    COUNTERS.pyramid_forwards += 1
    o2 = _phi(p2, params, "pyr.o2")
    u2 = T.upsample_nearest_2x(o2)
    o1 = _phi(T.concat([u2, p1], axis=1), params, "pyr.o1")
    u1 = T.upsample_nearest_2x(o1)
    o0 = _phi(T.concat([u1, p0], axis=1), params, "pyr.o0")
    logits = T.add(T.conv2d_1x1(o0, params["pyr.mask.w"]), params["pyr.mask.b"])
    return T.sigmoid(logits), o0


def seg_loss(s_m: Tensor, s_pl, sample_mask: np.ndarray | None = None) -> Tensor:
    """Mean-pixel binary cross-entropy against the k-means pseudo-label.

    ``sample_mask`` (B,) of {0,1} lets degenerate images drop out of the
    batch mean; with no valid samples the loss is a constant zero.
    """
    target = s_pl if isinstance(s_pl, Tensor) else Tensor(np.asarray(s_pl, dtype=np.float64))
    if s_m.shape != target.shape:
        raise ContractError(f"seg_loss: prediction {s_m.shape} vs target {target.shape}")
    p = T.clamp(s_m, EPS, 1.0 - EPS)
    ce = T.sub(0.0, T.add(T.mul(target, T.log(p)),
                          T.mul(T.sub(1.0, target), T.log(T.sub(1.0, p)))))
    per_sample = T.tensor_mean(ce, axis=tuple(range(1, ce.ndim)))
    if sample_mask is None:
        return T.tensor_mean(per_sample)
    m = np.asarray(sample_mask, dtype=np.float64)
    valid = float(m.sum())
    if valid == 0.0:
        return Tensor(0.0)
    return T.div(T.tensor_sum(T.mul(per_sample, m)), valid)
