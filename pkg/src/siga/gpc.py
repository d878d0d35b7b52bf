"""Glyph pseudo-label construction.

Combines the stretched attention rows with the predicted foreground
mask into a per-character segmentation target: channel 0 is background
(one minus foreground), channel t gates the foreground by where decode
step t attends (row values at or above ``delta``).  The result is a
training-time target only; it is built from detached values, carries no
gradient, and must never run during evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counters import COUNTERS
from .errors import ContractError
from .tensor import Tensor

DELTA = 0.05


@dataclass
class GlyphPseudoLabel:
    s_gt: Tensor        # (B, 1+T, H, W), constant, no tape participation
    lengths: list       # characters actually present per sample


def detach_targets(t: Tensor) -> Tensor:
    """Bitwise-equal copy guaranteed off the tape. Idempotent."""
    return t.detach()


def build_glyph_pseudo_label(beta, s_m, lengths, delta: float = DELTA) -> GlyphPseudoLabel:
    """Assemble the (1+T)-channel glyph target.

    beta: (B, T, W) attention rows at image width; s_m: (B, 1, H, W)
    foreground mask.  Tensors are read by value, so no gradient can
    reach the caller through the result.  Rows past a sample's length
    yield all-zero channels.  Pure function of its inputs.
    """
    COUNTERS.gpc_builds += 1
    b_np = beta.data if isinstance(beta, Tensor) else np.asarray(beta, dtype=np.float64)
    m_np = s_m.data if isinstance(s_m, Tensor) else np.asarray(s_m, dtype=np.float64)
    if b_np.ndim != 3 or m_np.ndim != 4 or m_np.shape[1] != 1:
        raise ContractError(f"build_glyph_pseudo_label: beta {b_np.shape}, s_m {m_np.shape}")
    b, t_steps, w = b_np.shape
    if m_np.shape[0] != b or m_np.shape[3] != w:
        raise ContractError(f"batch/width mismatch: beta {b_np.shape} vs s_m {m_np.shape}")
    if lengths is None or len(lengths) != b:
        raise ContractError("build_glyph_pseudo_label needs one length per sample")
    h = m_np.shape[2]
    fg = m_np[:, 0]                                   # (B, H, W)
    s_gt = np.zeros((b, 1 + t_steps, h, w))
    s_gt[:, 0] = 1.0 - fg
    cols = (b_np >= delta).astype(np.float64)         # (B, T, W)
    for i, ln in enumerate(lengths):
        if not (0 <= ln <= t_steps):
            raise ContractError(f"length {ln} outside [0, {t_steps}]")
        if ln:
            s_gt[i, 1:1 + ln] = cols[i, :ln, None, :] * fg[i][None]
    return GlyphPseudoLabel(s_gt=Tensor(s_gt), lengths=list(lengths))
