"""Sequence alignment between attention rows and the foreground mask.

Attention rows live on the downsampled feature axis (N cells); they are
stretched to image width, pushed through a steep logistic squash, and
compared against the predicted foreground mask.  Two penalties result:
a correlation term that keeps different decode steps from attending to
the same cells, and a difference term that makes attention-selected
foreground agree with the full foreground.  A box-overlap metric Theta
scores how well a single attention row covers its character's columns.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .counters import COUNTERS
from .decoder import AttentionTrace
from .errors import ContractError
from .tensor import EPS, Tensor

MU = 70.0          # squash steepness
LAM = 0.1          # squash midpoint
THETA_THRESHOLD = 0.05


def interpolate_alpha(trace: AttentionTrace, width: int) -> Tensor:
    """Stretch (B, T, N) attention rows to (B, T, width); caches on the trace."""
    trace.beta = T.linear_interp_1d(trace.alpha, width)
    return trace.beta


def squash(x, mu: float = MU, lam: float = LAM) -> Tensor:
    """Steep logistic 1 / (1 + exp(-mu (x - lam))); maps lam to 1/2."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    return T.sigmoid(T.mul(T.sub(x, lam), mu))


def _row_mask(lengths, b: int, t_steps: int) -> np.ndarray:
    """(B, T, 1) float mask selecting the first L decode steps per sample."""
    if lengths is None:
        return np.ones((b, t_steps, 1))
    if len(lengths) != b:
        raise ContractError(f"{len(lengths)} lengths for batch of {b}")
    m = np.zeros((b, t_steps, 1))
    for i, ln in enumerate(lengths):
        if not (0 <= ln <= t_steps):
            raise ContractError(f"length {ln} outside [0, {t_steps}]")
        m[i, :ln, 0] = 1.0
    return m


def correlation(alpha: Tensor, lengths=None) -> Tensor:
    """Per-sample sum over step pairs t < t' of alpha_t . alpha_t'.

    Non-negative; exactly zero iff the (first L) rows have pairwise
    disjoint support.  Computed as half of ||sum_t a_t||^2 - sum_t ||a_t||^2
    so no pairwise loop is needed.  Returns a (B,) tensor.
    """
    b, t_steps, _ = alpha.shape
    mask = Tensor(_row_mask(lengths, b, t_steps))
    am = T.mul(alpha, mask)
    colsum = T.tensor_sum(am, axis=1)                            # (B, N)
    total_sq = T.tensor_sum(T.mul(colsum, colsum), axis=1)       # (B,)
    self_sq = T.tensor_sum(T.mul(am, am), axis=(1, 2))           # (B,)
    return T.mul(T.sub(total_sq, self_sq), 0.5)


def saliency(beta: Tensor, s_m: Tensor, lengths=None,
             mu: float = MU, lam: float = LAM) -> Tensor:
    """Attention-selected foreground: sum_t squash(beta_t) gates s_m.

    beta: (B, T, W), s_m: (B, 1, H, W) -> (B, 1, H, W). Values may
    exceed one where squashed rows overlap; consumers clamp.
    """
    b, t_steps, w = beta.shape
    if s_m.shape[0] != b or s_m.shape[3] != w:
        raise ContractError(f"saliency: beta {beta.shape} vs mask {s_m.shape}")
    gates = T.mul(squash(beta, mu, lam), Tensor(_row_mask(lengths, b, t_steps)))
    total = T.tensor_sum(gates, axis=1)                          # (B, W)
    return T.mul(T.reshape(total, (b, 1, 1, w)), s_m)


def alignment_loss(trace: AttentionTrace, s_m: Tensor,
                   mu: float = MU, lam: float = LAM,
                   use_cor: bool = True, use_dif: bool = True):
    """Correlation plus difference penalty; returns (loss, parts dict).

    The difference part is a pixel BCE whose target is the foreground
    mask itself and whose prediction is the attention-selected
    foreground, tying the two representations together. Both terms are
    batch means.
    """
    if not (use_cor or use_dif):
        raise ContractError("alignment_loss with both terms disabled")
    COUNTERS.alignment_losses += 1
    if trace.beta is None:
        raise ContractError("alignment_loss: interpolate_alpha must run first")
    parts = {}
    terms = []
    if use_cor:
        l_cor = T.tensor_mean(correlation(trace.alpha, trace.lengths))
        parts["cor"] = l_cor
        terms.append(l_cor)
    if use_dif:
        s_sal = saliency(trace.beta, s_m, trace.lengths, mu, lam)
        pred = T.clamp(s_sal, EPS, 1.0 - EPS)
        ce = T.sub(0.0, T.add(T.mul(s_m, T.log(pred)),
                              T.mul(T.sub(1.0, s_m), T.log(T.sub(1.0, pred)))))
        l_dif = T.tensor_mean(ce)
        parts["dif"] = l_dif
        terms.append(l_dif)
    total = terms[0] if len(terms) == 1 else T.add(terms[0], terms[1])
    return total, parts


def theta_metric(beta_row: np.ndarray, box, width: int,
                 threshold: float = THETA_THRESHOLD) -> float:
    """Column IoU between a thresholded attention row and a character box.

    Both sets empty scores 1.0; exactly one empty scores 0.0.
    """
    row = np.asarray(beta_row, dtype=np.float64)
    if row.shape != (width,):
        raise ContractError(f"theta_metric: row shape {row.shape}, expected ({width},)")
    x0, x1 = box
    l_true = np.zeros(width, dtype=bool)
    l_true[max(0, int(x0)):max(0, int(x1))] = True
    l_pred = row > threshold
    inter = int((l_true & l_pred).sum())
    union = int((l_true | l_pred).sum())
    if union == 0:
        return 1.0
    return inter / union
