"""Interpolation, squashing, correlation, saliency, and the box IoU metric."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siga import tensor as T
from siga.alignment import (MU, LAM, THETA_THRESHOLD, alignment_loss,
                            correlation, interpolate_alpha, saliency, squash,
                            theta_metric)
from siga.decoder import AttentionTrace
from siga.errors import ContractError
from siga.tensor import EPS, Tensor, rng


def _trace(alpha, lengths, width):
    tr = AttentionTrace(alpha=Tensor(np.asarray(alpha, dtype=np.float64)),
                        lengths=lengths)
    interpolate_alpha(tr, width)
    return tr


# ----------------------------------------------------------- interpolation


def test_interp_constant_preserved():
    tr = _trace(np.full((1, 2, 4), 0.25), [2], 9)
    np.testing.assert_allclose(tr.beta.data, 0.25, atol=1e-15)


def test_interp_hand_case_n2_w4():
    tr = _trace(np.array([[[0.0, 1.0]]]), [1], 4)
    np.testing.assert_allclose(tr.beta.data[0, 0], [0, 1 / 3, 2 / 3, 1], atol=1e-15)


def test_interp_endpoints_anchored():
    a = rng(1).uniform(size=(2, 3, 16))
    tr = _trace(a, [3, 3], 64)
    np.testing.assert_allclose(tr.beta.data[..., 0], a[..., 0], atol=1e-15)
    np.testing.assert_allclose(tr.beta.data[..., -1], a[..., -1], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_interp_linearity(seed, a, b):
    g = rng(seed)
    x, y = g.uniform(size=(1, 1, 8)), g.uniform(size=(1, 1, 8))
    bx = _trace(x, [1], 20).beta.data
    by = _trace(y, [1], 20).beta.data
    bz = _trace(a * x + b * y, [1], 20).beta.data
    np.testing.assert_allclose(bz, a * bx + b * by, atol=1e-10)


# ----------------------------------------------------------------- squash


def test_squash_midpoint_exact():
    assert float(squash(Tensor(np.array(0.1))).data) == 0.5


def test_squash_known_values():
    hi = float(squash(Tensor(np.array(0.2))).data)
    lo = float(squash(Tensor(np.array(0.0))).data)
    np.testing.assert_allclose(hi, 1.0 / (1.0 + np.exp(-7.0)), atol=1e-15)
    np.testing.assert_allclose(lo, 1.0 / (1.0 + np.exp(7.0)), atol=1e-15)
    np.testing.assert_allclose(hi, 0.9990889488055994, atol=1e-15)
    np.testing.assert_allclose(lo + hi, 1.0, atol=1e-12)   # symmetry about lambda


def test_squash_strictly_monotone():
    xs = np.linspace(-0.05, 0.25, 200)
    ys = squash(Tensor(xs)).data
    assert np.all(np.diff(ys) > 0)
    assert MU == 70.0 and LAM == 0.1


# ------------------------------------------------------------- correlation


def test_correlation_disjoint_zero():
    a = np.zeros((1, 3, 6))
    a[0, 0, :2] = 0.5
    a[0, 1, 2:4] = 0.5
    a[0, 2, 4:] = 0.5
    got = correlation(Tensor(a), [3])
    assert float(got.data[0]) == 0.0


def test_correlation_identical_rows_hand_value():
    a = np.array([[[0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0]]])
    got = correlation(Tensor(a), [2])
    np.testing.assert_allclose(float(got.data[0]), 0.5, atol=1e-15)


def test_correlation_single_row_is_zero():
    a = rng(3).uniform(size=(1, 1, 8))
    assert float(correlation(Tensor(a), [1]).data[0]) == 0.0


def test_correlation_ignores_rows_beyond_length():
    g = rng(4)
    a = g.uniform(size=(1, 4, 6))
    full = correlation(Tensor(a[:, :2]), [2])
    masked = correlation(Tensor(a), [2])
    np.testing.assert_allclose(float(masked.data[0]), float(full.data[0]), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_correlation_nonnegative_for_softmax_rows(seed):
    g = rng(seed)
    logits = g.normal(size=(1, 4, 8))
    a = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    assert float(correlation(Tensor(a), [4]).data[0]) >= 0.0


def test_correlation_matches_pairwise_sum():
    g = rng(5)
    a = g.uniform(size=(2, 3, 5))
    got = correlation(Tensor(a), [3, 2])
    for b in range(2):
        want = 0.0
        L = [3, 2][b]
        for t in range(L):
            for u in range(t + 1, L):
                want += float(a[b, t] @ a[b, u])
        np.testing.assert_allclose(float(got.data[b]), want, atol=1e-12)


# ---------------------------------------------------------------- saliency


def test_saliency_low_beta_vanishes():
    tr = _trace(np.zeros((1, 2, 4)), [2], 8)
    s_m = Tensor(rng(6).uniform(0.2, 0.8, size=(1, 1, 3, 8)))
    sal = saliency(tr.beta, s_m, [2])
    assert float(sal.data.max()) < 2e-3


def test_saliency_saturated_single_char_equals_mask():
    tr = _trace(np.full((1, 1, 4), 0.9), [1], 8)   # far above lambda
    s_m = Tensor(rng(7).uniform(0.2, 0.8, size=(1, 1, 3, 8)))
    sal = saliency(tr.beta, s_m, [1])
    np.testing.assert_allclose(sal.data, s_m.data, atol=1e-12)


def test_saliency_disjoint_tiling_recovers_mask():
    a = np.zeros((1, 2, 4))
    a[0, 0, :2] = 0.9
    a[0, 1, 2:] = 0.9
    tr = _trace(a, [2], 4)
    s_m = Tensor(rng(8).uniform(0.2, 0.8, size=(1, 1, 2, 4)))
    sal = saliency(tr.beta, s_m, [2])
    np.testing.assert_allclose(sal.data, s_m.data, atol=1.5e-3)


# ------------------------------------------------------------------ losses


def test_alignment_loss_hand_bce():
    # beta saturated high everywhere: prediction collapses to s_m itself
    tr = _trace(np.array([[[0.9, 0.9, 0.9, 0.9]]]), [1], 4)
    s_m = Tensor(np.array([0.9, 0.2, 0.9, 0.2]).reshape(1, 1, 1, 4))
    total, parts = alignment_loss(tr, s_m, use_cor=False)
    p = s_m.data.ravel()
    want = float(np.mean(-(p * np.log(p) + (1 - p) * np.log(1 - p))))
    np.testing.assert_allclose(float(parts["dif"].data), want, rtol=1e-3)
    np.testing.assert_allclose(float(total.data), float(parts["dif"].data), atol=1e-15)


def test_alignment_optimum_floor():
    a = np.zeros((1, 2, 4))
    a[0, 0, :2] = 0.9
    a[0, 1, 2:] = 0.9
    tr = _trace(a, [2], 4)
    s_m = Tensor(np.ones((1, 1, 2, 4)))
    total, parts = alignment_loss(tr, s_m)
    assert float(parts["cor"].data) == 0.0
    assert float(parts["dif"].data) < 1e-3    # near the clamp-floor BCE
    want = float(parts["cor"].data) + float(parts["dif"].data)
    np.testing.assert_allclose(float(total.data), want, atol=1e-12)


def test_alignment_switches():
    g = rng(9)
    logits = g.normal(size=(1, 2, 6))
    a = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    tr = _trace(a, [2], 12)
    s_m = Tensor(g.uniform(0.3, 0.7, size=(1, 1, 2, 12)))
    _, both = alignment_loss(tr, s_m)
    _, cor = alignment_loss(tr, s_m, use_dif=False)
    _, dif = alignment_loss(tr, s_m, use_cor=False)
    assert "dif" not in cor and "cor" not in dif
    np.testing.assert_allclose(float(both["cor"].data), float(cor["cor"].data), atol=1e-12)
    np.testing.assert_allclose(float(both["dif"].data), float(dif["dif"].data), atol=1e-12)
    with pytest.raises(ContractError):
        alignment_loss(tr, s_m, use_cor=False, use_dif=False)


def test_grad_through_alignment():
    from siga.tensor import grad_check
    g = rng(10)
    x0 = Tensor(g.uniform(-1, 1, size=(1, 2, 6)))
    s_m = T.sigmoid(Tensor(g.uniform(-1.5, 1.5, size=(1, 1, 2, 12))))
    def f(x):
        alpha = T.softmax(x, axis=2)
        tr = AttentionTrace(alpha=alpha, lengths=[2])
        interpolate_alpha(tr, 12)
        total, _ = alignment_loss(tr, s_m)
        return total
    assert grad_check(f, x0) <= 1e-4


# ------------------------------------------------------------------ theta


def test_theta_identity_and_disjoint():
    beta = np.zeros(8)
    beta[2:5] = 0.2
    assert theta_metric(beta, (2, 5), 8, THETA_THRESHOLD) == 1.0
    assert theta_metric(beta, (5, 8), 8, THETA_THRESHOLD) == 0.0


def test_theta_hand_half():
    beta = np.zeros(4)
    beta[0] = 0.2
    assert theta_metric(beta, (0, 2), 4, THETA_THRESHOLD) == 0.5


def test_theta_empty_conventions():
    quiet = np.full(6, 0.01)                  # below threshold everywhere
    assert theta_metric(quiet, (2, 2), 6, THETA_THRESHOLD) == 1.0   # both empty
    assert theta_metric(quiet, (1, 4), 6, THETA_THRESHOLD) == 0.0   # one empty


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10.0))
def test_theta_scale_free_between_crossings(seed, c):
    g = rng(seed)
    beta = g.uniform(0.0, 0.2, size=12)
    # keep every coordinate on the same side of the threshold after scaling
    beta = np.where(np.abs(beta - THETA_THRESHOLD) < 0.02,
                    THETA_THRESHOLD + 0.05, beta)
    if np.any(np.abs(c * beta - THETA_THRESHOLD) < 1e-9):
        return
    same_side = np.all((beta > THETA_THRESHOLD) == (c * beta > THETA_THRESHOLD))
    if not same_side:
        return
    a = theta_metric(beta, (3, 7), 12, THETA_THRESHOLD)
    b = theta_metric(c * beta, (3, 7), 12, THETA_THRESHOLD)
    assert a == b
