"""Glyph pseudo-label assembly: channel layout, gating, detachment."""

import numpy as np
import pytest

from siga import tensor as T
from siga.errors import ContractError
from siga.gpc import DELTA, GlyphPseudoLabel, build_glyph_pseudo_label, detach_targets
from siga.tensor import Tensor


def _inputs(b=2, t=3, h=4, w=6, seed=0):
    gen = T.rng(seed)
    beta = gen.uniform(0.0, 0.3, size=(b, t, w))
    s_m = gen.uniform(0.0, 1.0, size=(b, 1, h, w))
    return beta, s_m


def test_channel_zero_is_background():
    beta, s_m = _inputs()
    gpl = build_glyph_pseudo_label(beta, s_m, [3, 2])
    np.testing.assert_allclose(gpl.s_gt.data[:, 0], 1.0 - s_m[:, 0])


def test_character_channel_is_gated_foreground():
    beta, s_m = _inputs()
    gpl = build_glyph_pseudo_label(beta, s_m, [3, 3])
    for i in range(2):
        for t in range(3):
            gate = (beta[i, t] >= DELTA).astype(float)          # (W,)
            want = gate[None, :] * s_m[i, 0]
            np.testing.assert_allclose(gpl.s_gt.data[i, 1 + t], want)


def test_gate_threshold_is_inclusive():
    beta = np.full((1, 1, 4), DELTA)        # exactly at the cut
    s_m = np.ones((1, 1, 2, 4))
    gpl = build_glyph_pseudo_label(beta, s_m, [1])
    assert gpl.s_gt.data[0, 1].min() == 1.0


def test_channels_past_length_are_zero():
    beta, s_m = _inputs()
    gpl = build_glyph_pseudo_label(beta, s_m, [1, 0])
    assert np.all(gpl.s_gt.data[0, 2:] == 0.0)
    assert np.all(gpl.s_gt.data[1, 1:] == 0.0)


def test_output_shape_and_lengths_copied():
    beta, s_m = _inputs(b=3, t=5, h=4, w=8)
    lengths = [5, 1, 2]
    gpl = build_glyph_pseudo_label(beta, s_m, lengths)
    assert isinstance(gpl, GlyphPseudoLabel)
    assert gpl.s_gt.shape == (3, 6, 4, 8)
    assert gpl.lengths == lengths
    assert gpl.lengths is not lengths       # defensive copy


def test_target_carries_no_gradient():
    beta, s_m = _inputs()
    bt = Tensor(beta, requires_grad=True)
    mt = Tensor(s_m, requires_grad=True)
    n_before = len(T.tape())
    gpl = build_glyph_pseudo_label(bt, mt, [3, 3])
    assert gpl.s_gt.requires_grad is False
    assert len(T.tape()) == n_before        # nothing recorded


def test_accepts_tensors_and_arrays_equally():
    beta, s_m = _inputs()
    a = build_glyph_pseudo_label(beta, s_m, [2, 3]).s_gt.data
    b = build_glyph_pseudo_label(Tensor(beta), Tensor(s_m), [2, 3]).s_gt.data
    np.testing.assert_array_equal(a, b)


def test_pure_function_of_inputs():
    beta, s_m = _inputs()
    a = build_glyph_pseudo_label(beta, s_m, [3, 2]).s_gt.data
    b = build_glyph_pseudo_label(beta, s_m, [3, 2]).s_gt.data
    np.testing.assert_array_equal(a, b)


def test_custom_delta_changes_gate():
    beta, s_m = _inputs()
    loose = build_glyph_pseudo_label(beta, s_m, [3, 3], delta=0.01).s_gt.data
    tight = build_glyph_pseudo_label(beta, s_m, [3, 3], delta=0.29).s_gt.data
    assert loose[:, 1:].sum() > tight[:, 1:].sum()


def test_detach_targets_is_off_tape_copy():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    d = detach_targets(x)
    assert d.requires_grad is False
    np.testing.assert_array_equal(d.data, x.data)
    d.data[0, 0] = 99.0
    assert x.data[0, 0] == 0.0              # no aliasing


@pytest.mark.parametrize("beta_shape,m_shape,lengths", [
    ((2, 3), (2, 1, 4, 6), [3, 3]),         # beta not rank 3
    ((2, 3, 6), (2, 2, 4, 6), [3, 3]),      # mask channel != 1
    ((2, 3, 6), (3, 1, 4, 6), [3, 3]),      # batch mismatch
    ((2, 3, 6), (2, 1, 4, 5), [3, 3]),      # width mismatch
    ((2, 3, 6), (2, 1, 4, 6), [3]),         # wrong length count
    ((2, 3, 6), (2, 1, 4, 6), [3, 4]),      # length beyond steps
    ((2, 3, 6), (2, 1, 4, 6), [3, -1]),     # negative length
])
def test_malformed_inputs_rejected(beta_shape, m_shape, lengths):
    with pytest.raises(ContractError):
        build_glyph_pseudo_label(np.zeros(beta_shape), np.zeros(m_shape), lengths)


def test_counter_increments_per_build():
    from siga.counters import COUNTERS
    beta, s_m = _inputs()
    before = COUNTERS.gpc_builds
    build_glyph_pseudo_label(beta, s_m, [1, 1])
    assert COUNTERS.gpc_builds == before + 1
