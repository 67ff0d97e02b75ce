import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenleaf import autodiff as ad
from greenleaf import blocks as bk
from greenleaf.autodiff import Tensor
from greenleaf.blocks import BlockConfig, ScalingCoefficients

from gradcases import BLOCK_KINDS, block_case, block_setup, randomize, se_params
from oracles import bn_train_oracle, conv_oracle, squeeze_excite_oracle


def labelled(c, n=1, hw=2):
    """Channel i holds the constant value i."""
    return Tensor(np.broadcast_to(np.arange(c, dtype=float)[None, :, None, None], (n, c, hw, hw)).copy())


def channel_labels(t: Tensor) -> list[int]:
    return [int(v) for v in t.data[0, :, 0, 0]]


def zero_weights(params):
    for v in params.values():
        if isinstance(v, Tensor):
            v.data[...] = 0.0
    return params


# ---------------------------------------------------------------- channel shuffle


def test_shuffle_examples():
    assert channel_labels(bk.channel_shuffle(labelled(6), 1)) == list(range(6))
    assert channel_labels(bk.channel_shuffle(labelled(6), 2)) == [0, 3, 1, 4, 2, 5]
    twice = bk.channel_shuffle(bk.channel_shuffle(labelled(6), 2), 3)
    assert channel_labels(twice) == list(range(6))


def test_shuffle_rejects_indivisible():
    with pytest.raises(bk.ConfigurationError):
        bk.channel_shuffle(labelled(7), 2)


@st.composite
def channels_and_group(draw):
    c = draw(st.integers(1, 64))
    g = draw(st.sampled_from([d for d in range(1, c + 1) if c % d == 0]))
    return c, g


@settings(max_examples=200, deadline=None)
@given(channels_and_group())
def test_shuffle_is_a_bijection(cg):
    c, g = cg
    out = channel_labels(bk.channel_shuffle(labelled(c), g))
    assert sorted(out) == list(range(c))


# ---------------------------------------------------------------- depthwise separable


def test_depthwise_separable_matches_composition(rng):
    cin, cout = 3, 5
    p = randomize(bk.init_depthwise_separable(cin, cout, 3, rng), rng)
    x = rng.normal(size=(2, cin, 6, 6))
    out = bk.depthwise_separable(Tensor(x), p, stride=1, training=True, act="relu")
    y = conv_oracle(x, p["dw.weight"].data, None, 1, 1, cin)
    y = np.maximum(bn_train_oracle(y, p["dw_bn.gamma"].data, p["dw_bn.beta"].data), 0)
    y = conv_oracle(y, p["pw.weight"].data, None, 1, 0, 1)
    y = np.maximum(bn_train_oracle(y, p["pw_bn.gamma"].data, p["pw_bn.beta"].data), 0)
    np.testing.assert_allclose(out.data, y, atol=1e-12, rtol=0)


def test_depthwise_separable_param_counts():
    assert bk.depthwise_separable_param_count(32, 64, 3) == 32 * 9 + 32 * 64 == 2336
    assert bk.standard_conv_param_count(32, 64, 3) == 18432
    p = bk.init_depthwise_separable(32, 64, 3, np.random.default_rng(0))
    assert p["dw.weight"].size + p["pw.weight"].size == 2336


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 256), st.integers(2, 256), st.sampled_from([3, 5, 7]))
def test_depthwise_separable_is_cheaper(cin, cout, k):
    assert bk.depthwise_separable_param_count(cin, cout, k) < bk.standard_conv_param_count(cin, cout, k)


@pytest.mark.parametrize("hw,expect", [(8, 4), (7, 4), (5, 3)])
def test_depthwise_separable_stride_two_shape(rng, hw, expect):
    p = bk.init_depthwise_separable(2, 3, 3, rng)
    out = bk.depthwise_separable(Tensor(rng.normal(size=(1, 2, hw, hw))), p, stride=2)
    assert out.shape == (1, 3, expect, expect)


# ---------------------------------------------------------------- inverted residual


def test_inverted_residual_zero_branch_is_identity(rng):
    cfg = BlockConfig(8, 8, stride=1, expansion=6)
    p = zero_weights(bk.init_inverted_residual(cfg, rng))
    for k in p:
        if k.endswith("gamma"):
            p[k].data[...] = 1.0
    x = rng.normal(size=(2, 8, 5, 5))
    for training in (True, False):
        np.testing.assert_array_equal(bk.inverted_residual(Tensor(x), cfg, p, training).data, x)


def test_inverted_residual_hidden_width_and_stride():
    cfg = BlockConfig(16, 24, stride=2, expansion=6)
    assert cfg.hidden_channels == 96 and not cfg.has_residual
    p = bk.init_inverted_residual(cfg, np.random.default_rng(0))
    assert p["expand.weight"].shape == (96, 16, 1, 1)
    out = bk.inverted_residual(Tensor(np.zeros((1, 16, 7, 9))), cfg, p)
    assert out.shape == (1, 24, 4, 5)


def test_inverted_residual_has_linear_projection(rng):
    # with a negative projection BN shift the output must stay negative (no ReLU clamps it)
    cfg = BlockConfig(4, 6, stride=1, expansion=2)
    p = bk.init_inverted_residual(cfg, rng)
    p["project_bn.beta"].data[...] = -3.0
    out = bk.inverted_residual(Tensor(rng.normal(size=(2, 4, 4, 4))), cfg, p, training=True)
    assert out.data.min() < 0


def test_inverted_residual_identity_path_gradient(rng):
    cfg = BlockConfig(6, 6, stride=1, expansion=3)
    p = zero_weights(bk.init_inverted_residual(cfg, rng))
    x = Tensor(rng.normal(size=(2, 6, 4, 4)), requires_grad=True)
    ad.tsum(bk.inverted_residual(x, cfg, p, training=True)).backward()
    assert np.all(x.grad >= 1 - 1e-12)


def test_block_config_validation():
    with pytest.raises(bk.ConfigurationError):
        BlockConfig(4, 4, stride=3)
    assert BlockConfig(4, 4, stride=1).has_residual
    assert not BlockConfig(4, 8, stride=1).has_residual


# ---------------------------------------------------------------- squeeze-excite


def test_se_zero_weights_halve_every_channel(rng):
    x = rng.normal(size=(2, 5, 3, 3))
    out = bk.squeeze_excite(Tensor(x), zero_weights(se_params(5, 2, rng)))
    np.testing.assert_array_equal(out.data, x * 0.5)


def test_se_matches_loop_oracle(rng):
    x = rng.normal(size=(2, 5, 3, 4))
    p = se_params(5, 2, rng)
    out = bk.squeeze_excite(Tensor(x), p)
    assert out.shape == x.shape
    ref = squeeze_excite_oracle(x, *(p[f"se.{a}.{b}"].data for a in ("reduce", "expand")
                                     for b in ("weight", "bias")))
    np.testing.assert_allclose(out.data, ref, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- shuffle unit


def test_shuffle_unit_zero_branch_is_relu_of_input(rng):
    cfg = BlockConfig(24, 24, stride=1, groups=3)
    p = zero_weights(bk.init_shuffle_unit(cfg, rng))
    x = rng.normal(size=(2, 24, 4, 4))
    np.testing.assert_array_equal(bk.shuffle_unit(Tensor(x), cfg, p).data, np.maximum(x, 0))


def test_shuffle_unit_stride_two_concat_arithmetic(rng):
    cfg = BlockConfig(24, 120, stride=2, groups=3)
    p = bk.init_shuffle_unit(cfg, rng)
    assert p["gconv2.weight"].shape[0] == 96
    out = bk.shuffle_unit(Tensor(rng.normal(size=(1, 24, 8, 8))), cfg, p)
    assert out.shape == (1, 120, 4, 4)


def test_shuffle_unit_shuffles_exactly_once(rng, monkeypatch):
    calls = []
    real = bk.channel_shuffle

    def spy(x, g):
        calls.append(g)
        return real(x, g)

    monkeypatch.setattr(bk, "channel_shuffle", spy)
    cfg = BlockConfig(12, 12, stride=1, groups=3)
    bk.shuffle_unit(Tensor(rng.normal(size=(1, 12, 4, 4))), cfg, bk.init_shuffle_unit(cfg, rng))
    assert calls == [3]


@pytest.mark.parametrize("cfg", [BlockConfig(12, 24, stride=1, groups=3),
                                 BlockConfig(10, 24, stride=2, groups=3)])
def test_shuffle_unit_divisibility_errors(cfg):
    with pytest.raises(bk.ConfigurationError):
        bk.init_shuffle_unit(cfg, np.random.default_rng(0))


# ---------------------------------------------------------------- compound scaling


def test_compound_scale_b0_is_identity():
    depths, widths, res = bk.compound_scale(ScalingCoefficients(phi=0), [1, 2, 2], [32, 16, 24], 224)
    assert (depths, widths, res) == ([1, 2, 2], [32, 16, 24], 224)


def test_scaling_constraint_on_canonical_constants():
    c = ScalingCoefficients()
    assert c.flops_factor() == pytest.approx(1.920270, abs=1e-6)
    assert c.satisfies_constraint()


def test_channel_rounding_rule():
    # 35.2 -> nearest multiple of 8 is 32, and 32 >= 0.9 * 35.2, so it stays 32
    assert bk.round_channels(32 * 1.1) == 32
    assert bk.round_channels(3) == 8
    assert bk.round_channels(10) == 16  # 8 would drop below 90% of 10
    depths, widths, res = bk.compound_scale(ScalingCoefficients(phi=1), [1, 2], [32, 320], 224)
    assert depths == [2, 3] and widths == [32, 352] and res == 258


@settings(max_examples=200, deadline=None)
@given(st.floats(1, 4096))
def test_channel_rounding_invariants(c):
    r = bk.round_channels(c)
    assert r % 8 == 0 and r >= 8 and r >= 0.9 * c


# ---------------------------------------------------------------- gradient checks (10 instances each)

BLOCK_GRAD_TOL = 1e-4


@pytest.mark.parametrize("kind", BLOCK_KINDS)
@pytest.mark.parametrize("seed", range(10))
def test_block_gradcheck(kind, seed):
    err = ad.grad_check(*block_case(kind, seed))
    assert err < BLOCK_GRAD_TOL, err


@pytest.mark.parametrize("kind", BLOCK_KINDS)
def test_blocks_keep_batch_and_stay_finite(kind):
    fn, x, p, _ = block_setup(kind, 3)
    out = fn(Tensor(x * 1e3), p)
    assert out.shape[0] == x.shape[0] and ad.is_finite(out)
