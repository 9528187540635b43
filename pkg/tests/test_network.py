import numpy as np
import pytest

from ssmotion.grid import BevMap, BevSequence, GridSpec
from ssmotion.network import (ParamVector, PredictorConfig, backward, forward,
                              init_params, make_layout, n_params, predict,
                              sequence_features, smooth_l1)


def test_config_rejects_even_kernels():
    with pytest.raises(ValueError, match="odd"):
        PredictorConfig(in_channels=4, hidden=(8,), kernels=(2, 1))


def test_config_kernel_count():
    with pytest.raises(ValueError, match="one kernel"):
        PredictorConfig(in_channels=4, hidden=(8,), kernels=(3,))


def test_n_params_formula():
    cfg = PredictorConfig(in_channels=4, hidden=(8, 8), kernels=(3, 3, 1))
    # 3*3*4*8+8, 3*3*8*8+8, 1*1*8*2+2
    assert n_params(cfg) == 296 + 584 + 18


def test_param_vector_views_partition():
    cfg = PredictorConfig(in_channels=2, hidden=(4,), kernels=(3, 1))
    params = init_params(cfg, seed=1)
    w0 = params.view("conv0.weight")
    assert w0.shape == (3, 3, 2, 4)
    params.view("conv0.bias")[:] = 7.0
    assert np.all(params.values[w0.size:w0.size + 4] == 7.0)  # views alias
    with pytest.raises(KeyError):
        params.view("conv9.weight")


def test_param_vector_length_check():
    cfg = PredictorConfig(in_channels=2, hidden=(), kernels=(1,))
    with pytest.raises(ValueError):
        ParamVector(np.zeros(3), make_layout(cfg))


def test_param_vector_rejects_nan():
    cfg = PredictorConfig(in_channels=2, hidden=(), kernels=(1,))
    bad = np.zeros(n_params(cfg))
    bad[0] = np.nan
    with pytest.raises(ValueError):
        ParamVector(bad, make_layout(cfg))


def test_forward_1x1_is_linear_map():
    cfg = PredictorConfig(in_channels=3, hidden=(), kernels=(1,))
    params = init_params(cfg, seed=0)
    w = params.view("conv0.weight").reshape(3, 2)
    params.view("conv0.bias")[:] = (0.5, -0.5)
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, (5, 7, 3))
    out, _ = forward(params, x, cfg)
    expected = x.reshape(-1, 3) @ w + np.array([0.5, -0.5])
    assert np.allclose(out, expected.reshape(5, 7, 2), atol=1e-12)


def test_forward_3x3_box_filter():
    cfg = PredictorConfig(in_channels=1, hidden=(), kernels=(3,), out_channels=1)
    params = ParamVector(np.concatenate([np.ones(9), [0.0]]), make_layout(cfg))
    x = np.zeros((5, 5, 1))
    x[2, 2, 0] = 1.0
    out, _ = forward(params, x, cfg)
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1.0  # zero-padded box sum
    assert np.array_equal(out[:, :, 0], expected)


def test_forward_hidden_relu():
    cfg = PredictorConfig(in_channels=1, hidden=(1,), kernels=(1, 1), out_channels=1)
    vals = np.array([1.0, -10.0, 1.0, 0.0])  # w0, b0=-10 kills the unit, w1, b1
    params = ParamVector(vals, make_layout(cfg))
    out, _ = forward(params, np.ones((3, 3, 1)), cfg)
    assert np.all(out == 0.0)


def test_forward_shape_validation():
    cfg = PredictorConfig(in_channels=4, hidden=(), kernels=(1,))
    with pytest.raises(ValueError):
        forward(init_params(cfg), np.zeros((3, 3, 2)), cfg)


def test_backward_matches_finite_differences():
    cfg = PredictorConfig(in_channels=3, hidden=(4,), kernels=(3, 1))
    params = init_params(cfg, seed=2)
    rng = np.random.default_rng(3)
    x = rng.normal(0, 1, (6, 6, 3))
    idx = np.array([[0, 0], [2, 3], [5, 5]])
    target = rng.normal(0, 1, (3, 2))

    def loss_of(values):
        p = ParamVector(values, params.layout)
        out, _ = forward(p, x, cfg)
        return smooth_l1(out, target, idx)[0]

    out, cache = forward(params, x, cfg)
    _, dgrid, _ = smooth_l1(out, target, idx)
    grad = backward(params, cache, dgrid, cfg)
    eps = 1e-6
    for i in rng.choice(len(params), 25, replace=False):
        bump = np.zeros(len(params))
        bump[i] = eps
        fd = (loss_of(params.values + bump) - loss_of(params.values - bump)) / (2 * eps)
        assert grad.values[i] == pytest.approx(fd, abs=1e-8, rel=1e-6)


def test_smooth_l1_frozen_values():
    pred = np.zeros((2, 2, 2))
    pred[0, 0] = (0.5, 0.0)
    loss, _, empty = smooth_l1(pred, np.zeros((1, 2)), np.array([[0, 0]]))
    assert loss == 0.0625  # 0.5*0.5^2 averaged over 2 components
    assert not empty
    pred[0, 0] = (2.0, 0.0)
    loss, dgrid, _ = smooth_l1(pred, np.zeros((1, 2)), np.array([[0, 0]]))
    assert loss == 0.75  # (2 - 0.5)/2, linear branch
    assert dgrid[0, 0].tolist() == [0.5, 0.0]  # sign(r)/n


def test_smooth_l1_quadratic_gradient():
    pred = np.zeros((1, 1, 2))
    pred[0, 0] = (0.4, -0.2)
    _, dgrid, _ = smooth_l1(pred, np.zeros((1, 2)), np.array([[0, 0]]))
    assert np.allclose(dgrid[0, 0], [0.2, -0.1])  # r/delta/n


def test_smooth_l1_empty_index():
    loss, dgrid, empty = smooth_l1(np.ones((2, 2, 2)), np.empty((0, 2)),
                                   np.empty((0, 2)))
    assert empty and loss == 0.0 and not dgrid.any()


def _tiny_seq():
    spec = GridSpec(-2, 2, -2, 2, -1, 1, 1.0, 1.0, 1.0)
    rng = np.random.default_rng(0)
    frames = [BevMap((rng.random(spec.shape) < 0.3).astype(np.uint8), i)
              for i in range(3)]
    return BevSequence(frames, spec, 1.0)


def test_sequence_features_stacking():
    seq = _tiny_seq()
    feats = sequence_features(seq)
    assert feats.shape == (4, 4, 6)
    assert np.array_equal(feats[:, :, 4:], seq.frames[2].occupancy)


def test_predict_validity_from_current():
    seq = _tiny_seq()
    cfg = PredictorConfig(in_channels=6, hidden=(4,), kernels=(3, 1))
    field = predict(init_params(cfg), seq, cfg)
    assert np.array_equal(field.validity, seq.current.pillar_mask)
    assert field.displacement.shape == (4, 4, 2)
