"""MLP forward/backward, Adam training, and head retraining variants."""

import numpy as np
import pytest

from oib.errors import DimensionError, NumericalError
from oib.inference_net import (MlpModel, TrainConfig, _batch_loss_grads,
                               accuracy, extract_l0, finetune_head, forward,
                               forward_from_layer, head_logits, head_model,
                               init_mlp, make_regression_targets,
                               retrain_head, train, train_head_on_z,
                               train_multi_rho_head)


def blob_data(seed, n=240, d=6, classes=3):
    """Linearly separable class blobs."""
    rng = np.random.default_rng(seed)
    centers = 4.0 * rng.standard_normal((classes, d))
    labels = rng.integers(0, classes, size=n)
    x = centers[labels] + rng.standard_normal((n, d))
    return x.astype(np.float32), labels


def test_init_mlp_he_uniform_and_reproducible():
    a = init_mlp([8, 5, 3], seed=0)
    b = init_mlp([8, 5, 3], seed=0)
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)
    assert a.dtype == np.float32
    assert a.layer_sizes == [8, 5, 3]
    w0, b0 = a.layers[0]
    assert np.max(np.abs(w0)) <= np.sqrt(6.0 / 8)
    assert np.all(b0 == 0)
    c = init_mlp([8, 5, 3], seed=1)
    assert not np.array_equal(c.layers[0][0], w0)


def test_model_layer_chaining_is_validated():
    w1 = np.zeros((5, 8), dtype=np.float32)
    w2 = np.zeros((3, 4), dtype=np.float32)  # expects 4, gets 5
    with pytest.raises(DimensionError):
        MlpModel([(w1, np.zeros(5, np.float32)), (w2, np.zeros(3, np.float32))])
    with pytest.raises(DimensionError):
        MlpModel([])


def test_forward_matches_manual_relu_chain():
    model = init_mlp([4, 3, 2], seed=2)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((7, 4)).astype(np.float32)
    (w0, b0), (w1, b1) = model.layers
    manual = np.maximum(x @ w0.T + b0, 0) @ w1.T + b1
    np.testing.assert_array_equal(forward(model, x), manual)
    # single rows hit a different BLAS kernel (dot vs gemm), so allow ulps
    np.testing.assert_allclose(forward(model, x[0]), manual[0],
                               rtol=1e-6, atol=1e-6)
    with pytest.raises(DimensionError):
        forward(model, np.zeros(5))


def test_forward_from_layer_matches_full_pass():
    model = init_mlp([6, 5, 4, 3], seed=4)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((9, 6)).astype(np.float32)
    pre = x @ model.layers[0][0].T + model.layers[0][1]
    np.testing.assert_array_equal(forward_from_layer(model, 1, pre),
                                  forward(model, x))
    np.testing.assert_array_equal(forward_from_layer(model, 0, x),
                                  forward(model, x))
    with pytest.raises(DimensionError):
        forward_from_layer(model, 4, pre)


def test_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    sizes = [6, 5, 4, 3]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append((rng.standard_normal((fan_out, fan_in)),
                       rng.standard_normal(fan_out)))
    xb = rng.standard_normal((11, 6))
    yb = rng.integers(0, 3, size=11)
    _, grads = _batch_loss_grads(layers, xb, yb)
    eps = 1e-6
    worst = 0.0
    for li, (w, b) in enumerate(layers):
        for arr, g in ((w, grads[li][0]), (b, grads[li][1])):
            flat = arr.ravel()
            for k in range(flat.size):
                keep = flat[k]
                flat[k] = keep + eps
                up, _ = _batch_loss_grads(layers, xb, yb)
                flat[k] = keep - eps
                down, _ = _batch_loss_grads(layers, xb, yb)
                flat[k] = keep
                fd = (up - down) / (2.0 * eps)
                ga = g.ravel()[k]
                rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-10)
                worst = max(worst, rel)
    assert worst < 1e-4


def test_training_reduces_loss_and_is_bitwise_reproducible():
    x, labels = blob_data(7)
    cfg = TrainConfig(epochs=8, learning_rate=1e-2, batch_size=32, seed=1)
    model = init_mlp([6, 16, 3], seed=0)
    trained1, losses1 = train(model, x, labels, cfg)
    trained2, losses2 = train(model, x, labels, cfg)
    assert losses1 == losses2
    for (w1, b1), (w2, b2) in zip(trained1.layers, trained2.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)
    assert losses1[-1] < 0.5 * losses1[0]
    assert accuracy(trained1, x, labels) > 0.9
    # the input model is left untouched
    assert np.array_equal(model.layers[0][0], init_mlp([6, 16, 3], 0).layers[0][0])


def test_zero_epochs_and_zero_learning_rate_keep_weights():
    x, labels = blob_data(8)
    model = init_mlp([6, 8, 3], seed=0)
    for cfg in (TrainConfig(epochs=0, seed=1),
                TrainConfig(epochs=3, learning_rate=0.0, seed=1)):
        trained, _ = train(model, x, labels, cfg)
        for (w1, b1), (w2, b2) in zip(trained.layers, model.layers):
            assert np.array_equal(w1, w2)
            assert np.array_equal(b1, b2)


def test_learning_rate_decay_matches_rescaled_rate():
    x, labels = blob_data(9)
    model = init_mlp([6, 8, 3], seed=0)
    lr = 1e-2
    decayed, _ = train(model, x, labels,
                       TrainConfig(epochs=4, learning_rate=lr, seed=2,
                                   lr_decay_at=0, lr_decay_factor=0.1))
    direct, _ = train(model, x, labels,
                      TrainConfig(epochs=4, learning_rate=lr * 0.1, seed=2))
    for (w1, b1), (w2, b2) in zip(decayed.layers, direct.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)


def test_non_finite_loss_raises():
    x, labels = blob_data(10)
    x = x.copy()
    x[0, 0] = np.nan
    model = init_mlp([6, 8, 3], seed=0)
    with pytest.raises(NumericalError, match="diverged"):
        train(model, x, labels, TrainConfig(epochs=1, seed=1))


def test_impossible_min_delta_returns_initial_weights():
    x, labels = blob_data(11)
    model = init_mlp([6, 8, 3], seed=0)
    cfg = TrainConfig(epochs=4, learning_rate=1e-2, seed=3,
                      val_fraction=0.25, min_delta=1.0)
    trained, _ = train(model, x, labels, cfg)
    for (w1, b1), (w2, b2) in zip(trained.layers, model.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)


def test_validation_early_stopping_adopts_improvements():
    x, labels = blob_data(12)
    model = init_mlp([6, 16, 3], seed=0)
    cfg = TrainConfig(epochs=10, learning_rate=1e-2, seed=4,
                      val_fraction=0.25, min_delta=0.0)
    trained, _ = train(model, x, labels, cfg)
    assert not np.array_equal(trained.layers[0][0], model.layers[0][0])
    assert accuracy(trained, x, labels) > accuracy(model, x, labels)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(adam_beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)


def test_make_regression_targets_default_noise_scale():
    model = init_mlp([6, 4, 3], seed=0)
    rng = np.random.default_rng(13)
    x = rng.standard_normal((300, 6))
    targets = make_regression_targets(model, x, seed=21)
    w0, b0 = extract_l0(model)
    pre = x @ w0.astype(np.float64).T + b0.astype(np.float64)
    want_lambda = 0.1 * np.sqrt(np.mean(pre.var(axis=0)))
    assert targets.noise_lambda == pytest.approx(want_lambda, rel=1e-12)
    noise = targets.y_tilde - pre
    assert np.std(noise) == pytest.approx(targets.noise_lambda, rel=0.1)
    again = make_regression_targets(model, x, seed=21)
    np.testing.assert_array_equal(again.y_tilde, targets.y_tilde)
    clean = make_regression_targets(model, x, noise_lambda=0.0)
    np.testing.assert_array_equal(clean.y_tilde, pre)
    assert clean.noise_lambda == 0.0


def test_head_retraining_on_reconstructions():
    x, labels = blob_data(14, n=300)
    model = init_mlp([6, 16, 8, 3], seed=0)
    model, _ = train(model, x, labels,
                     TrainConfig(epochs=6, learning_rate=1e-2, seed=1))
    w0, b0 = extract_l0(model)
    pre = x @ w0.T + b0
    # corrupt the pre-activations, then let the head adapt
    noisy = pre + 0.5 * np.random.default_rng(15).standard_normal(pre.shape)
    head = head_model(model)
    base_acc = float(np.mean(head_logits(head, noisy).argmax(1) == labels))
    tuned = retrain_head(model, noisy, labels,
                         TrainConfig(epochs=6, learning_rate=1e-3, seed=2))
    tuned_acc = float(np.mean(head_logits(tuned, noisy).argmax(1) == labels))
    assert tuned_acc >= base_acc
    assert tuned.layer_sizes == model.layer_sizes[1:]


def test_single_pool_multi_rho_equals_plain_finetune():
    # with one pool no pool draws are made, so the random streams align
    x, labels = blob_data(16, n=200)
    model = init_mlp([6, 10, 3], seed=0)
    pre = x @ model.layers[0][0].T + model.layers[0][1]
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, seed=5)
    multi = train_multi_rho_head(model, {40: pre}, labels, cfg)
    plain = finetune_head(head_model(model), pre, labels, cfg)
    for (w1, b1), (w2, b2) in zip(multi.layers, plain.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)


def test_multi_rho_head_mixes_pools_deterministically():
    x, labels = blob_data(17, n=200)
    model = init_mlp([6, 10, 3], seed=0)
    pre = x @ model.layers[0][0].T + model.layers[0][1]
    pools = {10: pre, 20: pre + 0.1, 30: pre - 0.1}
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, seed=6)
    a = train_multi_rho_head(model, pools, labels, cfg)
    b = train_multi_rho_head(model, pools, labels, cfg)
    for (w1, b1), (w2, b2) in zip(a.layers, b.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)
    with pytest.raises(ValueError):
        train_multi_rho_head(model, {}, labels, cfg)


def test_train_head_on_z_checks_width():
    x, labels = blob_data(18, n=120)
    z = x[:, :4]
    cfg = TrainConfig(epochs=2, seed=7)
    head = train_head_on_z(z, labels, [4, 8, 3], cfg)
    assert head.layer_sizes == [4, 8, 3]
    with pytest.raises(DimensionError):
        train_head_on_z(z, labels, [5, 8, 3], cfg)
