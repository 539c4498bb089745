import numpy as np
import pytest

from wpos.nnkernel import (
    Adam,
    Conv2D,
    Dense,
    LayerSpec,
    ModelSpec,
    Network,
    ReLU,
    Sequential,
    TrainingParams,
    backward_and_step,
    build_network,
    evaluate,
    gradient_check,
    softmax,
    softmax_cross_entropy,
    train,
)


def two_branch_spec(n_classes=3, seed=0):
    branch = (LayerSpec("conv", out_channels=2), LayerSpec("relu"), LayerSpec("flatten"))
    head = (LayerSpec("dense", units=5), LayerSpec("relu"), LayerSpec("dense", units=n_classes))
    return ModelSpec("toy", ((1, 3, 4), (1, 3, 4)), (branch, branch), head, n_classes, seed=seed)


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    points = rng.normal(size=(n, 2)) * 0.5 + np.where(labels[:, None] == 1, 2.0, -2.0)
    return points, labels


def logistic_network(seed=0):
    spec = ModelSpec("logistic", ((2,),), ((LayerSpec("flatten"),),), (LayerSpec("dense", units=2),), 2, seed=seed)
    return build_network(spec)


def naive_conv(x, weight, bias, padding):
    n, c, h, w = x.shape
    out_channels, _, kh, kw = weight.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    rows, cols = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
    out = np.zeros((n, out_channels, rows, cols))
    for i in range(rows):
        for j in range(cols):
            patch = padded[:, :, i : i + kh, j : j + kw]
            out[:, :, i, j] = np.tensordot(patch, weight, axes=([1, 2, 3], [1, 2, 3])) + bias
    return out


def test_softmax_rows_sum_to_one():
    logits = np.random.default_rng(0).normal(size=(5, 8)) * 30

    assert np.allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-9)


def test_zero_weights_give_uniform_output():
    network = build_network(two_branch_spec(n_classes=8))
    for param in network.parameters():
        param.value[...] = 0.0
    x = np.random.default_rng(1).normal(size=(4, 1, 3, 4))

    assert np.allclose(network.predict_proba([x, x]), 1.0 / 8)


def test_identical_records_identical_rows():
    network = build_network(two_branch_spec())
    x = np.repeat(np.random.default_rng(2).normal(size=(1, 1, 3, 4)), 2, axis=0)
    probs = network.predict_proba([x, x])

    assert np.array_equal(probs[0], probs[1])


def test_single_dense_orders_probabilities_by_logits():
    dense = Dense(3, 3)
    dense.weight.value[...] = np.eye(3)
    network = Network([Sequential([])], Sequential([dense]), 3)
    probs = network.predict_proba([np.array([[0.5, 2.0, -1.0]])])[0]

    assert np.argsort(probs).tolist() == [2, 0, 1]


def test_cross_entropy_gradient_is_probs_minus_onehot():
    logits = np.random.default_rng(3).normal(size=(4, 5))
    labels = np.array([0, 4, 2, 2])
    loss, probs, grad = softmax_cross_entropy(logits, labels)
    onehot = np.eye(5)[labels]

    assert np.allclose(grad * 4, probs - onehot)
    assert loss == pytest.approx(-np.mean(np.log(probs[np.arange(4), labels])))


def test_identity_kernel_conv():
    conv = Conv2D(1, 1, kernel=(1, 1), padding=0)
    conv.weight.value[...] = 1.0
    x = np.random.default_rng(4).normal(size=(3, 1, 5, 6))

    assert np.array_equal(conv.forward(x), x)


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(5)
    conv = Conv2D(2, 3, kernel=(3, 3), padding=1, rng=rng)
    conv.bias.value[...] = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 4, 5))

    expected = naive_conv(x, conv.weight.value, conv.bias.value, 1)
    assert np.allclose(conv.forward(x), expected)


def test_conv_rejects_wrong_channels():
    with pytest.raises(ValueError):
        Conv2D(2, 3).forward(np.zeros((1, 1, 4, 4)))


def test_network_rejects_wrong_input_count():
    network = build_network(two_branch_spec())

    with pytest.raises(ValueError):
        network.forward([np.zeros((1, 1, 3, 4))])


def test_gradient_check_all_layers():
    network = build_network(two_branch_spec(seed=7))
    rng = np.random.default_rng(8)
    inputs = [rng.normal(size=(2, 1, 3, 4)), rng.normal(size=(2, 1, 3, 4))]

    assert gradient_check(network, inputs, [0, 2]) < 1e-4


def test_gradient_check_unpadded_conv():
    branch = (LayerSpec("conv", out_channels=2, kernel=(2, 3), padding=0), LayerSpec("relu"), LayerSpec("flatten"))
    spec = ModelSpec("narrow", ((2, 4, 5),), (branch,), (LayerSpec("dense", units=3),), 3, seed=3)
    network = build_network(spec)
    x = np.random.default_rng(9).normal(size=(2, 2, 4, 5))

    assert gradient_check(network, [x], [1, 0]) < 1e-4


def test_zero_learning_rate_leaves_weights():
    network = build_network(two_branch_spec())
    before = network.state()
    optimizer = Adam(network.parameters(), lr=0.0)
    x = np.random.default_rng(10).normal(size=(3, 1, 3, 4))
    backward_and_step(network, optimizer, [x, x], np.array([0, 1, 2]))

    for name, value in network.state().items():
        assert np.array_equal(value, before[name])


def test_adam_without_momentum_follows_gradient_sign():
    network = logistic_network(seed=1)
    points, labels = blobs(32)
    before = network.state()
    optimizer = Adam(network.parameters(), lr=0.01, beta1=0.0, beta2=0.0)
    backward_and_step(network, optimizer, [points], labels)

    for param in network.parameters():
        step = param.value - before[param.name]
        significant = np.abs(param.grad) > 1e-6
        assert np.array_equal(np.sign(step[significant]), -np.sign(param.grad[significant]))


def test_loss_decreases_on_separable_data():
    network = logistic_network(seed=2)
    points, labels = blobs(64, seed=1)
    optimizer = Adam(network.parameters(), lr=0.01)
    losses = [backward_and_step(network, optimizer, [points], labels) for _ in range(20)]

    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_non_finite_loss_raises():
    network = logistic_network()
    network.parameters()[0].value[...] = np.nan
    points, labels = blobs(8)

    with pytest.raises(RuntimeError):
        backward_and_step(network, Adam(network.parameters()), [points], labels)


def test_debug_mode_flags_non_finite_activations():
    network = build_network(two_branch_spec(), debug=True)
    network.parameters()[0].value[...] = np.inf
    x = np.ones((1, 1, 3, 4))

    with pytest.raises(RuntimeError):
        network.forward([x, x])


def test_training_is_deterministic():
    points, labels = blobs(120, seed=3)
    params = TrainingParams(batch_size=16, epochs=3, learning_rate=0.01)
    first = logistic_network(seed=4)
    second = logistic_network(seed=4)
    history_a = train(first, [points], labels, params, seed=5)
    history_b = train(second, [points], labels, params, seed=5)

    assert [(h.epoch, h.loss, h.train_acc) for h in history_a] == [(h.epoch, h.loss, h.train_acc) for h in history_b]
    for name, value in first.state().items():
        assert np.array_equal(value, second.state()[name])


def test_zero_epochs_is_a_no_op():
    network = logistic_network(seed=6)
    before = network.state()
    points, labels = blobs(20)
    history = train(network, [points], labels, TrainingParams(epochs=0))

    assert history == []
    for name, value in network.state().items():
        assert np.array_equal(value, before[name])


def test_training_learns_blobs():
    points, labels = blobs(400, seed=7)
    network = logistic_network(seed=8)
    history = train(network, [points[:300]], labels[:300], TrainingParams(batch_size=32, epochs=5, learning_rate=0.05),
                    seed=9, val_inputs=[points[300:]], val_labels=labels[300:])

    assert len(history) == 5
    assert history[-1].val_acc > 0.95
    assert evaluate(network, [points[300:]], labels[300:]) == history[-1].val_acc


def test_sharded_training_runs():
    points, labels = blobs(400, seed=10)
    network = logistic_network(seed=11)
    params = TrainingParams(batch_size=64, epochs=5, learning_rate=0.05, shards=2)
    history = train(network, [points], labels, params, seed=12)

    assert history[-1].train_acc > 0.95


def test_state_roundtrip_and_mismatch():
    network = logistic_network(seed=13)
    other = logistic_network(seed=14)
    other.load_state(network.state())

    assert all(np.array_equal(a.value, b.value) for a, b in zip(network.parameters(), other.parameters()))
    with pytest.raises(RuntimeError):
        other.load_state({"head.0.weight": np.zeros((3, 3))})


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("bad", ((2,),), ((LayerSpec("flatten"),),), (LayerSpec("dense", units=3),), 2)
    with pytest.raises(ValueError):
        LayerSpec("pool")
    with pytest.raises(ValueError):
        build_network(ModelSpec("bad", ((2,),), ((LayerSpec("conv", out_channels=2),),),
                                (LayerSpec("dense", units=2),), 2))


def test_relu_backward_masks():
    relu = ReLU()
    out = relu.forward(np.array([[-1.0, 2.0]]))

    assert out.tolist() == [[0.0, 2.0]]
    assert relu.backward(np.array([[5.0, 5.0]])).tolist() == [[0.0, 5.0]]
