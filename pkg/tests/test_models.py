import numpy as np
import pytest

from wpos.models import (
    MODEL_KINDS,
    build_model,
    classification_rate,
    feature_dim,
    fit_normalization,
    network_inputs,
    raw_inputs,
)
from wpos.nnkernel import build_network, gradient_check
from wpos.pdp import synthesize_pdp

M, N_B, N_Z = 12, 100, 8


def noisy_pdp(n=6, seed=0):
    rng = np.random.default_rng(seed)
    energies = np.zeros((n, M, N_B))
    energies[:, :, 10] = 50.0
    return synthesize_pdp(energies, np.array(1.0), 8, rng)


def test_feature_dims():
    assert feature_dim("pnn", M, 5, N_B) == 120
    assert [feature_dim("pnn", M, F, N_B) for F in (4, 10)] == [96, 240]
    assert feature_dim("pdp-cnn", M, 5, N_B) == 1200
    assert feature_dim("toa-rss", M, 5, N_B) == 24
    with pytest.raises(ValueError):
        feature_dim("svm", M, 5, N_B)


def test_pnn_input_is_small_fraction_of_pdp():
    for F in range(4, 10):
        assert feature_dim("pnn", M, F, N_B) / feature_dim("pdp-cnn", M, F, N_B) < 0.2
    assert feature_dim("pnn", M, 10, N_B) <= 0.2 * feature_dim("pdp-cnn", M, 10, N_B)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_forward_shapes(kind):
    pdp = noisy_pdp()
    powers, indices = raw_inputs(kind, pdp, np.ones(M), 8, 5)
    stats = fit_normalization(kind, powers, indices)
    inputs = network_inputs(kind, powers, indices, stats)
    spec = build_model(kind, M, 5, N_B, N_Z, seed=1, widths=(2,), hidden=4)
    network = build_network(spec)
    probs = network.predict_proba(inputs)

    assert [x.shape[1:] for x in inputs] == list(spec.input_shapes)
    assert probs.shape == (6, N_Z)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_unknown_model_kind():
    with pytest.raises(ValueError):
        build_model("svm", M, 5, N_B, N_Z)


def test_pnn_rejects_zero_f():
    with pytest.raises(ValueError):
        build_model("pnn", M, 0, N_B, N_Z)


def test_pnn_zero_weights_uniform():
    network = build_network(build_model("pnn", M, 5, N_B, N_Z, widths=(2,), hidden=4))
    for param in network.parameters():
        param.value[...] = 0.0
    powers, indices = raw_inputs("pnn", noisy_pdp(), None, 8, 5)
    inputs = network_inputs("pnn", powers, indices, fit_normalization("pnn", powers, indices))

    assert np.allclose(network.predict_proba(inputs), 1.0 / N_Z)


def test_pdp_cnn_gradient_check_small():
    network = build_network(build_model("pdp-cnn", 2, 3, 6, 3, seed=4, widths=(2,), hidden=4))
    x = np.random.default_rng(5).normal(size=(2, 1, 2, 6))

    assert gradient_check(network, [x], [0, 2]) < 1e-4


def test_pdp_cnn_has_empty_index_domain():
    pdp = noisy_pdp(3)
    powers, indices = raw_inputs("pdp-cnn", pdp, None, 8, 5)
    stats = fit_normalization("pdp-cnn", powers, indices)

    assert indices.shape == (3, M, 0)
    assert stats.index_mean == 0.0 and stats.index_std == 1.0
    assert network_inputs("pdp-cnn", powers, indices, stats)[0].shape == (3, 1, M, N_B)


def test_toa_rss_inputs():
    powers, indices = raw_inputs("toa-rss", noisy_pdp(4), np.ones(M), 8, 5)
    inputs = network_inputs("toa-rss", powers, indices, fit_normalization("toa-rss", powers, indices))

    assert powers.shape == indices.shape == (4, M)
    assert np.allclose(powers, noisy_pdp(4).sum(axis=-1))
    assert np.all(indices <= 10)
    assert inputs[0].shape == (4, 2 * M)


def test_classification_rate():
    assert classification_rate([0, 1, 2, 3], [0, 1, 0, 0]) == 50.0
    assert classification_rate(np.arange(5), np.arange(5)) == 100.0
    with pytest.raises(ValueError):
        classification_rate([0, 1], [0])
    with pytest.raises(ValueError):
        classification_rate([], [])


def test_pnn_inputs_are_assembled_matrices():
    powers, indices = raw_inputs("pnn", noisy_pdp(3), None, 8, 4)
    stats = fit_normalization("pnn", powers, indices)
    energy, bins = network_inputs("pnn", powers, indices, stats)

    assert energy.shape == bins.shape == (3, 1, M, 4)
    assert np.allclose(energy[:, 0], (powers - stats.power_mean) / stats.power_std)
    assert np.allclose(bins[:, 0], (indices - stats.index_mean) / stats.index_std)
    assert energy.mean() == pytest.approx(0.0, abs=1e-9)
    assert bins.std() == pytest.approx(1.0, abs=1e-9)
