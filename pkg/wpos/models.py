"""
The three zone classifiers and their input preparation.

  pnn      two-branch network over the E (powers) and B (bin indices) matrices
  pdp-cnn  single-branch network over the raw M x N_b PDP image
  toa-rss  MLP over the 2M vector of TOA estimates and RSS values

All three end in dense(N_z) logits; argmax of the softmax is the zone estimate.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .features import (
    NormalizationStats,
    assemble_matrices,
    extract_features,
    feature_records,
    toa_rss_features,
)
from .nnkernel import LayerSpec, ModelSpec, TrainingParams

MODEL_KINDS = ("pnn", "pdp-cnn", "toa-rss")
CONV_WIDTHS = (8, 16)
HIDDEN_UNITS = 128
MLP_UNITS = 64


def _conv_branch(widths: Sequence[int], kernel: Tuple[int, int] = (3, 3)) -> Tuple[LayerSpec, ...]:
    layers: List[LayerSpec] = []
    for width in widths:
        layers.append(LayerSpec("conv", out_channels=width, kernel=kernel, padding=kernel[0] // 2))
        layers.append(LayerSpec("relu"))
    layers.append(LayerSpec("flatten"))
    return tuple(layers)


def _classifier_head(hidden: Sequence[int], n_zones: int) -> Tuple[LayerSpec, ...]:
    layers: List[LayerSpec] = []
    for units in hidden:
        layers += [LayerSpec("dense", units=units), LayerSpec("relu")]
    layers.append(LayerSpec("dense", units=n_zones))
    return tuple(layers)


def build_pnn(
    M: int,
    F: int,
    N_z: int,
    seed: int = 0,
    training: TrainingParams = TrainingParams(),
    widths: Sequence[int] = CONV_WIDTHS,
    hidden: int = HIDDEN_UNITS,
) -> ModelSpec:
    """
    Feature network: one convolution branch each for the energy and bin
    matrices (both M x F), concatenated into a dense head with N_z logits.

    Args:
        M: sensors.
        F: features per sensor.
        N_z: zones (output classes).
        seed: weight initialization seed.
        widths: output channels of the convolution layers.
        hidden: units of the dense layer before the output.
    """
    if F < 1:
        raise ValueError(f"F must be >= 1, got {F}")
    branch = _conv_branch(widths)
    return ModelSpec(
        name="pnn",
        input_shapes=((1, M, F), (1, M, F)),
        branches=(branch, branch),
        head=_classifier_head((hidden,), N_z),
        n_classes=N_z,
        seed=seed,
        training=training,
    )


def build_pdp_cnn(
    M: int,
    N_b: int,
    N_z: int,
    seed: int = 0,
    training: TrainingParams = TrainingParams(),
    widths: Sequence[int] = CONV_WIDTHS,
    hidden: int = HIDDEN_UNITS,
) -> ModelSpec:
    """Same branch and head as build_pnn applied to the full M x N_b PDP."""
    return ModelSpec(
        name="pdp-cnn",
        input_shapes=((1, M, N_b),),
        branches=(_conv_branch(widths),),
        head=_classifier_head((hidden,), N_z),
        n_classes=N_z,
        seed=seed,
        training=training,
    )


def build_toa_rss_mlp(
    M: int,
    N_z: int,
    seed: int = 0,
    training: TrainingParams = TrainingParams(),
    hidden: int = MLP_UNITS,
) -> ModelSpec:
    return ModelSpec(
        name="toa-rss",
        input_shapes=((2 * M,),),
        branches=((LayerSpec("flatten"),),),
        head=_classifier_head((hidden, hidden), N_z),
        n_classes=N_z,
        seed=seed,
        training=training,
    )


def build_model(
    kind: str,
    M: int,
    F: int,
    N_b: int,
    N_z: int,
    seed: int = 0,
    training: TrainingParams = TrainingParams(),
    widths: Sequence[int] = CONV_WIDTHS,
    hidden: int = HIDDEN_UNITS,
) -> ModelSpec:
    if kind == "pnn":
        return build_pnn(M, F, N_z, seed, training, widths, hidden)
    if kind == "pdp-cnn":
        return build_pdp_cnn(M, N_b, N_z, seed, training, widths, hidden)
    if kind == "toa-rss":
        return build_toa_rss_mlp(M, N_z, seed, training)
    raise ValueError(f"unknown model {kind!r}; expected one of {', '.join(MODEL_KINDS)}")


def feature_dim(kind: str, M: int, F: int, N_b: int) -> int:
    """Per-record input size: 2FM, M N_b or 2M."""
    if kind == "pnn":
        return 2 * F * M
    if kind == "pdp-cnn":
        return M * N_b
    if kind == "toa-rss":
        return 2 * M
    raise ValueError(f"unknown model {kind!r}")


def raw_inputs(kind: str, pdp: np.ndarray, noise: np.ndarray, nu: int, F: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unnormalized (power-domain, index-domain) arrays for a model kind.

    pnn gives the top-F powers and bins, pdp-cnn the PDP itself with an empty
    index domain, toa-rss the linear RSS and the TOA bins.
    """
    pdp = np.asarray(pdp, dtype=float)
    if kind == "pnn":
        return extract_features(pdp, F)
    if kind == "pdp-cnn":
        return pdp, np.zeros(pdp.shape[:-1] + (0,))
    if kind == "toa-rss":
        toa, rss = toa_rss_features(pdp, noise, nu)
        return rss, toa.astype(float)
    raise ValueError(f"unknown model {kind!r}")


def fit_normalization(kind: str, powers: np.ndarray, indices: np.ndarray) -> NormalizationStats:
    """z-score parameters from training inputs; the empty pdp-cnn index domain gets identity."""
    if indices.size == 0:
        power = NormalizationStats.fit(powers, np.array([0.0, 1.0]))
        return NormalizationStats(power.power_mean, power.power_std, 0.0, 1.0)
    return NormalizationStats.fit(powers, indices)


def network_inputs(kind: str, powers: np.ndarray, indices: np.ndarray, stats: NormalizationStats) -> List[np.ndarray]:
    """Normalized arrays shaped for the network branches of a model kind.

    pnn inputs go through the per-record E/B matrix assembly.
    """
    if kind == "pnn":
        energy, bins = assemble_matrices(feature_records(powers, indices), stats)
        return [energy[:, None, :, :], bins[:, None, :, :]]
    powers, indices = stats.normalize(powers, indices)
    if kind == "pdp-cnn":
        return [powers[:, None, :, :]]
    if kind == "toa-rss":
        return [np.concatenate((indices, powers), axis=1)]
    raise ValueError(f"unknown model {kind!r}")


def classification_rate(predicted, labels) -> float:
    """Percentage of records whose predicted zone equals the true zone."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ValueError("prediction and label shapes differ")
    if labels.size == 0:
        raise ValueError("no records to score")
    return float(100.0 * np.mean(predicted == labels))
