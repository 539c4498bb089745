"""
Minimum description features: the F largest bin powers of each sensor's PDP
and the bins they were measured in, plus the TOA/RSS baseline features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

TOA_SIGMAS = 4.0


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    """Ordered powers and bin indices, both (M, F), with the zone label.

    zone is None for unlabelled records at inference time.
    """

    powers: np.ndarray
    indices: np.ndarray
    zone: Optional[int] = None

    def __post_init__(self):
        if self.powers.shape != self.indices.shape or self.powers.ndim != 2:
            raise ValueError("powers and indices must both have shape (M, F)")

    @property
    def F(self) -> int:
        return int(self.powers.shape[1])

    @property
    def M(self) -> int:
        return int(self.powers.shape[0])

    @property
    def size(self) -> int:
        return 2 * self.F * self.M


def extract_features(pdp, F: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top-F powers (non-increasing) and their bins along the last axis.

    Ties keep the smaller bin index first.
    """
    pdp = np.asarray(pdp, dtype=float)
    n_bins = pdp.shape[-1]
    if not 1 <= F <= n_bins:
        raise ValueError(f"F must lie in [1, {n_bins}], got {F}")
    order = np.argsort(-pdp, axis=-1, kind="stable")[..., :F]
    return np.take_along_axis(pdp, order, axis=-1), order


def feature_records(powers, indices, zones=None) -> List[FeatureRecord]:
    """Split stacked (n, M, F) power and index arrays into per-record features."""
    powers = np.asarray(powers, dtype=float)
    indices = np.asarray(indices)
    if powers.shape != indices.shape or powers.ndim != 3:
        raise ValueError(f"expected matching (n, M, F) arrays, got {powers.shape} and {indices.shape}")
    labels = [None] * len(powers) if zones is None else [int(zone) for zone in zones]
    if len(labels) != len(powers):
        raise ValueError("one zone label per record is required")
    return [FeatureRecord(p, b, zone) for p, b, zone in zip(powers, indices, labels)]


def dimension_ratio(F: int, n_bins: int) -> float:
    """Size of the 2FM feature set relative to the M x N_b PDP."""
    return 2 * F / n_bins


@dataclass(frozen=True)
class NormalizationStats:
    """Global scalar z-score parameters per domain, fitted on training data."""

    power_mean: float
    power_std: float
    index_mean: float
    index_std: float

    def __post_init__(self):
        if not (self.power_std > 0 and self.index_std > 0):
            raise ValueError("normalization std must be positive in both domains")

    @classmethod
    def fit(cls, powers, indices) -> "NormalizationStats":
        powers = np.asarray(powers, dtype=float)
        indices = np.asarray(indices, dtype=float)
        return cls(
            float(powers.mean()),
            float(powers.std()),
            float(indices.mean()),
            float(indices.std()),
        )

    @classmethod
    def identity(cls) -> "NormalizationStats":
        return cls(0.0, 1.0, 0.0, 1.0)

    def normalize(self, powers, indices) -> Tuple[np.ndarray, np.ndarray]:
        powers = (np.asarray(powers, dtype=float) - self.power_mean) / self.power_std
        indices = (np.asarray(indices, dtype=float) - self.index_mean) / self.index_std
        return powers, indices

    def to_dict(self):
        return {
            "power_mean": self.power_mean,
            "power_std": self.power_std,
            "index_mean": self.index_mean,
            "index_std": self.index_std,
        }


def assemble_matrices(
    records: Sequence[FeatureRecord],
    stats: NormalizationStats,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack normalized E and B matrices, each of shape (n, M, F)."""
    if not records:
        raise ValueError("no records to assemble")
    shape = records[0].powers.shape
    for record in records:
        if record.powers.shape != shape:
            raise ValueError(f"record shape {record.powers.shape} does not match {shape}")
    powers = np.stack([record.powers for record in records])
    indices = np.stack([record.indices for record in records])
    return stats.normalize(powers, indices)


def toa_threshold(noise, nu: int) -> np.ndarray:
    """Noise-bin mean plus four noise-bin standard deviations."""
    noise = np.asarray(noise, dtype=float)
    return noise + TOA_SIGMAS * noise * np.sqrt(2.0 / nu)


def toa_rss_features(pdp, noise, nu: int) -> Tuple[np.ndarray, np.ndarray]:
    """First threshold-crossing bin (N_b if none) and total power per sensor.

    pdp has shape (..., M, N_b); noise broadcasts against (..., M).
    """
    pdp = np.asarray(pdp, dtype=float)
    n_bins = pdp.shape[-1]
    threshold = np.broadcast_to(toa_threshold(noise, nu), pdp.shape[:-1])
    crossed = pdp > threshold[..., None]
    toa = np.where(crossed.any(axis=-1), crossed.argmax(axis=-1), n_bins)
    rss = pdp.sum(axis=-1)
    return toa, rss
