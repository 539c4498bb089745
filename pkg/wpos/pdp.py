"""
Energy-detection power delay profiles.

Ray energies are deposited into T_g-wide temporal bins, then each bin power is
drawn from the scaled (non)central chi-square law of an energy detector with
nu = 2 W T_g degrees of freedom:

    eps = (sigma^2 / nu) * X,  X ~ chi2'(nu, delta = nu * E / sigma^2)

so noise-only bins have mean sigma^2 and signal bins sigma^2 + E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelParams, ChannelRealization
from .geometry import SceneConfig, sample_target_locations

CALIBRATION_SAMPLES = 100_000


@dataclass(frozen=True)
class DetectionParams:
    """Energy detector settings; defaults give N_b = 100 bins and nu = 8."""

    bandwidth_hz: float = 2e9
    frame_ns: float = 200.0
    bin_ns: float = 2.0
    snr_db: float = 15.0
    shared_noise: bool = True

    def __post_init__(self):
        if not (self.bandwidth_hz > 0 and self.frame_ns > 0 and self.bin_ns > 0):
            raise ValueError("bandwidth, frame and bin durations must be positive")
        if self.n_bins < 1:
            raise ValueError("frame must hold at least one bin")
        raw_nu = 2 * self.bandwidth_hz * self.bin_ns * 1e-9
        if raw_nu < 1 or abs(raw_nu - round(raw_nu)) > 1e-6:
            raise ValueError(f"2 W T_g must be a positive integer, got {raw_nu:.6g}")

    @property
    def n_bins(self) -> int:
        return int(math.floor(self.frame_ns / self.bin_ns + 1e-9))

    @property
    def nu(self) -> int:
        return int(round(2 * self.bandwidth_hz * self.bin_ns * 1e-9))

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


def deposit_energy(realization: ChannelRealization, detection: DetectionParams) -> np.ndarray:
    """Sum ray energies a^2 into their arrival bins, shape (M, N_b)."""
    arrival = np.asarray(realization.arrival_ns, dtype=float)
    energy = realization.energy
    if np.any(arrival >= detection.frame_ns) or np.any(arrival < 0):
        raise ValueError(f"ray arrival outside the [0, {detection.frame_ns}) ns frame")
    n_sensors = arrival.shape[0]
    n_bins = detection.n_bins
    bins = np.minimum((arrival / detection.bin_ns).astype(int), n_bins - 1)
    flat = (np.arange(n_sensors)[:, None, None] * n_bins + bins).ravel()
    totals = np.bincount(flat, weights=energy.ravel(), minlength=n_sensors * n_bins)
    return totals.reshape(n_sensors, n_bins)


def los_expectation(params: ChannelParams, scene: SceneConfig, targets: np.ndarray) -> np.ndarray:
    """Mean LOS pathloss E[beta_{m,0,0}] per sensor over the given targets."""
    d = np.linalg.norm(targets[:, None, :] - scene.sensors[None, :, :], axis=-1)
    beta = params.ref_power_mw * (d / params.ref_distance_m) ** (-params.pathloss_exp)
    return beta.mean(axis=0)


def calibrate_noise(
    params: ChannelParams,
    scene: SceneConfig,
    detection: DetectionParams,
    rng: np.random.Generator,
    samples: int = CALIBRATION_SAMPLES,
    targets: Optional[np.ndarray] = None,
    per_sensor: Optional[bool] = None,
) -> np.ndarray:
    """Noise level sigma^2_m = E[beta_{m,0,0}] / SNR, shape (M,).

    Shadowing is left out of the expectation (unity). When targets is given
    it replaces the Monte-Carlo draw over the target space.
    """
    if targets is None:
        targets = sample_target_locations(scene, rng, samples)
    expectation = los_expectation(params, scene, np.atleast_2d(np.asarray(targets, dtype=float)))
    if per_sensor is None:
        per_sensor = not detection.shared_noise
    if not per_sensor:
        expectation = np.full_like(expectation, expectation.mean())
    return expectation / detection.snr_linear


def synthesize_pdp(energies, noise, nu: int, rng: np.random.Generator) -> np.ndarray:
    """Draw bin powers for deposited energies (..., N_b) and noise levels broadcastable to (..., 1)."""
    energies = np.asarray(energies, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if np.any(noise <= 0):
        raise ValueError("noise level sigma^2 must be positive")
    if noise.ndim and noise.shape[-1] != 1:
        noise = noise[..., None]
    noncentrality = nu * energies / noise
    draws = rng.noncentral_chisquare(nu, np.broadcast_to(noncentrality, energies.shape))
    return noise / nu * draws


def measure_pdp(
    realization: ChannelRealization,
    detection: DetectionParams,
    noise: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-sensor PDP vectors eps_m for one realization, shape (M, N_b)."""
    return synthesize_pdp(deposit_energy(realization, detection), noise, detection.nu, rng)
