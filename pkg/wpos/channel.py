"""
Clustered UWB multipath channel.

A Scenario freezes the environment (cluster positions, shadowing); a
ChannelRealization is one measurement of that environment for a target:
per sensor, per path and per ray arrival times and Nakagami amplitudes.
Delays are in nanoseconds, powers in milliwatts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .geometry import SceneConfig, distances, sample_cylinder

log = logging.getLogger(__name__)

MIN_NAKAGAMI_MU = 0.5
MAX_RESAMPLE = 100


@dataclass(frozen=True)
class ChannelParams:
    """Parameters of the clustered channel (residential UWB defaults)."""

    mean_clusters: float = 3.0
    rays: int = 6
    kappa_ns: float = 1.5
    path_decay_ns: float = 25.0
    ray_decay_ns: float = 5.0
    pathloss_exp: float = 2.0
    ref_power_dbm: float = -45.0
    ref_distance_m: float = 1.0
    shadow_var_db: float = 3.0
    nakagami_mu_mean_db: float = 0.67
    nakagami_mu_var_db: float = 0.28

    def __post_init__(self):
        if self.mean_clusters < 0:
            raise ValueError("mean_clusters must be non-negative")
        if self.rays < 1:
            raise ValueError("rays must be at least 1")
        for name in (
            "kappa_ns",
            "path_decay_ns",
            "ray_decay_ns",
            "pathloss_exp",
            "ref_distance_m",
            "shadow_var_db",
            "nakagami_mu_var_db",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def ref_power_mw(self) -> float:
        return 10.0 ** (self.ref_power_dbm / 10.0)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Frozen environment: cluster locations (L, 3) and linear shadowing."""

    cluster_locations: np.ndarray
    sensor_shadowing: np.ndarray
    path_shadowing: np.ndarray
    los_enabled: bool = True

    @property
    def n_clusters(self) -> int:
        return int(len(self.cluster_locations))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cluster_locations": np.asarray(self.cluster_locations).tolist(),
            "sensor_shadowing": np.asarray(self.sensor_shadowing).tolist(),
            "path_shadowing": np.asarray(self.path_shadowing).tolist(),
            "los_enabled": bool(self.los_enabled),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Scenario":
        clusters = np.asarray(payload["cluster_locations"], dtype=float).reshape(-1, 3)
        sensor_shadowing = np.asarray(payload["sensor_shadowing"], dtype=float)
        path_shadowing = np.asarray(payload["path_shadowing"], dtype=float)
        if len(path_shadowing) != len(clusters) + 1:
            raise ValueError("path_shadowing must have one entry per path (L + 1)")
        if np.any(sensor_shadowing <= 0) or np.any(path_shadowing <= 0):
            raise ValueError("shadowing values must be positive")
        return cls(clusters, sensor_shadowing, path_shadowing, bool(payload.get("los_enabled", True)))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per (sensor, path, ray) arrays of shape (M, L + 1, K)."""

    arrival_ns: np.ndarray
    amplitude: np.ndarray
    beta: np.ndarray
    phase: np.ndarray
    distance_m: np.ndarray

    @property
    def energy(self) -> np.ndarray:
        return self.amplitude ** 2


def lognormal_db(var_db: float, rng: np.random.Generator, size, mean_db: float = 0.0) -> np.ndarray:
    """Linear-scale draws whose dB value is Normal(mean_db, var_db)."""
    return 10.0 ** (rng.normal(mean_db, math.sqrt(var_db), size) / 10.0)


def _max_geometric_delay(cluster: np.ndarray, scene: SceneConfig) -> float:
    """Upper bound on d_m/c + T_{m,l} for a cluster over all targets and sensors."""
    horizontal = math.hypot(cluster[0], cluster[1]) + scene.d_r
    vertical = abs(cluster[2]) + scene.d_h / 2
    to_target = math.hypot(horizontal, vertical)
    to_sensor = float(distances(cluster, scene.sensors).max())
    return (to_target + to_sensor) / scene.c_m_per_ns


def generate_scenario(
    params: ChannelParams,
    scene: SceneConfig,
    los: bool,
    rng: np.random.Generator,
    frame_ns: Optional[float] = None,
) -> Scenario:
    """Draw cluster count, cluster locations and per-scenario shadowing."""
    n_clusters = int(rng.poisson(params.mean_clusters))
    clusters = sample_cylinder(scene.d_r, scene.d_h, rng, n_clusters)
    if frame_ns is not None:
        budget = frame_ns - 4 * params.kappa_ns * (params.rays - 1)
        for index in range(n_clusters):
            attempts = 0
            while _max_geometric_delay(clusters[index], scene) >= budget:
                attempts += 1
                if attempts > MAX_RESAMPLE:
                    raise RuntimeError("cannot place clusters inside the frame; increase frame_ns")
                log.warning("cluster %d overflows the %.1f ns frame, resampling", index, frame_ns)
                clusters[index] = sample_cylinder(scene.d_r, scene.d_h, rng, 1)[0]

    sensor_shadowing = lognormal_db(params.shadow_var_db, rng, scene.M)
    path_shadowing = lognormal_db(params.shadow_var_db, rng, n_clusters + 1)
    return Scenario(clusters, sensor_shadowing, path_shadowing, bool(los))


def cluster_excess_delay(
    target: Sequence[float],
    cluster: Optional[Sequence[float]],
    sensor: Sequence[float],
    c: float,
) -> float:
    """Relative delay T_{m,l} in ns of the path via a cluster; None is the LOS path."""
    if cluster is None:
        return 0.0
    target = np.asarray(target, dtype=float)
    cluster = np.asarray(cluster, dtype=float)
    sensor = np.asarray(sensor, dtype=float)
    path = np.linalg.norm(cluster - target) + np.linalg.norm(sensor - cluster)
    direct = np.linalg.norm(sensor - target)
    return max(0.0, float(path - direct)) / c * 1e9


def excess_delays(target: np.ndarray, clusters: np.ndarray, sensors: np.ndarray, c: float) -> np.ndarray:
    """T_{m,l} for all sensors and paths, shape (M, L + 1); column 0 is the LOS path."""
    direct = distances(target, sensors)
    out = np.zeros((len(sensors), len(clusters) + 1))
    if len(clusters):
        to_cluster = distances(target, clusters)
        via = to_cluster[None, :] + np.linalg.norm(sensors[:, None, :] - clusters[None, :, :], axis=-1)
        out[:, 1:] = np.maximum(via - direct[:, None], 0.0) / c * 1e9
    return out


def ray_delays(K: int, kappa_ns: float, rng: np.random.Generator, size=()) -> np.ndarray:
    """Ray delays tau_{0..K-1}: tau_0 = 0, exponential gaps of mean kappa."""
    if K < 1:
        raise ValueError("K must be at least 1")
    size = (int(size),) if np.isscalar(size) else tuple(int(s) for s in size)
    gaps = rng.exponential(kappa_ns, size + (K - 1,))
    zeros = np.zeros(size + (1,))
    return np.concatenate((zeros, np.cumsum(gaps, axis=-1)), axis=-1)


def pathloss(params: ChannelParams, d_m, S_s, S_c, T, tau) -> np.ndarray:
    """Mean-square gain beta = P (d/d_ref)^-xi S_s S_c exp(-T/Gamma - tau/gamma)."""
    d_m = np.asarray(d_m, dtype=float)
    if np.any(d_m <= 0):
        raise ValueError("distance d_m must be positive")
    return (
        params.ref_power_mw
        * (d_m / params.ref_distance_m) ** (-params.pathloss_exp)
        * S_s
        * S_c
        * np.exp(-np.asarray(T) / params.path_decay_ns - np.asarray(tau) / params.ray_decay_ns)
    )


def draw_nakagami_mu(params: ChannelParams, rng: np.random.Generator, size) -> np.ndarray:
    mu = lognormal_db(params.nakagami_mu_var_db, rng, size, mean_db=params.nakagami_mu_mean_db)
    return np.maximum(mu, MIN_NAKAGAMI_MU)


def nakagami_amplitude(mu, omega, rng: np.random.Generator) -> np.ndarray:
    """Nakagami-mu amplitudes with E[a^2] = omega."""
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(mu < MIN_NAKAGAMI_MU):
        raise ValueError(f"Nakagami mu must be >= {MIN_NAKAGAMI_MU}")
    if np.any(omega <= 0):
        raise ValueError("Nakagami scale omega must be positive")
    return np.sqrt(rng.gamma(mu, omega / mu))


def realize(
    params: ChannelParams,
    scene: SceneConfig,
    scenario: Scenario,
    target: Sequence[float],
    rng: np.random.Generator,
    frame_ns: Optional[float] = None,
) -> ChannelRealization:
    """One fading draw of the scenario channel for a target."""
    sensors = scene.sensors
    target = np.asarray(target, dtype=float)
    d_m = distances(target, sensors)
    T = excess_delays(target, scenario.cluster_locations, sensors, scene.c)
    n_paths = T.shape[1]
    shape = (scene.M, n_paths, params.rays)

    base = d_m[:, None, None] / scene.c_m_per_ns + T[:, :, None]
    tau = ray_delays(params.rays, params.kappa_ns, rng, size=(scene.M, n_paths))
    if frame_ns is not None:
        attempts = 0
        while float((base + tau).max()) >= frame_ns:
            attempts += 1
            if attempts > MAX_RESAMPLE:
                raise RuntimeError(f"arrivals keep overflowing the {frame_ns} ns frame")
            log.warning("ray arrivals overflow the %.1f ns frame, resampling delays", frame_ns)
            tau = ray_delays(params.rays, params.kappa_ns, rng, size=(scene.M, n_paths))

    beta = pathloss(
        params,
        d_m[:, None, None],
        np.asarray(scenario.sensor_shadowing)[:, None, None],
        np.asarray(scenario.path_shadowing)[None, :, None],
        T[:, :, None],
        tau,
    )
    mu = draw_nakagami_mu(params, rng, shape)
    amplitude = nakagami_amplitude(mu, beta, rng)
    phase = rng.uniform(0.0, 2 * np.pi, shape)
    if not scenario.los_enabled:
        amplitude[:, 0, :] = 0.0
    return ChannelRealization(base + tau, amplitude, beta, phase, d_m)
