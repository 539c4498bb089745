"""
Record synthesis: targets, channel draws and PDP frames for one experiment cell.

Every record has its own seed sequence built from (base seed, scenario seed,
repeat, split, index). Its target and fading come from one child stream and
its detector noise from another, so neither depends on the SNR setting and
SNR sweeps differ only in the noise level.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .channel import ChannelParams, Scenario, generate_scenario, realize
from .features import extract_features, toa_rss_features
from .geometry import SceneConfig, ZoneLayout, sample_target_location, zone_of
from .pdp import DetectionParams, calibrate_noise, deposit_energy, synthesize_pdp

log = logging.getLogger(__name__)

SPLITS = {"train": 0, "test": 1}
SCENARIO_STREAM = 7
CALIBRATION_STREAM = 11


@dataclass(frozen=True, eq=False)
class PdpDataset:
    """PDP frames (n, M, N_b) with zone labels, targets and the noise levels used."""

    pdp: np.ndarray
    zones: np.ndarray
    targets: np.ndarray
    noise: np.ndarray
    nu: int

    def __post_init__(self):
        if self.pdp.ndim != 3:
            raise ValueError(f"pdp must have shape (n, M, N_b), got {self.pdp.shape}")
        if len(self.zones) != len(self.pdp) or len(self.targets) != len(self.pdp):
            raise ValueError("pdp, zones and targets must have one entry per record")

    def __len__(self) -> int:
        return int(len(self.pdp))

    @property
    def M(self) -> int:
        return int(self.pdp.shape[1])

    @property
    def n_bins(self) -> int:
        return int(self.pdp.shape[2])

    def features(self, F: int) -> Tuple[np.ndarray, np.ndarray]:
        """Top-F powers and bin indices, each (n, M, F)."""
        return extract_features(self.pdp, F)

    def toa_rss(self) -> Tuple[np.ndarray, np.ndarray]:
        return toa_rss_features(self.pdp, self.noise, self.nu)

    def mean_ordered(self) -> np.ndarray:
        """Per-bin powers sorted in decreasing order, averaged over sensors and records."""
        ordered = -np.sort(-self.pdp, axis=-1)
        return ordered.reshape(-1, self.n_bins).mean(axis=0)

    def zone_groups(self, vectors: np.ndarray, n_zones: int):
        """Split per-record vectors by zone label, in zone order."""
        return [vectors[self.zones == zone] for zone in range(n_zones)]

    def zone_counts(self, n_zones: int) -> np.ndarray:
        return np.bincount(self.zones, minlength=n_zones)


def record_entropy(base_seed: int, scenario_seed: int, repeat: int, split: str, index: int) -> List[int]:
    """Seed words of one record, as stored in records.jsonl."""
    return [int(base_seed), int(scenario_seed), int(repeat), SPLITS[split], int(index)]


def record_seed(base_seed: int, scenario_seed: int, repeat: int, split: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(record_entropy(base_seed, scenario_seed, repeat, split, index))


def scenario_for(
    params: ChannelParams,
    scene: SceneConfig,
    detection: DetectionParams,
    base_seed: int,
    scenario_seed: int,
    los: bool,
) -> Scenario:
    """Frozen environment of a scenario seed; LOS and NLOS share the same draw."""
    rng = np.random.default_rng([base_seed, scenario_seed, SCENARIO_STREAM])
    return generate_scenario(params, scene, los, rng, frame_ns=detection.frame_ns)


def noise_for(
    params: ChannelParams,
    scene: SceneConfig,
    detection: DetectionParams,
    base_seed: int,
    scenario_seed: int,
    samples: int,
) -> np.ndarray:
    rng = np.random.default_rng([base_seed, scenario_seed, CALIBRATION_STREAM])
    return calibrate_noise(params, scene, detection, rng, samples=samples)


def synthesize_record(
    seed: np.random.SeedSequence,
    params: ChannelParams,
    scene: SceneConfig,
    layout: ZoneLayout,
    scenario: Scenario,
    detection: DetectionParams,
    noise: np.ndarray,
) -> Tuple[np.ndarray, int, np.ndarray]:
    """One (pdp, zone, target) triple."""
    channel_seed, noise_seed = seed.spawn(2)
    rng = np.random.default_rng(channel_seed)
    target = sample_target_location(scene, rng)
    realization = realize(params, scene, scenario, target, rng, frame_ns=detection.frame_ns)
    energies = deposit_energy(realization, detection)
    pdp = synthesize_pdp(energies, noise, detection.nu, np.random.default_rng(noise_seed))
    return pdp, zone_of(layout, target), target


def synthesize_records(
    count: int,
    params: ChannelParams,
    scene: SceneConfig,
    layout: ZoneLayout,
    scenario: Scenario,
    detection: DetectionParams,
    noise: np.ndarray,
    seeds: Dict[str, int],
    workers: int = 1,
) -> PdpDataset:
    """count records for seeds = {base, scenario, repeat, split}; order is independent of workers."""
    if count < 1:
        raise ValueError("record count must be >= 1")

    def one(index):
        seed = record_seed(seeds["base"], seeds["scenario"], seeds["repeat"], seeds["split"], index)
        return synthesize_record(seed, params, scene, layout, scenario, detection, noise)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(count)))
    else:
        results = [one(index) for index in range(count)]

    pdp = np.stack([result[0] for result in results])
    zones = np.array([result[1] for result in results], dtype=int)
    targets = np.stack([result[2] for result in results])
    log.debug(
        "synthesized %d %s records (scenario %d, repeat %d, %.1f dB)",
        count,
        seeds["split"],
        seeds["scenario"],
        seeds["repeat"],
        detection.snr_db,
    )
    return PdpDataset(pdp, zones, targets, np.asarray(noise, dtype=float), detection.nu)


def random_labels(dataset: PdpDataset, n_zones: int, seed: int) -> PdpDataset:
    """Same frames with zone labels drawn uniformly; a chance-level sanity set."""
    rng = np.random.default_rng(seed)
    zones = rng.integers(0, n_zones, len(dataset))
    return PdpDataset(dataset.pdp, zones, dataset.targets, dataset.noise, dataset.nu)
