import numpy as np
import pytest

from wpos.channel import ChannelParams
from wpos.dataset import (
    PdpDataset,
    noise_for,
    random_labels,
    record_seed,
    scenario_for,
    synthesize_records,
)
from wpos.geometry import SceneConfig, ZoneLayout, zones_of
from wpos.pdp import DetectionParams

PARAMS = ChannelParams()
SCENE = SceneConfig()
LAYOUT = ZoneLayout.for_zones(8, SCENE.d_r)


def seeds(split="train", repeat=0):
    return {"base": 0, "scenario": 1, "repeat": repeat, "split": split}


def make(count=40, snr_db=15.0, los=True, workers=1, split="train"):
    detection = DetectionParams(snr_db=snr_db)
    scenario = scenario_for(PARAMS, SCENE, detection, 0, 1, los)
    noise = noise_for(PARAMS, SCENE, detection, 0, 1, samples=500)
    return synthesize_records(count, PARAMS, SCENE, LAYOUT, scenario, detection, noise, seeds(split), workers)


def test_shapes_and_labels():
    dataset = make()

    assert len(dataset) == 40
    assert dataset.pdp.shape == (40, 12, 100)
    assert dataset.targets.shape == (40, 3)
    assert np.array_equal(dataset.zones, zones_of(LAYOUT, dataset.targets))
    assert np.all(dataset.pdp > 0)
    assert dataset.zone_counts(8).sum() == 40


def test_records_are_deterministic():
    a, b = make(), make()

    assert np.array_equal(a.pdp, b.pdp)
    assert np.array_equal(a.targets, b.targets)


def test_worker_count_does_not_change_records():
    assert np.array_equal(make(workers=1).pdp, make(workers=4).pdp)


def test_prefix_stability():
    short, long = make(count=10), make(count=30)

    assert np.array_equal(short.pdp, long.pdp[:10])


def test_splits_are_independent():
    train, test = make(split="train"), make(split="test")

    assert not np.array_equal(train.targets, test.targets)


def test_snr_sweep_shares_targets_and_fading():
    low, high = make(snr_db=5.0), make(snr_db=15.0)

    assert np.array_equal(low.targets, high.targets)
    assert np.array_equal(low.zones, high.zones)
    assert not np.array_equal(low.pdp, high.pdp)
    assert np.all(low.noise > high.noise)


def test_record_seed_entropy():
    first = record_seed(0, 1, 0, "train", 5)
    second = record_seed(0, 1, 0, "train", 5)

    assert np.array_equal(first.generate_state(4), second.generate_state(4))
    assert not np.array_equal(record_seed(0, 1, 0, "test", 5).generate_state(4), first.generate_state(4))


def test_los_and_nlos_share_environment():
    detection = DetectionParams()
    los = scenario_for(PARAMS, SCENE, detection, 0, 1, True)
    nlos = scenario_for(PARAMS, SCENE, detection, 0, 1, False)

    assert np.array_equal(los.cluster_locations, nlos.cluster_locations)
    assert los.los_enabled and not nlos.los_enabled


def test_nlos_frames_carry_less_energy():
    los, nlos = make(count=200, los=True), make(count=200, los=False)

    assert nlos.pdp.sum(axis=-1).mean() < los.pdp.sum(axis=-1).mean()


def test_mean_ordered_is_decreasing():
    ordered = make().mean_ordered()

    assert ordered.shape == (100,)
    assert np.all(np.diff(ordered) <= 0)


def test_features_and_toa_rss():
    dataset = make(count=5)
    powers, indices = dataset.features(4)
    toa, rss = dataset.toa_rss()

    assert powers.shape == indices.shape == (5, 12, 4)
    assert toa.shape == rss.shape == (5, 12)


def test_zone_groups_split_by_label():
    dataset = make()
    vectors = np.arange(len(dataset))[:, None].astype(float)
    groups = dataset.zone_groups(vectors, 8)

    assert sum(len(group) for group in groups) == len(dataset)
    for zone, group in enumerate(groups):
        assert np.all(dataset.zones[group[:, 0].astype(int)] == zone)


def test_random_labels_keep_frames():
    dataset = make()
    shuffled = random_labels(dataset, 8, seed=3)

    assert shuffled.pdp is dataset.pdp
    assert shuffled.zones.shape == dataset.zones.shape
    assert shuffled.zones.max() < 8


def test_dataset_validation():
    with pytest.raises(ValueError):
        PdpDataset(np.zeros((2, 100)), np.zeros(2, int), np.zeros((2, 3)), np.ones(1), 8)
    with pytest.raises(ValueError):
        PdpDataset(np.zeros((2, 1, 100)), np.zeros(3, int), np.zeros((2, 3)), np.ones(1), 8)
    with pytest.raises(ValueError):
        make(count=0)
