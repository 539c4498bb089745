import math

import numpy as np
import pytest

from wpos.channel import (
    ChannelParams,
    Scenario,
    cluster_excess_delay,
    excess_delays,
    generate_scenario,
    lognormal_db,
    nakagami_amplitude,
    pathloss,
    ray_delays,
    realize,
)
from wpos.geometry import SPEED_OF_LIGHT, SceneConfig, sample_target_location


def test_cluster_count_mean():
    params = ChannelParams()
    scene = SceneConfig()
    rng = np.random.default_rng(0)
    counts = [generate_scenario(params, scene, True, rng).n_clusters for _ in range(20000)]

    assert np.mean(counts) == pytest.approx(3.0, abs=0.05)


def test_zero_mean_clusters_gives_los_only():
    scenario = generate_scenario(ChannelParams(mean_clusters=0), SceneConfig(), True, np.random.default_rng(1))

    assert scenario.n_clusters == 0
    assert scenario.path_shadowing.shape == (1,)


def test_shadowing_variance_in_db():
    draws = lognormal_db(3.0, np.random.default_rng(2), 1_000_000)

    assert np.var(10 * np.log10(draws)) == pytest.approx(3.0, rel=0.02)


def test_scenario_dict_roundtrip():
    scenario = generate_scenario(ChannelParams(), SceneConfig(), False, np.random.default_rng(4))
    restored = Scenario.from_dict(scenario.to_dict())

    assert np.array_equal(restored.cluster_locations, scenario.cluster_locations)
    assert np.array_equal(restored.path_shadowing, scenario.path_shadowing)
    assert restored.los_enabled is False


def test_excess_delay_examples():
    c = SPEED_OF_LIGHT

    assert cluster_excess_delay((5, 0, 0), None, (0, 0, 0), c) == 0.0
    assert cluster_excess_delay((5, 0, 0), (2, 0, 0), (0, 0, 0), c) == pytest.approx(0.0, abs=1e-9)
    expected = (math.sqrt(41) + 4 - 5) / c * 1e9
    assert cluster_excess_delay((5, 0, 0), (0, 4, 0), (0, 0, 0), c) == pytest.approx(expected)
    assert expected == pytest.approx(18.02, abs=0.01)


def test_excess_delays_matrix_matches_scalar():
    rng = np.random.default_rng(5)
    sensors = SceneConfig().sensors
    target = np.array([6.0, 2.0, 0.5])
    clusters = rng.uniform(-8, 8, (3, 3))
    table = excess_delays(target, clusters, sensors, SPEED_OF_LIGHT)

    assert table.shape == (12, 4)
    assert np.all(table[:, 0] == 0)
    for m in range(12):
        for l in range(3):
            assert table[m, l + 1] == pytest.approx(
                cluster_excess_delay(target, clusters[l], sensors[m], SPEED_OF_LIGHT)
            )


def test_ray_delays():
    rng = np.random.default_rng(6)

    assert ray_delays(1, 1.5, rng).tolist() == [0.0]
    tau = ray_delays(6, 1.5, rng, size=1_000_000)
    assert np.all(np.diff(tau, axis=-1) >= 0)
    assert np.all(tau[:, 0] == 0)
    assert tau[:, 5].mean() == pytest.approx(7.5, rel=0.01)


def test_pathloss_examples():
    params = ChannelParams()
    ref = params.ref_power_mw

    assert pathloss(params, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(ref)
    assert pathloss(params, 2.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(ref / 4)
    assert pathloss(params, 1.0, 1.0, 1.0, 25.0, 0.0) == pytest.approx(ref / math.e)
    with pytest.raises(ValueError):
        pathloss(params, 0.0, 1.0, 1.0, 0.0, 0.0)


def test_nakagami_moments():
    rng = np.random.default_rng(7)
    a = nakagami_amplitude(np.ones(1_000_000), 0.5, rng)

    assert np.mean(a ** 2) == pytest.approx(0.5, rel=0.01)
    assert np.var(a ** 2) == pytest.approx(0.25, rel=0.02)
    a = nakagami_amplitude(np.full(1_000_000, 3.0), 1.0, rng)
    assert np.mean(a ** 4) == pytest.approx(4.0 / 3.0, rel=0.02)
    with pytest.raises(ValueError):
        nakagami_amplitude(0.3, 1.0, rng)


def test_realize_shapes_and_frame():
    params = ChannelParams()
    scene = SceneConfig()
    rng = np.random.default_rng(8)
    scenario = generate_scenario(params, scene, True, rng, frame_ns=200.0)
    target = sample_target_location(scene, rng)
    realization = realize(params, scene, scenario, target, rng, frame_ns=200.0)

    shape = (12, scenario.n_clusters + 1, params.rays)
    assert realization.arrival_ns.shape == shape
    assert realization.amplitude.shape == shape
    assert np.all(realization.arrival_ns < 200.0)
    assert np.all(realization.amplitude[:, 0, :] > 0)


def test_nlos_zeroes_direct_path():
    params = ChannelParams()
    scene = SceneConfig()
    rng = np.random.default_rng(9)
    scenario = generate_scenario(params, scene, False, rng)
    realization = realize(params, scene, scenario, (7.0, 1.0, 0.0), rng)

    assert np.all(realization.amplitude[:, 0, :] == 0)


def test_fading_power_matches_pathloss():
    params = ChannelParams()
    scene = SceneConfig()
    rng = np.random.default_rng(13)
    scenario = generate_scenario(params, scene, True, rng, frame_ns=200.0)
    target = (7.0, 2.0, 0.5)
    draws = [realize(params, scene, scenario, target, rng, frame_ns=200.0) for _ in range(2000)]
    direct = np.array([draw.energy[:, 0, 0] for draw in draws])
    direct_beta = draws[0].beta[:, 0, 0]
    ratio = np.concatenate([(draw.energy / draw.beta).ravel() for draw in draws])

    assert all(np.allclose(draw.beta[:, 0, 0], direct_beta) for draw in draws)
    assert np.allclose(direct.mean(axis=0) / direct_beta, 1.0, atol=0.1)
    assert ratio.mean() == pytest.approx(1.0, abs=0.01)
