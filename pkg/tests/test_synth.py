import numpy as np
import pytest

from routetime.network import dump_network
from routetime.synth import (SynthConfig, SynthConfigError, generate_dataset, generate_network,
                             generate_trips, load_config)


def test_chain_option():
    net = generate_network(SynthConfig(n_segments=3, chain=True, main_road_share=0), np.random.default_rng(0))
    assert [s.successors for s in net.segments.values()] == [("s001",), ("s002",), ()]
    assert net.marked_routes["chain"].segments == ("s000", "s001", "s002")


def test_default_network_has_main_road():
    net = generate_network(SynthConfig(), np.random.default_rng(1))
    assert len(net) == 106
    main = net.marked_routes["main44"]
    assert main.k == 44
    net.check_route(main)
    assert net.out_degree().min() >= 1


def test_fixed_seed_identical_files():
    cfg = SynthConfig(n_segments=20, main_road_len=5, days=2, seed=9)
    a_net, a_trips = generate_dataset(cfg)
    b_net, b_trips = generate_dataset(cfg)
    assert dump_network(a_net) == dump_network(b_net)
    assert np.array_equal(a_trips.times, b_trips.times)
    assert a_trips.trip_ids.tolist() == b_trips.trip_ids.tolist()


def test_shared_lognormal_moments():
    cfg = SynthConfig(n_segments=1, degree_probs="1:1", shared_mu=0.0, shared_sigma=1.0, main_road_share=0,
                      route_len_median=1, route_len_sigma=0.01, trips_per_hour=4200, days=1, seed=2)
    net, trips = generate_dataset(cfg)
    assert len(trips) > 95_000 and trips.k.max() == 1
    assert abs(np.median(trips.times) - 1.0) < 0.02
    assert abs(trips.times.mean() / np.exp(0.5) - 1) < 0.02
    # log of times is close to symmetric
    z = np.log(trips.times)
    skew = np.mean((z - z.mean()) ** 3) / z.std() ** 3
    assert abs(skew) < 0.05


def test_main_road_share():
    cfg = SynthConfig(trips_per_hour=10_000 / 24, days=1, main_road_share=0.06, seed=3)
    net, trips = generate_dataset(cfg)
    m = len(trips)
    on_main = int(trips.matching_route(net.route_indices(net.marked_routes["main44"])).sum())
    sd = np.sqrt(m * 0.06 * 0.94)
    assert abs(on_main - 0.06 * m) <= 3 * sd


def test_degenerate_sigma():
    cfg = SynthConfig(n_segments=10, main_road_len=4, sigma_min=1e-6, sigma_max=1e-6, days=1, seed=4)
    net, trips = generate_dataset(cfg)
    expected = net.lengths[trips.seg] / cfg.speed_median
    np.testing.assert_allclose(trips.times, expected, rtol=1e-4)


def test_population_ordering():
    rng = np.random.default_rng(5)
    k, h = 8, 200_000
    sums = rng.lognormal(0, 1, size=(h, k)).sum(axis=1)
    smd, smn = k * 1.0, k * np.exp(0.5)
    assert smd <= np.median(sums) <= smn


def test_speed_model_and_rush_shift():
    cfg = SynthConfig(n_segments=15, main_road_len=5, time_model="speed", rush_shift=0.5, days=3, seed=6)
    net, trips = generate_dataset(cfg)
    hour = np.repeat((trips.start_ts // 3600) % 24, trips.k)
    rush = cfg.rush_mask()[hour]
    speed = net.lengths[trips.seg] / trips.times
    assert np.median(speed[rush]) < np.median(speed[~rush])


def test_config_parsing():
    cfg = load_config("# demo\nn_segments=12\nchain=true\nsigma_max=1.5\nprofile=daily\n", seed=3)
    assert (cfg.n_segments, cfg.chain, cfg.sigma_max, cfg.profile, cfg.seed) == (12, True, 1.5, "daily", 3)
    assert load_config(cfg.to_text()) == cfg
    with pytest.raises(SynthConfigError):
        load_config("bogus=1\n")
    with pytest.raises(SynthConfigError):
        load_config("n_segments=x\n")
    with pytest.raises(SynthConfigError):
        SynthConfig(degree_probs="1:0.5,2:0.2")
    with pytest.raises(SynthConfigError):
        SynthConfig(sigma_min=0)
    with pytest.raises(SynthConfigError):
        generate_network(SynthConfig(n_segments=3, main_road_len=2, degree_probs="5:1"),
                         np.random.default_rng(0))


def test_trips_sorted_and_connected():
    cfg = SynthConfig(n_segments=30, main_road_len=10, days=2, seed=7)
    net, trips = generate_dataset(cfg)
    assert np.all(np.diff(trips.start_ts) >= 0)
    for i in range(0, len(trips), 37):
        net.check_route([net.ids[s] for s in trips.route_segments(i)])
    again = generate_trips(net, cfg, np.random.default_rng(1))
    assert len(again) > 0
