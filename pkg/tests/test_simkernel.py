import math

import numpy as np
import pytest

from wptsim.allocator import allocate
from wptsim.config import load_preset
from wptsim.energymodel import consumption_from_uniform, harvested_energy
from wptsim.feedback import FadingDistribution, impute_gains, pilot_cost, select_feedback
from wptsim.rfchannel import mean_path_gain, sample_placement
from wptsim.simkernel import (ACC_HARVEST, ACC_LOAD, ACC_RAW_HARVEST, UnachievableError,
                              make_placement, min_power_search, near_perpetual, run_once,
                              run_replicated, run_streams)

DESK = load_preset("desk")


def tiny(policy, **changes):
    # a battery small enough to die within a couple of hundred blocks
    cfg = DESK.updated(**{"policy.name": policy, "battery.capacity_scale": 1e-3, **changes})
    return cfg.to_scenario()


def reference_run(sc, placement, streams, n_blocks):
    """Plain per-block pipeline built from the public module functions."""
    K, N = placement.n_devices, sc.channel.n_subchannels
    bat, fb = sc.battery, sc.feedback
    mean = np.atleast_1d(mean_path_gain(placement.positions, sc.channel))
    dist = FadingDistribution(mean=mean)
    exp_draws = streams.channel.standard_exponential((n_blocks, K, N))
    load_draws = streams.load.random((n_blocks, K))
    x = np.full(K, sc.initial_energy)
    trace = []
    for j in range(n_blocks):
        gains = mean[:, None] * exp_draws[j]
        if sc.policy == "uni":
            reports, pilots = [], np.zeros(K)
        else:
            reports = [select_feedback(k, x[k], gains[k], fb) for k in range(K)]
            pilots = np.array([pilot_cost(r, fb) for r in reports])
        knowledge = impute_gains(reports, K, N, dist)
        alloc = allocate(sc.policy, knowledge, sc.budget, sc.weights, sc.budget_mode)
        trace.append(x.copy())
        out = None
        for k in range(K):
            q = harvested_energy(alloc.powers, gains[k], bat)
            e = consumption_from_uniform(load_draws[j, k], sc.consumption.active_power * bat.block_length,
                                         sc.consumption.active_probability)
            if sc.battery_model == "modified":
                credited = 0.0 if x[k] >= bat.capacity else q
                x[k] = x[k] - e - pilots[k] + credited
                died = x[k] <= 0
            else:
                raw = x[k] - e - pilots[k] + q
                x[k] = min(max(raw, 0.0), bat.capacity)
                died = raw <= 0
            if died and out is None:
                out = k
        if out is not None:
            return j + 1, out, np.array(trace), x
    return n_blocks, None, np.array(trace), x


@pytest.mark.parametrize("policy", ["uni", "maxrate", "maxmin", "mcc"])
@pytest.mark.parametrize("model", ["actual", "modified"])
def test_kernel_matches_reference_pipeline(policy, model):
    sc = tiny(policy, battery_model=model, power_budget_w=3.0)
    pl = make_placement(sc, 0)
    res = run_once(sc, pl, run_streams(sc.seed, 0, 0), record=True, block_cap=2000)
    blocks, dev, trace, final = reference_run(sc, pl, run_streams(sc.seed, 0, 0), 2000)
    assert res.blocks == blocks
    assert res.outage_device == dev
    np.testing.assert_allclose(res.trace["residual"], trace, rtol=0, atol=1e-12)
    np.testing.assert_allclose(res.final_residuals, final, rtol=0, atol=1e-12)


def test_same_seed_same_result():
    sc = DESK.updated(**{"policy.name": "mcc"}).to_scenario()
    pl = make_placement(sc, 3)
    a = run_once(sc, pl, run_streams(sc.seed, 3, 1))
    b = run_once(sc, pl, run_streams(sc.seed, 3, 1))
    assert a.blocks == b.blocks and a.outage_device == b.outage_device
    assert np.array_equal(a.final_residuals, b.final_residuals)
    assert np.array_equal(a.accumulators, b.accumulators)


def test_batching_does_not_change_the_path():
    # chunk boundaries fall at different blocks for different caps
    sc = DESK.updated(**{"policy.name": "maxmin", "power_budget_w": 4.0}).to_scenario()
    pl = make_placement(sc, 0)
    short = run_once(sc, pl, run_streams(sc.seed, 0, 0), record=True, block_cap=300)
    long = run_once(sc, pl, run_streams(sc.seed, 0, 0), record=True, block_cap=3000)
    assert short.reached_cap
    np.testing.assert_array_equal(long.trace["residual"][:300], short.trace["residual"])


def test_policies_share_random_numbers():
    sc = DESK.to_scenario()
    pl = make_placement(sc, 0)
    loads = []
    for pol in ("uni", "mcc"):
        r = run_once(sc.with_(policy=pol), pl, run_streams(sc.seed, 0, 0), record=True, block_cap=200)
        loads.append(r.trace["load"])
    np.testing.assert_array_equal(*loads)


def test_zero_power_depletion_time():
    sc = load_preset("full").updated(**{"policy.name": "uni", "power_budget_w": 0.0}).to_scenario()
    res = run_replicated(sc, 1, 3)
    expected = 0.8 * 64.8 / 7e-3
    assert expected / 3600 == pytest.approx(2.06, abs=0.01)
    # the first of six devices to empty, so slightly early
    assert res.mean == pytest.approx(expected, rel=0.02)
    assert res.mean < expected


def test_full_battery_without_charging():
    hours = 64.8 / 7e-3 / 3600
    assert 2.4 < hours < 2.7


def test_single_device_harvest_rate():
    cfg = load_preset("full").updated(**{"placement.n_devices": 1, "placement.distance_spread_m": 0.0,
                                           "policy.name": "uni"})
    sc = cfg.to_scenario()
    res = run_once(sc, make_placement(sc, 0), run_streams(sc.seed, 0, 0))
    assert not res.reached_cap
    rate = res.accumulators[0, ACC_RAW_HARVEST] / res.lifetime
    assert rate == pytest.approx(mean_path_gain(2.0, sc.channel), rel=0.01)
    assert rate < sc.consumption.mean_rate
    assert res.accumulators[0, ACC_HARVEST] <= res.accumulators[0, ACC_RAW_HARVEST]
    assert res.accumulators[0, ACC_LOAD] / res.lifetime == pytest.approx(7e-3, rel=0.01)


def test_replication_shape_and_degenerate_case():
    sc = DESK.updated(**{"policy.name": "uni"}).to_scenario()
    rep = run_replicated(sc, 10, 10)
    assert rep.lifetimes.shape == (10, 10) and rep.n_total == 100
    pl = make_placement(sc, 0)
    one = run_replicated(sc, 5, 1, placement=pl)
    assert one.lifetimes.shape == (1, 1)
    assert one.mean == run_once(sc, pl, run_streams(sc.seed, 0, 0)).lifetime


def test_half_width_shrinks_with_runs():
    sc = DESK.updated(**{"policy.name": "uni"}).to_scenario()
    pl = make_placement(sc, 0)
    ratios = []
    for s in range(12):
        small = run_replicated(sc.with_(seed=s), 1, 20, placement=pl).half_width
        big = run_replicated(sc.with_(seed=1000 + s), 1, 40, placement=pl).half_width
        ratios.append(big / small)
    assert np.mean(ratios) == pytest.approx(1 / math.sqrt(2), abs=0.12)


def test_continuation_keeps_simulating():
    sc = tiny("uni", hibernation_continuation=True)
    pl = make_placement(sc, 0)
    res = run_once(sc, pl, run_streams(sc.seed, 0, 0), block_cap=5000)
    plain = run_once(sc.with_(continuation=False), pl, run_streams(sc.seed, 0, 0), block_cap=5000)
    assert res.blocks == plain.blocks and res.outage_device == plain.outage_device
    assert res.blocks_simulated == 5000 > plain.blocks_simulated


def test_placement_size_checked():
    sc = DESK.to_scenario()
    with pytest.raises(ValueError):
        run_once(sc, sample_placement(3, 0.0, "line"), run_streams(0))


def test_power_search_bracket():
    sc = DESK.updated(**{"policy.name": "uni", "placement.geometry": "line"}).to_scenario()
    target = 1800.0
    res = min_power_search(sc, target, n_trials=2, tolerance=0.1, upper=32.0)
    pl = make_placement(sc, 0)
    assert res.upper - res.lower <= 0.1
    assert near_perpetual(sc, pl, res.power + 0.1, target, 2)
    assert not near_perpetual(sc, pl, res.power - 0.1, target, 2)
    with pytest.raises(UnachievableError):
        min_power_search(sc, target, n_trials=2, upper=0.5)


def test_predicate_monotone_in_power():
    sc = DESK.updated(**{"policy.name": "mcc", "placement.geometry": "line"}).to_scenario()
    pl = make_placement(sc, 0)
    target = 1800.0
    powers = [1.0, 2.0, 3.0, 4.0, 6.0]
    passed = [near_perpetual(sc, pl, p, target, 2) for p in powers]
    assert passed == sorted(passed)
    assert passed[-1] and not passed[0]
