import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import line_deployment
from mecoffload.radio import (LinkGeometry, SlotLinks, antenna_gain, compute_sinr_and_rate, draw_channels,
                              pathloss_gain, pattern_gain, peak_gains, shannon_rate, target_power,
                              uplink_units)
from mecoffload.scenario import ScenarioConfig, generate_deployment


def test_pathloss_doubling_distance(cfg):
    ratio = pathloss_gain(20.0, cfg) / pathloss_gain(10.0, cfg)
    assert ratio == pytest.approx(2 ** -2.5, rel=1e-12)
    assert 2 ** -2.5 == pytest.approx(0.17678, abs=1e-5)


def test_no_shadowing_is_deterministic(cfg):
    c = cfg.replace(shadowing_variance_db=0.0)
    dep = generate_deployment(c, 1)
    a = draw_channels(dep, c, np.random.default_rng(1)).gain
    b = draw_channels(dep, c, np.random.default_rng(2)).gain
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, pathloss_gain(dep.distances(), c))


def test_shadowing_std(cfg):
    c = cfg.replace(n_ues=1, n_aps=1)
    dep = line_deployment(c, [10.0], [0.0])
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(100):
        # 1000 independent slots per call keeps the loop short
        g = np.array([draw_channels(dep, c, rng).gain[0, 0] for _ in range(1000)])
        samples.append(10 * np.log10(g / pathloss_gain(10.0, c)))
    std = np.concatenate(samples).std()
    assert 3.39 <= std <= 3.54


@pytest.mark.parametrize("side,gdb", [("ue", 8.0), ("ap", 15.0)])
def test_pattern_boresight_and_backlobe(cfg, side, gdb):
    g0 = float(antenna_gain(0.3, 0.3, cfg, side))
    assert g0 == pytest.approx(10 ** (gdb / 10), rel=1e-12)
    gpi = float(antenna_gain(0.3, 0.3 + math.pi, cfg, side))
    assert gpi == pytest.approx(g0 * 1e-2, rel=1e-12)


@given(st.floats(-10, 10, allow_nan=False))
def test_pattern_even(theta):
    assert pattern_gain(theta, 8.0, 60.0, -20.0) == pytest.approx(pattern_gain(-theta, 8.0, 60.0, -20.0), rel=1e-12)


@given(st.floats(0, math.pi), st.floats(0, math.pi))
def test_pattern_monotone_in_offset(a, b):
    lo, hi = sorted((a, b))
    assert pattern_gain(lo, 15.0, 30.0, -20.0) >= pattern_gain(hi, 15.0, 30.0, -20.0)


def test_noise_floor_dbm(cfg):
    assert 10 * math.log10(cfg.noise_power / 1e-3) == pytest.approx(-104.0, abs=1e-9)


@pytest.mark.parametrize("p_tg,expected", [(0.05, 0.05), (0.5, 0.1)])
def test_target_power(cfg, p_tg, expected):
    gain = cfg.target_snr * cfg.noise_power / p_tg
    assert float(target_power(gain, cfg)) == pytest.approx(expected, rel=1e-12)


def test_rate_at_target_snr(cfg):
    r = float(shannon_rate(10 ** 1.5, cfg))
    assert r == pytest.approx(1e7 * math.log2(1 + 31.6228), rel=1e-6)
    assert r == pytest.approx(5.0277e7, rel=1e-4)


def test_single_link_hits_target_snr(cfg):
    c = cfg.replace(n_ues=1, n_aps=1, shadowing_variance_db=0.0)
    dep = line_deployment(c, [5.0], [0.0])
    snap = draw_channels(dep, c, np.random.default_rng(0))
    lb = compute_sinr_and_rate([1], snap, dep, c)
    assert lb.tx_power[0] < c.p_max
    assert lb.sinr[0] == pytest.approx(c.target_snr, rel=1e-12)
    assert uplink_units(lb.rate[0], c) == 301


def test_idle_gives_zero_rate(cfg):
    dep = generate_deployment(cfg, 3)
    snap = draw_channels(dep, cfg, np.random.default_rng(0))
    lb = compute_sinr_and_rate(np.zeros(cfg.n_ues, int), snap, dep, cfg)
    assert (lb.rate == 0).all() and (lb.tx_power == 0).all()


def test_uplink_units_examples(cfg):
    assert uplink_units(5.0277e7, cfg) == 301
    assert uplink_units(0.0, cfg) == 0
    edge = cfg.bits_per_unit / ((1 - cfg.signaling_fraction) * cfg.slot_duration)
    assert uplink_units(edge, cfg) == 1
    assert uplink_units(np.nextafter(edge, 0.0), cfg) == 0


def _random_actions(rng, dep):
    return np.array([rng.choice([0] + [n + 1 for n in s]) for s in dep.candidate_sets])


@given(st.integers(0, 2 ** 31 - 1))
def test_interferer_never_increases_sinr(seed):
    c = ScenarioConfig()
    rng = np.random.default_rng(seed)
    dep = generate_deployment(c, seed)
    snap = draw_channels(dep, c, rng)
    actions = _random_actions(rng, dep)
    idle = np.flatnonzero(actions == 0)
    if len(idle) == 0:
        actions[0] = 0
        idle = np.array([0])
    base = compute_sinr_and_rate(actions, snap, dep, c).sinr
    j = idle[0]
    more = actions.copy()
    more[j] = 1 + dep.candidate_sets[j][0]
    after = compute_sinr_and_rate(more, snap, dep, c).sinr
    others = np.arange(c.n_ues) != j
    assert (after[others] <= base[others]).all()


@given(st.integers(0, 2 ** 31 - 1))
def test_batched_links_equal_reference(seed):
    c = ScenarioConfig()
    rng = np.random.default_rng(seed)
    dep = generate_deployment(c, seed)
    snap = draw_channels(dep, c, rng)
    links = SlotLinks(LinkGeometry(dep, c), snap, c)
    acts = np.stack([_random_actions(rng, dep) for _ in range(5)])
    rate, power, sinr = links.evaluate(acts)
    for i, a in enumerate(acts):
        ref = compute_sinr_and_rate(a, snap, dep, c)
        np.testing.assert_allclose(sinr[i], ref.sinr, rtol=1e-12, atol=0)
        np.testing.assert_allclose(power[i], ref.tx_power, rtol=1e-12, atol=0)
        np.testing.assert_array_equal(uplink_units(rate[i], c), uplink_units(ref.rate, c))


def test_peak_gains(cfg):
    assert peak_gains(cfg) == pytest.approx((10 ** 0.8, 10 ** 1.5))
