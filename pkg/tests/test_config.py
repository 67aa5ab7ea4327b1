import math

import pytest
from hypothesis import given, strategies as st

from wbansim.config import (ConfigError, MacParams, NetworkConfig, TimingParams,
                            default_network, dumps_config, loads_config,
                            snr_from_rssi, validate_config)


def test_defaults_match_reference_setup():
    cfg = validate_config()
    assert cfg.bcc_timing.t_slot == pytest.approx(23e-6)
    assert cfg.bcc_timing.t_data == pytest.approx(0.2e-3)
    assert cfg.rf_timing.t_slot == pytest.approx(0.192e-3)
    assert cfg.rf_timing.t_cca == pytest.approx(0.25e-3)
    assert cfg.rf_timing.t_data == pytest.approx(1.12e-3)
    assert cfg.rf_timing.t_ack == pytest.approx(0.352e-3)
    assert cfg.network.payload_bits == 800
    # turnaround ambiguity: the larger standard value goes to the RF side
    assert cfg.rf_timing.t_att == pytest.approx(0.384e-3)
    assert cfg.bcc_timing.t_att == pytest.approx(0.1e-3)


def test_load_decomposition():
    cfg = validate_config(network=default_network(n_nodes=4, n_relays=2, rate=10.0))
    net = cfg.network
    assert net.rate_direct == pytest.approx(20.0)
    assert net.rate_forwarded == pytest.approx(20.0)
    assert net.rate_total == pytest.approx(net.rate_direct + net.rate_forwarded)


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=12),
       st.lists(st.floats(min_value=0, max_value=100), min_size=12, max_size=12))
def test_load_decomposition_any_relay_split(n, k, rates):
    if k > n:
        return
    net = NetworkConfig(n_nodes=n, n_relays=k, per_node_rate=tuple(rates[:n]))
    net.validate()
    assert net.rate_direct + net.rate_forwarded == pytest.approx(net.rate_total)


def test_relay_count_invariant():
    with pytest.raises(ConfigError, match="n_relays exceeds n_nodes"):
        validate_config(network=default_network(n_nodes=4, n_relays=5))


def test_negative_rate_rejected():
    net = NetworkConfig(n_nodes=2, n_relays=1, per_node_rate=(1.0, -3.0))
    with pytest.raises(ConfigError):
        validate_config(network=net)


def test_cc2420_power_conversion():
    cfg = validate_config()
    assert cfg.rf_power.p_tx == pytest.approx(19.7e-3 * 1.8)
    assert cfg.rf_power.p_rx == pytest.approx(17.4e-3 * 1.8)
    assert cfg.bcc_power.p_rx == pytest.approx(2.1e-3)
    assert cfg.bcc_power.p_tx == pytest.approx(0.6e-3)


def test_snr_from_rssi():
    assert snr_from_rssi(-95.0, -95.0) == pytest.approx(1.0)
    assert snr_from_rssi(-85.0, -95.0) == pytest.approx(10.0)
    assert snr_from_rssi(-75.0, -95.0) == pytest.approx(100.0)


def test_contention_window_law():
    mac = MacParams(be_min=3)
    assert [mac.window_slots(i) for i in range(4)] == [8, 16, 32, 64]
    capped = MacParams(be_min=3, be_max=5)
    assert [capped.window_slots(i) for i in range(4)] == [8, 16, 32, 32]


def test_phy_rate_consistency_check():
    t = TimingParams(t_slot=0.192e-3, t_cca=0.25e-3, t_data=3.2e-3,
                     t_ack=0.352e-3, t_att=0.384e-3, phy_rate_bps=250e3)
    t.validate("rf.timing", payload_bits=800)  # 800/250k = 3.2 ms, consistent
    bad = TimingParams(t_slot=0.192e-3, t_cca=0.25e-3, t_data=1.12e-3,
                       t_ack=0.352e-3, t_att=0.384e-3, phy_rate_bps=250e3)
    with pytest.raises(ConfigError, match="t_data"):
        bad.validate("rf.timing", payload_bits=800)


def test_preamble_must_cover_sleep():
    with pytest.raises(ConfigError, match="t_pream"):
        validate_config(mac=MacParams(r_s=50e-3, r_l=1e-3))


def test_config_roundtrip_exact():
    cfg = validate_config(network=default_network(n_nodes=5, n_relays=2, rate=7.3))
    text = dumps_config(cfg)
    back = loads_config(text)
    assert back == cfg


@given(st.floats(min_value=1e-6, max_value=1.0),
       st.floats(min_value=1e-6, max_value=1.0))
def test_roundtrip_preserves_floats(rs, rl):
    cfg = validate_config(mac=MacParams(r_s=rs / 100, r_l=rl))
    back = loads_config(dumps_config(cfg))
    for a, b in ((back.mac.r_s, cfg.mac.r_s), (back.mac.r_l, cfg.mac.r_l)):
        assert math.isclose(a, b, rel_tol=1e-12)
