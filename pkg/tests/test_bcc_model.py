import dataclasses

import pytest
from hypothesis import given, strategies as st

from wbansim.config import MacParams, validate_config
from wbansim.bcc_model import (BccModelInput, InvalidDutyCycle, bcc_energy,
                               data_phase_delay, idle_listening_power,
                               solve_bcc, wakeup_timing)
from wbansim.rf_model import UnstableSystem

CFG = validate_config()


def make_input(n_nodes, n_relays, load, mac=None, timing=None):
    return BccModelInput(n_nodes=n_nodes, n_relays=n_relays,
                         load_forwarded=load, mac=mac or CFG.mac,
                         timing=timing or CFG.bcc_timing, power=CFG.bcc_power)


def test_wakeup_timing_golden():
    # R_s = R_l = 10 ms, T_pream = 12 ms
    w = wakeup_timing(MacParams(r_s=10e-3, r_l=10e-3), CFG.bcc_timing)
    assert w.mean_t_w == pytest.approx(5e-3, rel=1e-12)
    assert w.mean_t_a == pytest.approx(2.5e-3, rel=1e-12)
    assert w.mean_t_b == pytest.approx(12e-3 - 2.5e-3, rel=1e-12)
    assert w.t2 == pytest.approx(12.2e-3, rel=1e-12)


def test_wakeup_always_listening_receiver():
    mac = MacParams(r_s=0.0, r_l=10e-3)
    w = wakeup_timing(mac, CFG.bcc_timing)
    assert w.mean_t_a == 0.0
    assert w.mean_t_b == pytest.approx(CFG.bcc_timing.t_pream)


def test_wakeup_requires_covering_preamble():
    mac = MacParams(r_s=20e-3, r_l=1e-3)
    with pytest.raises(InvalidDutyCycle):
        wakeup_timing(mac, CFG.bcc_timing)


@given(st.floats(min_value=0, max_value=12e-3), st.floats(min_value=1e-4, max_value=0.5))
def test_mean_t_a_bounded_by_half_sleep(rs, rl):
    w = wakeup_timing(MacParams(r_s=rs, r_l=rl), CFG.bcc_timing)
    assert 0.0 <= w.mean_t_a <= rs / 2 + 1e-15


def test_data_phase_golden():
    assert data_phase_delay(CFG.bcc_timing) == pytest.approx(0.5e-3, rel=1e-12)
    t0 = dataclasses.replace(CFG.bcc_timing, t_att=0.0)
    assert data_phase_delay(t0) == pytest.approx(
        CFG.bcc_timing.t_data + CFG.bcc_timing.t_ack, rel=1e-12)
    t2x = dataclasses.replace(CFG.bcc_timing, t_data=2 * CFG.bcc_timing.t_data)
    assert data_phase_delay(t2x) - data_phase_delay(CFG.bcc_timing) == (
        pytest.approx(CFG.bcc_timing.t_data, rel=1e-12))


def test_single_forwarder_zero_contention():
    sol = solve_bcc(make_input(n_nodes=3, n_relays=2, load=10.0))
    assert sol.sigma_cca == 0.0


def test_hol_golden_at_forced_zero_contention():
    mac = MacParams(m_mp=1)
    sol = solve_bcc(make_input(n_nodes=3, n_relays=2, load=5.0, mac=mac))
    t = CFG.bcc_timing
    assert sol.mean_hol_delay == pytest.approx(3.5 * t.t_slot + t.t_cca, rel=1e-12)


def test_delay_decomposition_identity():
    sol = solve_bcc(make_input(n_nodes=10, n_relays=5, load=50.0))
    assert sol.mean_delay == sol.mean_hol_delay + sol.t2 + sol.t3
    assert sol.mean_energy == sol.energy_send + sol.energy_recv


def test_sigma_monotone_in_load_and_contenders():
    by_load = [solve_bcc(make_input(10, 5, l)).sigma_cca for l in (5, 20, 50)]
    assert by_load == sorted(by_load)
    by_m = [solve_bcc(make_input(4 + m, 4, 30.0)).sigma_cca for m in (1, 2, 4, 6)]
    assert by_m == sorted(by_m)


def test_zero_load_contention_free():
    sol = solve_bcc(make_input(10, 5, 0.0))
    assert sol.sigma_cca == 0.0
    assert sol.utilization == 0.0


def test_unstable_bcc_declared():
    # Service time is dominated by the 12 ms preamble: ~77 pkt/s saturates.
    with pytest.raises(UnstableSystem):
        solve_bcc(make_input(10, 5, 200.0))


def test_receiver_energy_structure():
    mac = MacParams(r_s=0.0, r_l=10e-3)
    power = dataclasses.replace(CFG.bcc_power, p_sleep=0.0)
    w = wakeup_timing(mac, CFG.bcc_timing)
    _, recv, _ = bcc_energy(0.0, 0.0, mac, CFG.bcc_timing, power, w)
    t = CFG.bcc_timing
    expect = (t.t_pream * power.p_act + t.t_rtr * power.p_tx
              + t.t_data * power.p_rx + t.t_ack * power.p_tx)
    assert recv == pytest.approx(expect, rel=1e-12)


def test_energy_golden_regression():
    # Reference BCC powers (2.1 mW RX / 0.6 mW TX) and timings. Pinned value.
    sol = solve_bcc(make_input(10, 5, 20.0))
    assert sol.mean_energy == pytest.approx(sol.energy_send + sol.energy_recv)
    assert sol.energy_send == pytest.approx(8.5911403e-06, rel=1e-6)
    assert sol.energy_recv == pytest.approx(1.575e-05, rel=1e-6)


def test_recv_sleep_term_increases_in_sleep_interval():
    # With a fixed preamble the receiver sleeps through more of it as r_s
    # grows, so only the r_s*p_sleep term is monotone, not the total.
    prev = -1.0
    for rs in (1e-3, 4e-3, 8e-3):
        mac = MacParams(r_s=rs, r_l=10e-3)
        sol = solve_bcc(make_input(6, 3, 10.0, mac=mac))
        term = rs * CFG.bcc_power.p_sleep
        assert term > prev
        assert sol.energy_recv >= term
        prev = term


def test_recv_energy_increases_in_sleep_with_derived_preamble():
    vals = []
    for rs in (1e-3, 4e-3, 8e-3):
        mac = MacParams(r_s=rs, r_l=1e-3)
        timing = dataclasses.replace(CFG.bcc_timing, t_pream=rs + 1e-3)
        vals.append(solve_bcc(make_input(6, 3, 10.0, mac=mac, timing=timing)).energy_recv)
    assert vals == sorted(vals)


def test_delay_increases_in_sleep_with_derived_preamble():
    # When the preamble is sized to bridge the sleep phase (t_pream = r_s+r_l),
    # a longer sleep stretches T_2 and thus the total delay.
    vals = []
    for rs in (1e-3, 4e-3, 8e-3):
        mac = MacParams(r_s=rs, r_l=1e-3)
        timing = dataclasses.replace(CFG.bcc_timing, t_pream=rs + 1e-3)
        vals.append(solve_bcc(make_input(6, 3, 10.0, mac=mac, timing=timing)).mean_delay)
    assert vals == sorted(vals)


def test_idle_listening_power():
    mac = MacParams(r_s=10e-3, r_l=10e-3)
    p = idle_listening_power(mac, CFG.bcc_power)
    expect = 0.5 * CFG.bcc_power.p_act + 0.5 * CFG.bcc_power.p_sleep
    assert p == pytest.approx(expect, rel=1e-12)
