import math

import pytest
from hypothesis import given, settings, strategies as st

from wbansim.config import LinkState, MacParams, ModelOptions, validate_config
from wbansim.numerics import q_function
from wbansim.rf_model import (NegativeDuration, RfModelInput, UnstableSystem,
                              bit_error_rate, cca_attempt_count, cca_hol_delay,
                              frame_failure_prob, node_a_cca, node_estimate,
                              node_hol_delay, node_loss, packet_error_prob,
                              rf_energy, rf_energy_terms, solve_rf)

CFG = validate_config()


def make_input(pi_e, load, mac=None):
    links = tuple(LinkState(node_id=i, pi_e=p) for i, p in enumerate(pi_e))
    return RfModelInput(relay_links=links, mac=mac or CFG.mac,
                        timing=CFG.rf_timing, power=CFG.rf_power,
                        load_direct=load, load_forwarded=0.0)


# --- erasure chain -----------------------------------------------------------

def test_ber_edge_cases():
    assert bit_error_rate(0.0) == 0.5
    assert bit_error_rate(3.0) == pytest.approx(q_function(3.0), abs=1e-15)
    assert bit_error_rate(3.0) == pytest.approx(1.3499e-3, abs=1e-7)
    assert bit_error_rate(100.0) < 1e-60


def test_ber_rayleigh_average_closed_form():
    g = 4.0
    expect = 0.5 * (1 - math.sqrt(1.5 * g / (1 + 1.5 * g)))
    assert bit_error_rate(g, rayleigh_average=True) == pytest.approx(expect)


def test_packet_error_prob():
    assert packet_error_prob(0.0, 800) == 0.0
    assert packet_error_prob(1.0, 800) == 1.0
    assert packet_error_prob(1e-3, 800) == pytest.approx(0.55086, abs=1e-5)
    # log-space evaluation stays accurate for tiny eps
    assert packet_error_prob(1e-12, 800) == pytest.approx(8e-10, rel=1e-6)


def test_frame_failure_prob():
    assert frame_failure_prob(0.0, 0.0) == 0.0
    assert frame_failure_prob(1.0, 0.3) == 1.0
    assert frame_failure_prob(0.1, 0.05) == pytest.approx(0.145, abs=1e-15)


# --- HOL delay / loss pieces -------------------------------------------------

def enum_hol_oracle(pi_cca, pi_e, mac, timing):
    """Exact enumeration over (k erasures, v CCA outcomes) pairs."""
    ts, tc = timing.t_slot, timing.t_cca
    rt = timing.t_att + timing.t_data + timing.t_ack
    total = 0.0
    for k in range(mac.m_r):
        wk = pi_e ** k * (1 - pi_e)
        for v in range(mac.m_c):
            wv = pi_cca ** v * (1 - pi_cca)
            backoff = sum((mac.window_slots(i) - 1) / 2.0 for i in range(v + 1))
            total += wk * wv * (backoff * ts + (v + 1) * tc + k * rt)
        wv = pi_cca ** mac.m_c
        backoff = sum((mac.window_slots(i) - 1) / 2.0 for i in range(mac.m_c))
        total += wk * wv * (backoff * ts + (mac.m_c + 1) * tc + k * rt)
    return total


@pytest.mark.parametrize("pi_cca,pi_e,mr,mc", [
    (0.0, 0.0, 1, 1), (0.2, 0.1, 3, 3), (0.5, 0.3, 4, 2),
    (0.05, 0.9, 2, 5), (0.35, 0.0, 5, 4),
])
def test_hol_matches_enumeration_oracle(pi_cca, pi_e, mr, mc):
    mac = MacParams(m_r=mr, m_c=mc)
    e_cca = cca_hol_delay(pi_cca, mac, CFG.rf_timing)
    got = node_hol_delay(e_cca, pi_e, mac, CFG.rf_timing)
    assert got == pytest.approx(enum_hol_oracle(pi_cca, pi_e, mac, CFG.rf_timing),
                                rel=1e-12)


def test_cca_hol_golden_value():
    # pi_cca=0, M_c=1, BE_min=3: 3.5 slots + one CCA
    mac = MacParams(m_c=1)
    got = cca_hol_delay(0.0, mac, CFG.rf_timing)
    assert got == pytest.approx(3.5 * 0.192e-3 + 0.25e-3, rel=1e-12)


@given(st.floats(min_value=0, max_value=0.999), st.integers(min_value=1, max_value=8))
def test_truncated_geometric_mass(p, mc):
    masses = [p ** v * (1 - p) for v in range(mc)] + [p ** mc]
    assert sum(masses) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=0.99))
def test_node_loss_in_range(pi_e, pi_cca):
    loss = node_loss(pi_cca, pi_e, CFG.mac)
    assert 0.0 <= loss <= 1.0
    assert loss >= pi_e ** CFG.mac.m_r - 1e-15


# --- fixed point -------------------------------------------------------------

def test_single_relay_has_zero_cca():
    sol = solve_rf(make_input([0.0], load=10.0))
    assert sol.pi_cca == 0.0
    assert sol.residual <= 1e-9


def test_single_relay_golden_delay():
    # N_r=1, pi_e=0, M_c=1: E[D^cca]=0.922 ms, E[D] = 2.778 ms
    sol = solve_rf(make_input([0.0], load=10.0, mac=MacParams(m_c=1)))
    assert sol.mean_hol_delay == pytest.approx(0.922e-3, rel=1e-12)
    assert sol.mean_delay == pytest.approx(2.778e-3, rel=1e-12)


def test_two_relays_converges():
    sol = solve_rf(make_input([0.0, 0.0], load=10.0))
    assert sol.residual <= 1e-9
    assert 0.0 < sol.pi_cca < 1.0
    assert sol.utilization < 1.0
    assert sol.mean_busy_pkts >= 1.0


def test_unstable_system_declared():
    with pytest.raises(UnstableSystem):
        solve_rf(make_input([0.0], load=400.0))


def test_delay_and_loss_monotone_in_pi_e():
    # The retransmission weighting is an unnormalized truncated geometric, so
    # the delay expectation turns over once pi_e^m_r mass becomes sizable
    # (around pi_e ~ 0.5 for m_r=3). Monotonicity is asserted on a >=20-point
    # grid inside the model's claimed operating range.
    grid = [i / 40.0 for i in range(0, 21)]
    prev_d, prev_l = -1.0, -1.0
    for pe in grid:
        sol = solve_rf(make_input([pe, pe], load=30.0))
        assert sol.mean_delay >= prev_d - 1e-12
        assert sol.pi_loss >= prev_l - 1e-12
        prev_d, prev_l = sol.mean_delay, sol.pi_loss


def test_pi_cca_monotone_in_relays_and_load():
    by_nr = [solve_rf(make_input([0.1] * nr, load=30.0)).pi_cca
             for nr in (1, 2, 3, 4)]
    assert by_nr == sorted(by_nr)
    by_load = [solve_rf(make_input([0.1, 0.1], load=l)).pi_cca
               for l in (5.0, 20.0, 50.0, 100.0)]
    assert by_load == sorted(by_load)


def test_mean_delay_floor():
    t = CFG.rf_timing
    for pe in (0.0, 0.5, 0.99):
        sol = solve_rf(make_input([pe], load=5.0))
        assert sol.mean_delay >= t.t_data + t.t_att + t.t_ack - 1e-15


# --- energy ------------------------------------------------------------------

def test_a_cca_paper_variant_zero_without_erasures():
    assert node_a_cca(0.4, 0.0, CFG.mac, "paper") == 0.0
    assert node_a_cca(0.4, 0.0, CFG.mac, "corrected") == pytest.approx(
        cca_attempt_count(0.4, CFG.mac.m_c))


def test_energy_reduces_when_a_cca_zero():
    sol = solve_rf(make_input([0.0], load=10.0))
    t, p = CFG.rf_timing, CFG.rf_power
    expect = (sol.mean_hol_delay * p.p_act + t.t_data * p.p_tx
              + t.t_att * p.p_act + t.t_ack * p.p_rx)
    assert sol.mean_cca_count == 0.0
    assert sol.mean_energy == pytest.approx(expect, rel=1e-12)


def test_energy_linear_in_ptx():
    inp = make_input([0.0], load=10.0)
    sol = solve_rf(inp)
    import dataclasses
    p2 = dataclasses.replace(CFG.rf_power, p_tx=2 * CFG.rf_power.p_tx)
    inp2 = dataclasses.replace(inp, power=p2)
    e2 = rf_energy(sol, inp2)
    assert e2 - sol.mean_energy == pytest.approx(
        CFG.rf_timing.t_data * CFG.rf_power.p_tx, rel=1e-12)


def test_energy_golden_regression():
    # N_r=1, pi_e=0, reference timings, CC2420 at 1.8 V. Pinned value.
    sol = solve_rf(make_input([0.0], load=10.0))
    assert sol.mean_energy == pytest.approx(9.164376e-05, rel=1e-6)


def test_negative_duration_guard():
    with pytest.raises(NegativeDuration):
        rf_energy_terms(1e-6, 100.0, CFG.rf_timing, CFG.rf_power)


def test_node_estimate_consistent_with_average():
    inp = make_input([0.1, 0.1], load=30.0)
    sol = solve_rf(inp)
    est = node_estimate(sol, inp, 0.1)
    assert est.mean_delay == pytest.approx(sol.mean_delay, rel=1e-12)
    assert est.mean_energy == pytest.approx(sol.mean_energy, rel=1e-12)
    assert est.plr == pytest.approx(sol.pi_loss, rel=1e-12)
