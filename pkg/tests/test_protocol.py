import itertools
import math

import pytest
from hypothesis import given, strategies as st

from wbansim.config import PerfEstimate
from wbansim.protocol import (ControlMessage, NodeProtocolState, Route, STATUS,
                              TOKEN, control_overhead_bps, effective_estimate,
                              forward_decision, make_status, on_status, on_token)
from wbansim.rf_model import NodeRfEstimate


def node(nid, n_relays=2, relay=False, relays=(0, 1)):
    st_ = NodeProtocolState(node_id=nid, n_relays=n_relays, is_relay=relay,
                            relays=set(relays))
    return st_


def status(src, delay, cost):
    return ControlMessage(kind=STATUS, src=src, dst=None,
                          payload=(delay, cost), len_bits=160)


def test_control_overhead_identity():
    assert control_overhead_bps(10, 5, 160, 1.0) == 2400.0


def test_effective_estimate_cost_ratio():
    raw = NodeRfEstimate(mean_delay=3e-3, mean_energy=1e-3, plr=0.0, a_cca=0.0)
    est = effective_estimate(raw, e_rem=100.0)
    assert est.energy_cost == pytest.approx(1e-8)
    half = effective_estimate(raw, e_rem=50.0)
    assert half.energy_cost == pytest.approx(2e-8)


def test_effective_estimate_diverges_when_blocked():
    raw = NodeRfEstimate(mean_delay=3e-3, mean_energy=1e-4, plr=1.0, a_cca=0.0)
    est = effective_estimate(raw, e_rem=10.0)
    assert math.isinf(est.mean_delay) and math.isinf(est.energy_cost)


def test_lists_sorted_and_complete():
    s = node(0, relay=True)
    for src, d, c in ((1, 3e-3, 2e-8), (2, 1e-3, 5e-8), (3, 2e-3, 1e-8)):
        on_status(s, status(src, d, c))
    assert [n for _, n in s.nodes_d] == [2, 3, 1]
    assert [n for _, n in s.nodes_e] == [3, 1, 2]
    assert len(s.nodes_d) == len(set(n for _, n in s.nodes_d))


def test_relay_releases_token_when_outranked():
    # Node 0 is a relay (n_relays=2) and hears 2 strictly better nodes.
    s = node(0, relay=True)
    s.delay_by_node[0] = 5e-3
    on_status(s, status(2, 1e-3, 1e-9))
    out = on_status(s, status(3, 2e-3, 2e-9))
    assert out.release_token_to == 2  # best non-relay in the delay order
    assert s.is_relay  # role is dropped only when the transfer completes


def test_idempotent_status():
    s = node(0, relay=True)
    s.delay_by_node[0] = 1e-3
    on_status(s, status(2, 3e-3, 1e-9))
    before = (list(s.nodes_d), list(s.nodes_e))
    out = on_status(s, status(2, 3e-3, 1e-9))
    assert (list(s.nodes_d), list(s.nodes_e)) == before
    assert out.release_token_to is None


def test_non_relay_starts_waiting():
    s = node(2, relay=False)
    s.delay_by_node[2] = 1e-3
    out = on_status(s, status(3, 5e-3, 1e-9))
    assert out.started_waiting and s.waiting_for_token


def test_non_candidate_powers_down_main_rx():
    s = node(3, relay=False)
    s.delay_by_node[3] = 9e-3
    on_status(s, status(1, 1e-3, 1e-9))
    out = on_status(s, status(2, 2e-3, 1e-9))
    assert out.powered_down and not s.bcc_main_rx_on


def test_token_transfers_role():
    s = node(2, relay=False)
    s.waiting_for_token = True
    on_token(s, ControlMessage(kind=TOKEN, src=0, dst=2, payload=(), len_bits=160))
    assert s.is_relay and not s.waiting_for_token
    assert s.relays == {1, 2}


def test_token_overheard_updates_relays_only():
    s = node(3, relay=False)
    on_token(s, ControlMessage(kind=TOKEN, src=0, dst=2, payload=(), len_bits=160))
    assert not s.is_relay
    assert s.relays == {1, 2}


def test_stale_token_still_honored():
    s = node(2, relay=False)
    s.waiting_for_token = False
    on_token(s, ControlMessage(kind=TOKEN, src=1, dst=2, payload=(), len_bits=160))
    assert s.is_relay


def test_all_relays_never_release():
    # N_r = N: exhaustively enumerate 4-node delay orderings; no status
    # sequence may ever trigger a token release.
    for perm in itertools.permutations([1e-3, 2e-3, 3e-3, 4e-3]):
        states = [NodeProtocolState(node_id=i, n_relays=4, is_relay=True,
                                    relays={0, 1, 2, 3}) for i in range(4)]
        for s in states:
            for i in range(4):
                msg = status(i, perm[i], perm[i])
                out = on_status(s, msg)
                assert out.release_token_to is None


def make_estimate(delay, energy):
    return PerfEstimate(mean_delay=delay, mean_energy=energy,
                        energy_cost=0.0, plr=0.0)


def test_forward_decision_energy_mode():
    s = node(2, relay=False, relays=(0, 1))
    s.cost_by_node = {0: 2e-3, 1: 5e-3}
    s.delay_by_node = {0: 1e-3, 1: 1e-3}
    own = make_estimate(5e-3, 10e-3)
    route = forward_decision(s, own, bcc_delay=1e-3, bcc_energy=0.1e-3)
    assert route.via_relay == 0
    # direct transmission cheaper than bcc + best relay -> direct
    own2 = make_estimate(5e-3, 1e-3)
    assert forward_decision(s, own2, 1e-3, 0.1e-3).direct


def test_forward_decision_only_best_relay_tested():
    s = node(2, relay=False, relays=(0, 1))
    s.cost_by_node = {0: 20e-3, 1: 30e-3}
    own = make_estimate(5e-3, 21e-3)
    # own energy beats bcc+best(0) comparison? 21 >= 0.1+20 -> forward to 0
    assert forward_decision(s, own, 1e-3, 0.1e-3).via_relay == 0
    own2 = make_estimate(5e-3, 19e-3)
    # best relay fails the test; node 1 is not tried even though... it is worse
    assert forward_decision(s, own2, 1e-3, 0.1e-3).direct


def test_relay_always_direct():
    s = node(0, relay=True)
    s.cost_by_node = {1: 1e-9}
    own = make_estimate(1.0, 1.0)
    assert forward_decision(s, own, 0.0, 0.0).direct


def test_blocked_node_always_forwards():
    s = node(2, relay=False, relays=(0,))
    s.cost_by_node = {0: 2e-3}
    s.delay_by_node = {0: 1e-3}
    own = PerfEstimate(mean_delay=math.inf, mean_energy=math.inf,
                       energy_cost=math.inf, plr=1.0)
    assert forward_decision(s, own, 1e-3, 0.1e-3).via_relay == 0


@given(st.floats(min_value=1e-6, max_value=1e3))
def test_decision_invariant_under_scaling(scale):
    s = node(2, relay=False, relays=(0, 1))
    base_costs = {0: 2e-3, 1: 5e-3}
    own_e, bcc_e = 3e-3, 0.5e-3
    s.cost_by_node = dict(base_costs)
    r1 = forward_decision(s, make_estimate(1e-3, own_e), 0.0, bcc_e)
    s.cost_by_node = {k: v * scale for k, v in base_costs.items()}
    r2 = forward_decision(s, make_estimate(1e-3, own_e * scale), 0.0, bcc_e * scale)
    assert r1 == r2


def test_make_status_updates_own_entry():
    s = node(0, relay=True)
    est = PerfEstimate(mean_delay=2e-3, mean_energy=1e-4,
                       energy_cost=1e-10, plr=0.0)
    msg = make_status(s, est, 160)
    assert msg.payload == (2e-3, 1e-10)
    assert s.delay_by_node[0] == 2e-3
    assert msg.dst is None and msg.len_bits == 160
