"""Cooperative relay-selection state machine run by every node.

Each node periodically estimates its direct RF delay/energy, broadcasts the
two cost scalars over the body-coupled link, and keeps two ordered views of
the network (by delay, by energy cost).  A relay that finds at least n_relays
strictly better nodes releases its role with a token addressed to the best
non-relay; data packets are forwarded to the best relay whenever the combined
BCC+relay cost undercuts the direct transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from .config import PerfEstimate
from .rf_model import NodeRfEstimate

STATUS = "STATUS"
TOKEN = "TOKEN"
DATA_BCC = "DATA_BCC"
DATA_RF = "DATA_RF"


def control_overhead_bps(n_nodes: int, n_relays: int, msg_len_bits: int,
                         est_period: float) -> float:
    """Worst-case control load: every node sends one STATUS and every relay
    one TOKEN per estimation period."""
    return (n_nodes + n_relays) * msg_len_bits / est_period


def effective_estimate(raw: NodeRfEstimate, e_rem: float) -> PerfEstimate:
    """Loss-adjusted advertisement values.

    Dividing by the delivery probability makes the cost of a truncation-lossy
    link explicit: a fully blocked link (plr=1) advertises infinite delay and
    cost, so it can never look attractive as a relay.
    """
    deliver = 1.0 - raw.plr
    if deliver <= 0.0:
        return PerfEstimate(mean_delay=math.inf, mean_energy=math.inf,
                            energy_cost=math.inf, plr=raw.plr)
    delay = raw.mean_delay / deliver
    energy = raw.mean_energy / deliver
    cost = energy * energy / e_rem if e_rem > 0 else math.inf
    return PerfEstimate(mean_delay=delay, mean_energy=energy,
                        energy_cost=cost, plr=raw.plr)


@dataclass(frozen=True)
class ControlMessage:
    kind: str
    src: int
    dst: Optional[int]          # None = broadcast
    payload: Tuple[float, ...]  # STATUS: (mean_delay, energy_cost)
    len_bits: int


@dataclass
class NodeProtocolState:
    node_id: int
    n_relays: int
    is_relay: bool
    waiting_for_token: bool = False
    delay_by_node: Dict[int, float] = field(default_factory=dict)
    cost_by_node: Dict[int, float] = field(default_factory=dict)
    relays: Set[int] = field(default_factory=set)
    local_estimate: Optional[PerfEstimate] = None
    stale: bool = False
    e_rem: float = math.inf
    bcc_main_rx_on: bool = True

    @property
    def nodes_d(self) -> List[Tuple[float, int]]:
        """All known nodes ordered by advertised delay, node id breaking ties."""
        return sorted((v, n) for n, v in self.delay_by_node.items())

    @property
    def nodes_e(self) -> List[Tuple[float, int]]:
        return sorted((v, n) for n, v in self.cost_by_node.items())

    def register(self, node_id: int) -> None:
        self.delay_by_node.setdefault(node_id, math.inf)
        self.cost_by_node.setdefault(node_id, math.inf)


def make_status(state: NodeProtocolState, est: PerfEstimate,
                len_bits: int) -> ControlMessage:
    """Build the periodic STATUS broadcast and update the local lists with the
    node's own fresh values (the sender processes its own update too)."""
    state.local_estimate = est
    state.stale = False
    state.delay_by_node[state.node_id] = est.mean_delay
    state.cost_by_node[state.node_id] = est.energy_cost
    return ControlMessage(kind=STATUS, src=state.node_id, dst=None,
                          payload=(est.mean_delay, est.energy_cost),
                          len_bits=len_bits)


@dataclass(frozen=True)
class StatusOutcome:
    release_token_to: Optional[int] = None
    started_waiting: bool = False
    powered_down: bool = False


def _better_count(state: NodeProtocolState, metric: str) -> int:
    values = state.delay_by_node if metric == "delay" else state.cost_by_node
    mine = values.get(state.node_id, math.inf)
    me = (mine, state.node_id)
    return sum(1 for n, v in values.items()
               if n != state.node_id and (v, n) < me)


def _best_non_relay(state: NodeProtocolState) -> Optional[int]:
    for _, n in state.nodes_d:
        if n not in state.relays and n != state.node_id:
            return n
    return None


def on_status(state: NodeProtocolState, msg: ControlMessage,
              metric: str = "delay") -> StatusOutcome:
    """Process a STATUS update: refresh the ordered views, then apply the
    role rules.  A relay that counts >= n_relays strictly better nodes asks to
    release its token to the best non-relay; a non-relay that counts fewer
    starts waiting for a token; any other non-relay may shut its main BCC
    receiver (the wake-up receiver stays on)."""
    state.register(msg.src)
    if msg.kind == STATUS:
        delay, cost = msg.payload[0], msg.payload[1]
        state.delay_by_node[msg.src] = delay
        state.cost_by_node[msg.src] = cost
    better = _better_count(state, metric)
    if better >= state.n_relays and state.is_relay:
        dst = _best_non_relay(state)
        if dst is not None:
            return StatusOutcome(release_token_to=dst)
    elif better < state.n_relays and not state.is_relay:
        state.waiting_for_token = True
        state.bcc_main_rx_on = True
        return StatusOutcome(started_waiting=True)
    elif better >= state.n_relays and not state.is_relay:
        state.waiting_for_token = False
        state.bcc_main_rx_on = False
        return StatusOutcome(powered_down=True)
    return StatusOutcome()


def on_token(state: NodeProtocolState, msg: ControlMessage) -> None:
    """Apply a relay-role transfer.  Every node moves the role from the
    releasing src to the addressed dst; the addressed node becomes a relay
    even if a fresher STATUS made it stop waiting (stale tokens are honored
    and corrected at the next estimation round)."""
    state.register(msg.src)
    state.relays.discard(msg.src)
    if msg.dst is not None:
        state.register(msg.dst)
        state.relays.add(msg.dst)
    if msg.src == state.node_id:
        state.is_relay = False
    if msg.dst == state.node_id:
        state.is_relay = True
        state.waiting_for_token = False
        state.bcc_main_rx_on = True


@dataclass(frozen=True)
class Route:
    via_relay: Optional[int]    # None = direct RF

    @property
    def direct(self) -> bool:
        return self.via_relay is None


def forward_decision(state: NodeProtocolState, own: PerfEstimate,
                     bcc_delay: float, bcc_energy: float,
                     metric: str = "energy") -> Route:
    """Route one data packet.

    Only the best relay is tested: if the combined cost through it does not
    undercut the direct link, no other relay can, and the packet goes direct.
    Relays always transmit directly.
    """
    if state.is_relay:
        return Route(via_relay=None)
    candidates = [n for n in state.relays if n != state.node_id]
    if not candidates:
        return Route(via_relay=None)

    def by_cost(n):
        return (state.cost_by_node.get(n, math.inf), n)

    def by_delay(n):
        return (state.delay_by_node.get(n, math.inf), n)

    if metric == "delay":
        best = min(candidates, key=by_delay)
        take = own.mean_delay >= bcc_delay + state.delay_by_node.get(best, math.inf)
    elif metric == "energy":
        best = min(candidates, key=by_cost)
        take = own.mean_energy >= bcc_energy + state.cost_by_node.get(best, math.inf)
    else:  # combined: both the energy and the delay conditions must hold
        best = min(candidates, key=by_cost)
        take = (own.mean_energy >= bcc_energy + state.cost_by_node.get(best, math.inf)
                and own.mean_delay >= bcc_delay + state.delay_by_node.get(best, math.inf))
    return Route(via_relay=best if take else None)
