"""Event-driven simulator of the dual-radio stack at frame granularity.

One run executes Poisson traffic through the full pipeline: the unslotted
CSMA/CA RF MAC towards the gateway, the preamble-sampling BCC MAC between
nodes, and the cooperative relay-selection protocol on top.  CCA results come
from actual medium occupancy, frame erasures from the channel model, and
overlapping transmissions destroy each other, so the analytic models are
validated against the simulator, never fed into it.

Supported systems:
  proposed   - dual-radio cooperative forwarding with STATUS/TOKEN control.
  baseline   - RF only; a node whose gateway link is fully blocked relays
               through its best reachable on-body neighbor (two RF hops).
  rf-direct  - the first n_relays nodes transmit straight to the gateway, no
               protocol; used to validate the RF model.
  bcc-only   - non-relay nodes send to a fixed relay over BCC, no RF hop;
               used to validate the BCC model.
  single     - one node (node 0) carries all traffic directly.

Retransmission behavior follows the analytic service model by default: after
an ACK timeout the packet goes straight back to carrier sensing with a fresh
CCA budget and no new random backoff (sim.retx_policy='backoff' restores the
full standard contention restart).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Dict, List, Optional, Tuple

from ..bcc_model import BccModelInput, idle_listening_power, solve_bcc
from ..config import LinkState, ValidatedConfig
from ..numerics import NonConvergence
from ..protocol import (ControlMessage, NodeProtocolState, STATUS, TOKEN,
                        effective_estimate, forward_decision, make_status,
                        on_status, on_token)
from ..rf_model import (RfModelInput, UnstableSystem, node_estimate, solve_rf)
from .metrics import NodeMetrics, RunMetrics, ServiceStats
from .scenario import Channel, derive_rng

# Event kinds, dispatched by index.
(EV_ARRIVAL, EV_RF_BACKOFF, EV_RF_CCA, EV_RF_TXEND, EV_RF_ACKBEGIN,
 EV_RF_ACKEND, EV_RF_RESOLVE, EV_BCC_BACKOFF, EV_BCC_CCA, EV_BCC_PREAMEND,
 EV_BCC_RTRBEGIN, EV_BCC_RTREND, EV_BCC_RTRTIMEOUT, EV_BCC_DATABEGIN,
 EV_BCC_DATAEND, EV_BCC_ACKBEGIN, EV_BCC_ACKEND, EV_EST_TICK) = range(18)

GATEWAY = -1
BCC_RETRY_CAP = 32


class Medium:
    """Shared channel occupancy tracker. cca_busy() reports whether any
    transmission overlapped the sensing window [window_start, now]."""

    __slots__ = ("active", "last_end", "collisions", "_next")

    def __init__(self):
        self.active: Dict[int, list] = {}
        self.last_end = -1.0
        self.collisions = 0
        self._next = 0

    def begin(self, now: float, dur: float) -> int:
        tid = self._next
        self._next += 1
        corrupted = bool(self.active)
        if corrupted:
            self.collisions += 1
            for rec in self.active.values():
                rec[1] = True
        self.active[tid] = [now + dur, corrupted]
        return tid

    def end(self, tid: int, now: float) -> bool:
        rec = self.active.pop(tid)
        if now > self.last_end:
            self.last_end = now
        return rec[1]

    def cca_busy(self, window_start: float) -> bool:
        return bool(self.active) or self.last_end > window_start


class Packet:
    __slots__ = ("origin", "created", "seq", "dst", "leg_start", "tx_attempts",
                 "counted")

    def __init__(self, origin: int, created: float, seq: int, counted: bool):
        self.origin = origin
        self.created = created
        self.seq = seq
        self.dst = GATEWAY
        self.leg_start = 0.0
        self.tx_attempts = 0
        self.counted = counted


class BccJob:
    """One unit of work for the BCC MAC: a data packet, a STATUS broadcast,
    or a TOKEN broadcast."""

    __slots__ = ("kind", "pkt", "msg", "dst", "retries")

    def __init__(self, kind: str, pkt: Optional[Packet] = None,
                 msg: Optional[ControlMessage] = None, dst: Optional[int] = None):
        self.kind = kind            # 'data' | 'status' | 'token'
        self.pkt = pkt
        self.msg = msg
        self.dst = dst              # None = broadcast
        self.retries = 0


class NodeRt:
    """Per-node runtime state: MAC machines, protocol state, accounting."""

    __slots__ = (
        "nid", "metrics", "rng_arrival", "rng_backoff", "rng_channel",
        "arrivals_left", "arrival_rate",
        # RF MAC
        "rf_queue", "rf_serving", "rf_epoch", "rf_be", "rf_cca_attempts",
        "rf_window_start", "rf_backoff_dur", "rf_tid", "rf_service_energy",
        "rf_busy_since", "rf_busy_time", "rf_transitions",
        # BCC MAC
        "bcc_ctrl", "bcc_data", "bcc_serving", "bcc_epoch", "bcc_be",
        "bcc_cca_attempts", "bcc_window_start", "bcc_backoff_dur", "bcc_tid",
        "bcc_service_energy", "bcc_awaiting_rtr", "bcc_rx_engaged",
        "bcc_rx_energy", "bcc_busy_time", "bcc_busy_since", "wake_phase",
        "bcc_ack_queue",
        # protocol
        "proto", "est", "pi_e_point", "pending_token", "relay_route",
        "compute_calls",
    )

    def __init__(self, nid: int):
        self.nid = nid
        self.metrics = NodeMetrics()
        self.arrivals_left = 0
        self.arrival_rate = 0.0
        self.rf_queue = deque()
        self.rf_serving = None
        self.rf_epoch = 0
        self.rf_be = 0
        self.rf_cca_attempts = 0
        self.rf_window_start = 0.0
        self.rf_backoff_dur = 0.0
        self.rf_tid = -1
        self.rf_service_energy = 0.0
        self.rf_busy_since = 0.0
        self.rf_busy_time = 0.0
        self.rf_transitions = 0
        self.bcc_ctrl = deque()
        self.bcc_data = deque()
        self.bcc_serving = None
        self.bcc_epoch = 0
        self.bcc_be = 0
        self.bcc_cca_attempts = 0
        self.bcc_window_start = 0.0
        self.bcc_backoff_dur = 0.0
        self.bcc_tid = -1
        self.bcc_service_energy = 0.0
        self.bcc_awaiting_rtr = False
        self.bcc_rx_engaged = False
        self.bcc_rx_energy = 0.0
        self.bcc_busy_time = 0.0
        self.bcc_busy_since = -1.0
        self.wake_phase = 0.0
        self.bcc_ack_queue: List[int] = []
        self.proto: Optional[NodeProtocolState] = None
        self.est = None
        self.pi_e_point = 0.0
        self.pending_token = False
        self.relay_route: Optional[int] = None
        self.compute_calls = 0


class Engine:
    def __init__(self, cfg: ValidatedConfig, channel: Channel, system: str,
                 seed: int, packets_per_node: Optional[int],
                 duration: Optional[float], max_events: Optional[int],
                 dump: Optional[list], warmup: float,
                 initial_energy: float):
        if system not in ("proposed", "baseline", "rf-direct", "bcc-only",
                          "single"):
            raise ValueError(f"unknown system {system!r}")
        if packets_per_node is None and duration is None:
            raise ValueError("need packets_per_node or duration as stop condition")
        self.cfg = cfg
        self.channel = channel
        self.system = system
        self.seed = seed
        self.duration_limit = duration
        self.max_events = max_events
        self.dump = dump
        self.warmup = warmup
        self.initial_energy = initial_energy
        self.now = 0.0
        self.events: List[tuple] = []
        self._seq = 0
        self.processed = 0
        self.partial = False
        self.rf_medium = Medium()
        self.bcc_medium = Medium()
        self.outstanding = 0
        self.control_bits = 0
        self.relay_changes = 0
        self.token_in_flight = False
        self.token_job: Optional[BccJob] = None
        self.rf_service = ServiceStats()
        self.bcc_service = ServiceStats()
        self.pkt_seq = 0
        self._pi_cca_cache: Dict[int, float] = {}
        self._bcc_sol = None
        self._bcc_sol_failed = False

        n = cfg.network.n_nodes
        mac = cfg.mac
        self.nodes = [NodeRt(i) for i in range(n)]
        cycle = mac.r_s + mac.r_l
        for i, rt in enumerate(self.nodes):
            rt.rng_arrival = derive_rng(seed, i, 0)
            rt.rng_backoff = derive_rng(seed, i, 1)
            rt.rng_channel = derive_rng(seed, i, 2)
            rt.arrival_rate = cfg.network.per_node_rate[i]
            rt.arrivals_left = packets_per_node if packets_per_node is not None else -1
            rt.wake_phase = derive_rng(seed, i, 3).random() * cycle
            rt.proto = NodeProtocolState(
                node_id=i, n_relays=cfg.network.n_relays,
                is_relay=(i < cfg.network.n_relays),
                relays=set(range(cfg.network.n_relays)))
        self.protocol_on = system == "proposed"
        self.dispatch = [
            self.ev_arrival, self.ev_rf_backoff, self.ev_rf_cca,
            self.ev_rf_txend, self.ev_rf_ackbegin, self.ev_rf_ackend,
            self.ev_rf_resolve, self.ev_bcc_backoff, self.ev_bcc_cca,
            self.ev_bcc_preamend, self.ev_bcc_rtrbegin, self.ev_bcc_rtrend,
            self.ev_bcc_rtrtimeout, self.ev_bcc_databegin, self.ev_bcc_dataend,
            self.ev_bcc_ackbegin, self.ev_bcc_ackend, self.ev_est_tick,
        ]

    # -- plumbing --------------------------------------------------------------

    def push(self, t: float, kind: int, node: int, data=None) -> None:
        self._seq += 1
        heapq.heappush(self.events, (t, self._seq, kind, node, data))

    def log(self, kind: str, src, dst, payload) -> None:
        if self.dump is not None:
            self.dump.append(f"{self.now:.9f} {kind} {src} "
                             f"{'*' if dst is None else dst} {payload}")

    def charge_rf(self, rt: NodeRt, category: str, joules: float,
                  service: bool = True) -> None:
        rt.metrics.energy.add(category, joules)
        if service and rt.rf_serving is not None:
            rt.rf_service_energy += joules

    def charge_bcc(self, rt: NodeRt, category: str, joules: float,
                   service: bool = False, rx: bool = False) -> None:
        rt.metrics.energy.add(category, joules)
        if service and rt.bcc_serving is not None:
            rt.bcc_service_energy += joules
        if rx:
            rt.bcc_rx_energy += joules

    # -- traffic ----------------------------------------------------------------

    def schedule_first_arrivals(self) -> None:
        for rt in self.nodes:
            if rt.arrival_rate > 0 and rt.arrivals_left != 0:
                dt = rt.rng_arrival.expovariate(rt.arrival_rate)
                self.push(dt, EV_ARRIVAL, rt.nid)

    def ev_arrival(self, rt: NodeRt, _data) -> None:
        if self.duration_limit is not None and self.now > self.duration_limit:
            return
        if rt.arrivals_left == 0:
            return
        if rt.arrivals_left > 0:
            rt.arrivals_left -= 1
        self.pkt_seq += 1
        counted = self.now >= self.warmup
        pkt = Packet(rt.nid, self.now, self.pkt_seq, counted)
        if counted:
            rt.metrics.generated += 1
        self.outstanding += 1
        self.route_packet(rt, pkt)
        if rt.arrivals_left != 0:
            self.push(self.now + rt.rng_arrival.expovariate(rt.arrival_rate),
                      EV_ARRIVAL, rt.nid)

    def route_packet(self, rt: NodeRt, pkt: Packet) -> None:
        if self.system in ("rf-direct", "single"):
            pkt.dst = GATEWAY
            self.rf_enqueue(rt, pkt)
        elif self.system == "bcc-only":
            relay = rt.nid % self.cfg.network.n_relays
            if rt.nid < self.cfg.network.n_relays:
                pkt.dst = GATEWAY
                self.rf_enqueue(rt, pkt)
            else:
                self.bcc_enqueue(rt, BccJob("data", pkt=pkt, dst=relay))
        elif self.system == "baseline":
            if rt.relay_route is None:
                pkt.dst = GATEWAY
            else:
                pkt.dst = rt.relay_route
            self.rf_enqueue(rt, pkt)
        else:  # proposed
            route = self.decide_route(rt)
            if route is None:
                pkt.dst = GATEWAY
                self.rf_enqueue(rt, pkt)
            else:
                self.bcc_enqueue(rt, BccJob("data", pkt=pkt, dst=route))

    def decide_route(self, rt: NodeRt) -> Optional[int]:
        if rt.est is None:
            return None
        bcc = self.bcc_solution()
        if bcc is None:
            return None
        rt.compute_calls += 1
        route = forward_decision(rt.proto, rt.est, bcc.mean_delay,
                                 bcc.mean_energy, self.cfg.sim.forward_metric)
        return route.via_relay

    # -- end-to-end bookkeeping ---------------------------------------------------

    def deliver(self, pkt: Packet) -> None:
        self.outstanding -= 1
        if pkt.counted:
            m = self.nodes[pkt.origin].metrics
            m.delivered += 1
            m.delays.append(self.now - pkt.created)

    def lose(self, pkt: Packet, cause: str) -> None:
        self.outstanding -= 1
        if pkt.counted:
            self.nodes[pkt.origin].metrics.lost[cause] += 1

    # -- RF MAC -------------------------------------------------------------------

    def rf_enqueue(self, rt: NodeRt, pkt: Packet) -> None:
        rt.rf_queue.append(pkt)
        if rt.rf_serving is None:
            self.rf_start_service(rt)

    def rf_start_service(self, rt: NodeRt) -> None:
        pkt = rt.rf_queue.popleft()
        rt.rf_serving = pkt
        pkt.leg_start = self.now
        pkt.tx_attempts = 0
        rt.rf_service_energy = 0.0
        rt.rf_busy_since = self.now
        rt.rf_transitions += 1
        self.rf_begin_contention(rt)

    def rf_begin_contention(self, rt: NodeRt) -> None:
        rt.rf_be = 0
        rt.rf_cca_attempts = 0
        self.rf_schedule_backoff(rt)

    def rf_schedule_backoff(self, rt: NodeRt) -> None:
        slots = rt.rng_backoff.randrange(self.cfg.mac.window_slots(rt.rf_be))
        rt.rf_backoff_dur = slots * self.cfg.rf_timing.t_slot
        rt.rf_epoch += 1
        self.push(self.now + rt.rf_backoff_dur, EV_RF_BACKOFF, rt.nid, rt.rf_epoch)

    def ev_rf_backoff(self, rt: NodeRt, epoch) -> None:
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        self.charge_rf(rt, "active", rt.rf_backoff_dur * self.cfg.rf_power.p_act)
        rt.rf_window_start = self.now
        rt.rf_epoch += 1
        self.push(self.now + self.cfg.rf_timing.t_cca, EV_RF_CCA, rt.nid, rt.rf_epoch)

    def ev_rf_cca(self, rt: NodeRt, epoch) -> None:
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        t = self.cfg.rf_timing
        self.charge_rf(rt, "cca", t.t_cca * self.cfg.rf_power.p_cca)
        if self.rf_medium.cca_busy(rt.rf_window_start):
            rt.rf_cca_attempts += 1
            if rt.rf_cca_attempts >= self.cfg.mac.m_c:
                self.rf_finish(rt, lost_cause="cca")
            else:
                rt.rf_be += 1
                self.rf_schedule_backoff(rt)
            return
        tid = self.rf_medium.begin(self.now, t.t_data)
        rt.rf_epoch += 1
        self.push(self.now + t.t_data, EV_RF_TXEND, rt.nid, (rt.rf_epoch, tid))

    def ev_rf_txend(self, rt: NodeRt, data) -> None:
        epoch, tid = data
        corrupted = self.rf_medium.end(tid, self.now)
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        t = self.cfg.rf_timing
        self.charge_rf(rt, "tx", t.t_data * self.cfg.rf_power.p_tx)
        pkt = rt.rf_serving
        self.log("DATA_RF", rt.nid, "gw" if pkt.dst == GATEWAY else pkt.dst,
                 f"{pkt.origin}:{pkt.seq}")
        if pkt.dst == GATEWAY:
            data_ok, ack_ok = self.channel.gw_round(rt.nid, self.now, rt.rng_channel)
        else:
            data_ok, ack_ok = self.channel.nn_round(rt.nid, pkt.dst, self.now,
                                                    rt.rng_channel)
        if data_ok and not corrupted:
            rt.rf_epoch += 1
            self.push(self.now + t.t_att, EV_RF_ACKBEGIN, rt.nid,
                      (rt.rf_epoch, ack_ok))
        else:
            rt.rf_epoch += 1
            self.push(self.now + t.t_att + t.t_ack, EV_RF_RESOLVE, rt.nid,
                      (rt.rf_epoch, False))

    def ev_rf_ackbegin(self, rt: NodeRt, data) -> None:
        epoch, ack_ok = data
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        t = self.cfg.rf_timing
        tid = self.rf_medium.begin(self.now, t.t_ack)
        rt.rf_epoch += 1
        self.push(self.now + t.t_ack, EV_RF_ACKEND, rt.nid,
                  (rt.rf_epoch, ack_ok, tid))

    def ev_rf_ackend(self, rt: NodeRt, data) -> None:
        epoch, ack_ok, tid = data
        ack_corrupt = self.rf_medium.end(tid, self.now)
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        self.rf_resolve(rt, data_received=True, ack_ok=ack_ok and not ack_corrupt)

    def ev_rf_resolve(self, rt: NodeRt, data) -> None:
        epoch, _ = data
        if epoch != rt.rf_epoch or rt.rf_serving is None:
            return
        self.rf_resolve(rt, data_received=False, ack_ok=False)

    def rf_resolve(self, rt: NodeRt, data_received: bool, ack_ok: bool) -> None:
        t, p = self.cfg.rf_timing, self.cfg.rf_power
        self.charge_rf(rt, "active", t.t_att * p.p_act)
        self.charge_rf(rt, "rx", t.t_ack * p.p_rx)
        pkt = rt.rf_serving
        if data_received and ack_ok:
            if pkt.dst != GATEWAY:
                helper = self.nodes[pkt.dst]
                # helper's reception cost: hear the data, turn around, ACK
                helper.metrics.energy.add("rx", t.t_data * p.p_rx)
                helper.metrics.energy.add("active", t.t_att * p.p_act)
                helper.metrics.energy.add("tx", t.t_ack * p.p_tx)
            self.rf_finish(rt, lost_cause=None)
            return
        pkt.tx_attempts += 1
        if pkt.tx_attempts >= self.cfg.mac.m_r:
            self.rf_finish(rt, lost_cause="erasure")
            return
        if self.cfg.sim.retx_policy == "cca":
            rt.rf_cca_attempts = 0
            rt.rf_be = 0
            rt.rf_window_start = self.now
            rt.rf_epoch += 1
            self.push(self.now + t.t_cca, EV_RF_CCA, rt.nid, rt.rf_epoch)
        else:
            self.rf_begin_contention(rt)

    def rf_finish(self, rt: NodeRt, lost_cause: Optional[str]) -> None:
        pkt = rt.rf_serving
        if lost_cause is None:
            if pkt.counted:
                self.rf_service.add(self.now - pkt.leg_start, rt.rf_service_energy)
            if pkt.dst == GATEWAY:
                self.deliver(pkt)
            else:
                hop = Packet(pkt.origin, pkt.created, pkt.seq, pkt.counted)
                hop.dst = GATEWAY
                self.rf_enqueue(self.nodes[pkt.dst], hop)
        else:
            self.lose(pkt, lost_cause)
        rt.rf_busy_time += self.now - rt.rf_busy_since
        rt.rf_serving = None
        rt.rf_epoch += 1
        if rt.rf_queue:
            self.rf_start_service(rt)

    # -- BCC MAC --------------------------------------------------------------

    def bcc_enqueue(self, rt: NodeRt, job: BccJob) -> None:
        if job.kind == "data":
            rt.bcc_data.append(job)
        else:
            rt.bcc_ctrl.append(job)
        if rt.bcc_serving is None and not rt.bcc_rx_engaged:
            self.bcc_start_service(rt)

    def bcc_start_service(self, rt: NodeRt) -> None:
        job = rt.bcc_ctrl.popleft() if rt.bcc_ctrl else rt.bcc_data.popleft()
        rt.bcc_serving = job
        if job.pkt is not None:
            job.pkt.leg_start = self.now
        rt.bcc_service_energy = 0.0
        rt.bcc_busy_since = self.now
        rt.bcc_rx_energy = 0.0
        self.bcc_begin_contention(rt)

    def bcc_begin_contention(self, rt: NodeRt) -> None:
        rt.bcc_be = 0
        rt.bcc_cca_attempts = 0
        self.bcc_schedule_backoff(rt)

    def bcc_schedule_backoff(self, rt: NodeRt) -> None:
        slots = rt.rng_backoff.randrange(self.cfg.mac.window_slots(rt.bcc_be))
        rt.bcc_backoff_dur = slots * self.cfg.bcc_timing.t_slot
        rt.bcc_epoch += 1
        self.push(self.now + rt.bcc_backoff_dur, EV_BCC_BACKOFF, rt.nid, rt.bcc_epoch)

    def ev_bcc_backoff(self, rt: NodeRt, epoch) -> None:
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        self.charge_bcc(rt, "active",
                        rt.bcc_backoff_dur * self.cfg.bcc_power.p_act, service=True)
        rt.bcc_window_start = self.now
        rt.bcc_epoch += 1
        self.push(self.now + self.cfg.bcc_timing.t_cca, EV_BCC_CCA, rt.nid,
                  rt.bcc_epoch)

    def ev_bcc_cca(self, rt: NodeRt, epoch) -> None:
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        t = self.cfg.bcc_timing
        self.charge_bcc(rt, "cca", t.t_cca * self.cfg.bcc_power.p_cca, service=True)
        if self.bcc_medium.cca_busy(rt.bcc_window_start):
            rt.bcc_cca_attempts += 1
            if rt.bcc_cca_attempts >= self.cfg.mac.m_mp:
                self.bcc_abort(rt, "cca")
            else:
                rt.bcc_be += 1
                self.bcc_schedule_backoff(rt)
            return
        tid = self.bcc_medium.begin(self.now, t.t_pream)
        rt.bcc_epoch += 1
        self.push(self.now + t.t_pream, EV_BCC_PREAMEND, rt.nid,
                  (rt.bcc_epoch, tid))

    def bcc_abort(self, rt: NodeRt, cause: str) -> None:
        """Contention budget exhausted (or exchange collapsed)."""
        job = rt.bcc_serving
        if job.kind == "data":
            self.lose(job.pkt, cause)
            self.bcc_finish(rt)
        elif job.kind == "status":
            self.bcc_finish(rt)  # fire-and-forget; the next period recovers
        else:  # token must eventually go through
            job.retries += 1
            if job.retries > 5:
                self.token_in_flight = False
                self.token_job = None
                rt.pending_token = False
                self.bcc_finish(rt)
            else:
                self.bcc_begin_contention(rt)

    def bcc_retry(self, rt: NodeRt) -> None:
        job = rt.bcc_serving
        job.retries += 1
        if job.retries > BCC_RETRY_CAP:
            self.bcc_abort(rt, "collision")
            return
        self.bcc_begin_contention(rt)

    def wake_delay(self, rx: NodeRt, t_start: float) -> float:
        """Time from preamble start until the duty-cycled receiver listens."""
        mac = self.cfg.mac
        cycle = mac.r_s + mac.r_l
        pos = (t_start - rx.wake_phase) % cycle
        if pos < mac.r_l:
            return 0.0
        return cycle - pos

    def ev_bcc_preamend(self, rt: NodeRt, data) -> None:
        epoch, tid = data
        corrupted = self.bcc_medium.end(tid, self.now)
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "tx", t.t_pream * p.p_tx, service=True)
        job = rt.bcc_serving
        if corrupted:
            self.bcc_retry(rt)
            return
        pream_start = self.now - t.t_pream
        if job.dst is not None:
            rx = self.nodes[job.dst]
            if rx.bcc_rx_engaged or rx.bcc_serving is not None:
                # destination is mid-exchange and cannot answer; wait out the
                # RTR window, then retry
                rt.bcc_awaiting_rtr = True
                rt.bcc_epoch += 1
                self.push(self.now + t.t_att + t.t_rtr + t.t_slot,
                          EV_BCC_RTRTIMEOUT, rt.nid, rt.bcc_epoch)
                return
            t_a = self.wake_delay(rx, pream_start)
            t_b = t.t_pream - t_a
            self.charge_bcc(rx, "active", t_b * p.p_act, rx=True)
            rx.bcc_rx_engaged = True
            rx.bcc_busy_since = self.now - t_b
            rt.bcc_awaiting_rtr = True
            rt.bcc_epoch += 1
            self.push(self.now + t.t_att + t.t_rtr + t.t_slot, EV_BCC_RTRTIMEOUT,
                      rt.nid, rt.bcc_epoch)
            self.push(self.now + t.t_att, EV_BCC_RTRBEGIN, rx.nid, rt.nid)
        else:
            # Broadcast: every idle node wakes for the preamble remainder and
            # stays on for the payload; no RTR/ACK handshake for STATUS.
            listeners = []
            for rx in self.nodes:
                if rx.nid == rt.nid or rx.bcc_rx_engaged or rx.bcc_serving is not None:
                    continue
                t_a = self.wake_delay(rx, pream_start)
                self.charge_bcc(rx, "active", (t.t_pream - t_a) * p.p_act)
                rx.bcc_rx_engaged = True
                if rx.bcc_busy_since < 0:
                    rx.bcc_busy_since = self.now - (t.t_pream - t_a)
                listeners.append(rx.nid)
            rt.bcc_epoch += 1
            self.push(self.now + t.t_att, EV_BCC_DATABEGIN, rt.nid,
                      (rt.bcc_epoch, tuple(listeners)))

    def ev_bcc_rtrbegin(self, rt: NodeRt, sender_id) -> None:
        # rt is the receiver transmitting the RTR. Turnaround energy is real
        # but outside the analytic per-packet receiver accounting, so it is
        # charged to the node without entering the service-comparison stat.
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "active", t.t_att * p.p_act)
        tid = self.bcc_medium.begin(self.now, t.t_rtr)
        self.push(self.now + t.t_rtr, EV_BCC_RTREND, rt.nid, (sender_id, tid))

    def ev_bcc_rtrend(self, rt: NodeRt, data) -> None:
        sender_id, tid = data
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        corrupted = self.bcc_medium.end(tid, self.now)
        self.charge_bcc(rt, "tx", t.t_rtr * p.p_tx, rx=True)
        sender = self.nodes[sender_id]
        if (not sender.bcc_awaiting_rtr) or sender.bcc_serving is None:
            self.bcc_disengage(rt)
            return
        if corrupted:
            # sender never decodes the RTR; its timeout will fire
            self.bcc_disengage(rt)
            return
        sender.bcc_awaiting_rtr = False
        self.charge_bcc(sender, "active", t.t_att * p.p_act, service=True)
        self.charge_bcc(sender, "rx", t.t_rtr * p.p_rx, service=True)
        sender.bcc_epoch += 1
        self.push(self.now + t.t_att, EV_BCC_DATABEGIN, sender.nid,
                  (sender.bcc_epoch, (rt.nid,)))

    def ev_bcc_rtrtimeout(self, rt: NodeRt, epoch) -> None:
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        if rt.bcc_awaiting_rtr:
            rt.bcc_awaiting_rtr = False
            self.charge_bcc(rt, "rx",
                            (self.cfg.bcc_timing.t_att + self.cfg.bcc_timing.t_rtr)
                            * self.cfg.bcc_power.p_rx, service=True)
            self.bcc_retry(rt)

    def ev_bcc_databegin(self, rt: NodeRt, data) -> None:
        epoch, listeners = data
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "active", t.t_att * p.p_act, service=True)
        tid = self.bcc_medium.begin(self.now, t.t_data)
        rt.bcc_epoch += 1
        self.push(self.now + t.t_data, EV_BCC_DATAEND, rt.nid,
                  (rt.bcc_epoch, listeners, tid))

    def ev_bcc_dataend(self, rt: NodeRt, data) -> None:
        epoch, listeners, tid = data
        corrupted = self.bcc_medium.end(tid, self.now)
        if epoch != rt.bcc_epoch or rt.bcc_serving is None:
            return
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "tx", t.t_data * p.p_tx, service=True)
        job = rt.bcc_serving
        for lid in listeners:
            self.charge_bcc(self.nodes[lid], "rx", t.t_data * p.p_rx,
                            rx=(job.kind == "data"))
        if corrupted:
            for lid in listeners:
                self.bcc_disengage(self.nodes[lid])
            self.bcc_retry(rt)
            return
        if job.kind == "data":
            rx = self.nodes[listeners[0]]
            rx.bcc_epoch += 1
            self.push(self.now + t.t_att, EV_BCC_ACKBEGIN, rx.nid,
                      (rt.nid, False))
            return
        # control broadcast: deliver payload, then STATUS is done while TOKEN
        # runs its serialized ack train
        msg = job.msg
        self.log(msg.kind, msg.src, msg.dst, msg.payload)
        self.control_bits += msg.len_bits
        if msg.kind == STATUS:
            for lid in listeners:
                self.protocol_rx_status(self.nodes[lid], msg)
                self.bcc_disengage(self.nodes[lid])
            self.bcc_finish(rt)
        else:
            for lid in listeners:
                on_token(self.nodes[lid].proto, msg)
            on_token(rt.proto, msg)
            self.check_relay_invariant()
            rt.bcc_ack_queue = sorted(listeners)
            if rt.bcc_ack_queue:
                rx = self.nodes[rt.bcc_ack_queue.pop(0)]
                self.push(self.now + t.t_att, EV_BCC_ACKBEGIN, rx.nid,
                          (rt.nid, True))
            else:
                self.token_done(rt)

    def ev_bcc_ackbegin(self, rt: NodeRt, data) -> None:
        sender_id, is_token = data
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "active", t.t_att * p.p_act)
        tid = self.bcc_medium.begin(self.now, t.t_ack)
        self.push(self.now + t.t_ack, EV_BCC_ACKEND, rt.nid,
                  (sender_id, is_token, tid))

    def ev_bcc_ackend(self, rt: NodeRt, data) -> None:
        sender_id, is_token, tid = data
        corrupted = self.bcc_medium.end(tid, self.now)
        t, p = self.cfg.bcc_timing, self.cfg.bcc_power
        self.charge_bcc(rt, "tx", t.t_ack * p.p_tx, rx=not is_token)
        sender = self.nodes[sender_id]
        if sender.bcc_serving is None:
            self.bcc_disengage(rt)
            return
        self.charge_bcc(sender, "rx", t.t_ack * p.p_rx, service=True)
        if is_token:
            self.bcc_disengage(rt)
            if corrupted:
                self.bcc_retry(sender)
                return
            if sender.bcc_ack_queue:
                nxt = self.nodes[sender.bcc_ack_queue.pop(0)]
                self.push(self.now + t.t_att, EV_BCC_ACKBEGIN, nxt.nid,
                          (sender.nid, True))
            else:
                self.token_done(sender)
            return
        # unicast data ack
        job = sender.bcc_serving
        self.charge_bcc(sender, "active", t.t_att * p.p_act, service=True)
        recv_energy = rt.bcc_rx_energy + self.cfg.mac.r_s * p.p_sleep
        self.bcc_disengage(rt)
        if corrupted:
            self.bcc_retry(sender)
            return
        pkt = job.pkt
        self.log("DATA_BCC", sender.nid, rt.nid, f"{pkt.origin}:{pkt.seq}")
        if pkt.counted:
            self.bcc_service.add(self.now - pkt.leg_start,
                                 sender.bcc_service_energy + recv_energy)
        self.bcc_finish(sender)
        if self.system == "bcc-only":
            self.deliver(pkt)
        else:
            hop = Packet(pkt.origin, pkt.created, pkt.seq, pkt.counted)
            hop.dst = GATEWAY
            self.rf_enqueue(rt, hop)

    def bcc_disengage(self, rx: NodeRt) -> None:
        if rx.bcc_rx_engaged:
            rx.bcc_rx_engaged = False
            if rx.bcc_busy_since >= 0:
                rx.bcc_busy_time += self.now - rx.bcc_busy_since
                rx.bcc_busy_since = -1.0
            rx.bcc_rx_energy = 0.0
            if rx.bcc_serving is None and (rx.bcc_ctrl or rx.bcc_data):
                self.bcc_start_service(rx)

    def bcc_finish(self, rt: NodeRt) -> None:
        rt.bcc_serving = None
        rt.bcc_awaiting_rtr = False
        if rt.bcc_busy_since >= 0:
            rt.bcc_busy_time += self.now - rt.bcc_busy_since
            rt.bcc_busy_since = -1.0
        rt.bcc_epoch += 1
        if rt.bcc_ctrl or rt.bcc_data:
            self.bcc_start_service(rt)

    def token_done(self, rt: NodeRt) -> None:
        self.token_in_flight = False
        self.token_job = None
        rt.pending_token = False
        self.relay_changes += 1
        self.check_relay_invariant()
        self.bcc_finish(rt)

    # -- protocol driver ---------------------------------------------------------

    def check_relay_invariant(self) -> None:
        n_r = self.cfg.network.n_relays
        flags = sum(1 for rt in self.nodes if rt.proto.is_relay)
        if flags != n_r:
            raise AssertionError(
                f"relay-set invariant violated at t={self.now}: {flags} role "
                f"holders, expected {n_r}")
        for rt in self.nodes:
            if len(rt.proto.relays) != n_r:
                raise AssertionError(
                    f"node {rt.nid} sees {len(rt.proto.relays)} relays at "
                    f"t={self.now}, expected {n_r}")

    def network_pi_cca(self, n_relays: int) -> float:
        """Offline piece of the estimation strategy: the contention fixed
        point is solved once per relay-set size at nominal erasure-free links,
        then each node's own pi_e enters its private expressions."""
        if n_relays not in self._pi_cca_cache:
            links = tuple(LinkState(node_id=i) for i in range(n_relays))
            inp = RfModelInput(relay_links=links, mac=self.cfg.mac,
                               timing=self.cfg.rf_timing, power=self.cfg.rf_power,
                               load_direct=self.cfg.network.rate_total,
                               load_forwarded=0.0)
            try:
                sol = solve_rf(inp, self.cfg.model)
                self._pi_cca_cache[n_relays] = sol.pi_cca
            except (UnstableSystem, NonConvergence):
                self._pi_cca_cache[n_relays] = math.nan
        return self._pi_cca_cache[n_relays]

    def bcc_solution(self):
        if self._bcc_sol is None and not self._bcc_sol_failed:
            inp = BccModelInput(n_nodes=self.cfg.network.n_nodes,
                                n_relays=self.cfg.network.n_relays,
                                load_forwarded=self.cfg.network.rate_forwarded,
                                mac=self.cfg.mac, timing=self.cfg.bcc_timing,
                                power=self.cfg.bcc_power)
            try:
                self._bcc_sol = solve_bcc(inp, self.cfg.model)
            except (UnstableSystem, NonConvergence):
                self._bcc_sol_failed = True
        return self._bcc_sol

    def local_estimate(self, rt: NodeRt):
        """param_est tick body: read the latest RSSI, run the model."""
        pi_e = self.channel.gw_pi_e_point(rt.nid, self.now)
        rt.pi_e_point = pi_e
        pi_cca = self.network_pi_cca(self.cfg.network.n_relays)
        if math.isnan(pi_cca):
            rt.proto.stale = True
            return rt.est
        links = tuple(LinkState(node_id=i, pi_e=pi_e)
                      for i in range(self.cfg.network.n_relays))
        inp = RfModelInput(relay_links=links, mac=self.cfg.mac,
                           timing=self.cfg.rf_timing, power=self.cfg.rf_power,
                           load_direct=self.cfg.network.rate_total,
                           load_forwarded=0.0)
        sol_stub = _PiCcaStub(pi_cca)
        raw = node_estimate(sol_stub, inp, pi_e, self.cfg.model)
        e_rem = max(0.0, self.initial_energy - rt.metrics.energy.total)
        return effective_estimate(raw, e_rem)

    def protocol_rx_status(self, rt: NodeRt, msg: ControlMessage) -> None:
        rt.compute_calls += 1
        out = on_status(rt.proto, msg, self.cfg.sim.better_metric)
        if (out.release_token_to is not None and not self.token_in_flight
                and not rt.pending_token):
            self.token_in_flight = True
            rt.pending_token = True
            token = ControlMessage(kind=TOKEN, src=rt.nid,
                                   dst=out.release_token_to, payload=(),
                                   len_bits=self.cfg.network.status_len_bits)
            job = BccJob("token", msg=token)
            self.token_job = job
            self.bcc_enqueue(rt, job)

    def probe_energy(self, rt: NodeRt) -> None:
        """Non-relay RSSI probe: wake the RF radio for one short exchange."""
        t, p = self.cfg.rf_timing, self.cfg.rf_power
        probe_t = self.cfg.sim.probe_bits / (t.phy_rate_bps or 250e3)
        rt.metrics.energy.add("tx", probe_t * p.p_tx)
        rt.metrics.energy.add("active", t.t_att * p.p_act)
        rt.metrics.energy.add("rx", t.t_ack * p.p_rx)
        rt.rf_transitions += 1
        rt.rf_busy_time += probe_t + t.t_att + t.t_ack

    def ev_est_tick(self, rt: NodeRt, _data) -> None:
        stop_at = self.duration_limit if self.duration_limit is not None else math.inf
        if self.now > stop_at:
            return
        if self.system == "proposed":
            if not rt.proto.is_relay:
                self.probe_energy(rt)
            est = self.local_estimate(rt)
            if est is not None:
                rt.est = est
                msg = make_status(rt.proto, est,
                                  self.cfg.network.status_len_bits)
                self.bcc_enqueue(rt, BccJob("status", msg=msg))
                self.protocol_rx_status(rt, msg)  # sender applies its own update
        elif self.system == "baseline":
            self.probe_energy(rt)
            self.baseline_reroute(rt)
        self.push(self.now + self.cfg.network.est_period, EV_EST_TICK, rt.nid)

    def baseline_reroute(self, rt: NodeRt) -> None:
        """Blocked nodes pick the best reachable neighbor that can still reach
        the gateway; everyone else transmits directly."""
        blocked = self.cfg.sim.blocked_pi_e
        if self.channel.gw_pi_e_point(rt.nid, self.now) < blocked:
            rt.relay_route = None
            return
        best, best_snr = None, 0.0
        for other in self.nodes:
            if other.nid == rt.nid:
                continue
            if self.channel.gw_pi_e_point(other.nid, self.now) >= blocked:
                continue
            if self.channel.nn_pi_e_point(rt.nid, other.nid) >= blocked:
                continue
            snr = self.channel.nn_mean_snr(rt.nid, other.nid)
            if best is None or snr > best_snr:
                best, best_snr = other.nid, snr
        rt.relay_route = best

    # -- main loop -----------------------------------------------------------

    def budget_exhausted(self) -> bool:
        return all(rt.arrivals_left == 0 or rt.arrival_rate == 0
                   for rt in self.nodes)

    def run(self) -> RunMetrics:
        self.schedule_first_arrivals()
        if self.system in ("proposed", "baseline"):
            period = self.cfg.network.est_period
            n = len(self.nodes)
            for rt in self.nodes:
                # estimation phases spread evenly across the period so STATUS
                # broadcasts never contend with each other's preambles
                self.push((rt.nid + 0.5) * period / n, EV_EST_TICK, rt.nid)
        while self.events:
            t, _, kind, nid, data = heapq.heappop(self.events)
            self.now = t
            self.processed += 1
            if self.max_events is not None and self.processed > self.max_events:
                self.partial = True
                break
            self.dispatch[kind](self.nodes[nid], data)
            if self.outstanding == 0 and self.budget_exhausted():
                if self.duration_limit is None or self.now >= self.duration_limit:
                    break
        return self.collect()

    def collect(self) -> RunMetrics:
        duration = self.now
        has_bcc = self.system in ("proposed", "bcc-only")
        idle_bcc = idle_listening_power(self.cfg.mac, self.cfg.bcc_power)
        cycle = self.cfg.mac.r_s + self.cfg.mac.r_l
        sleep_share = self.cfg.mac.r_s / cycle
        for rt in self.nodes:
            rf_idle = max(0.0, duration - rt.rf_busy_time)
            rt.metrics.energy.add("sleep", rf_idle * self.cfg.rf_power.p_sleep)
            if has_bcc:
                bcc_idle = max(0.0, duration - rt.bcc_busy_time)
                rt.metrics.energy.add("sleep",
                                      bcc_idle * idle_bcc * sleep_share)
                rt.metrics.energy.add("active",
                                      bcc_idle * idle_bcc * (1.0 - sleep_share))
            if self.cfg.sim.extended_accounting:
                rt.metrics.energy.add(
                    "transitions",
                    rt.rf_transitions * self.cfg.sim.transition_energy_j)
                rt.metrics.energy.add(
                    "compute", rt.compute_calls * self.cfg.sim.compute_energy_j)
        return RunMetrics(
            system=self.system, seed=self.seed, duration=duration,
            nodes={rt.nid: rt.metrics for rt in self.nodes},
            rf_service=self.rf_service, bcc_service=self.bcc_service,
            control_bits=self.control_bits, relay_changes=self.relay_changes,
            collisions_rf=self.rf_medium.collisions,
            collisions_bcc=self.bcc_medium.collisions,
            events_processed=self.processed, partial=self.partial)


class _PiCcaStub:
    """Adapter handing a precomputed pi_cca to the per-node estimator."""

    __slots__ = ("pi_cca",)

    def __init__(self, pi_cca: float):
        self.pi_cca = pi_cca


def run(cfg: ValidatedConfig, channel: Channel, system: str = "proposed",
        seed: int = 0, packets_per_node: Optional[int] = None,
        duration: Optional[float] = None, max_events: Optional[int] = None,
        dump: Optional[list] = None, warmup: float = 0.0,
        initial_energy: float = 100.0) -> RunMetrics:
    eng = Engine(cfg, channel, system, seed, packets_per_node, duration,
                 max_events, dump, warmup, initial_energy)
    return eng.run()


def run_baseline(cfg: ValidatedConfig, channel: Channel, seed: int = 0,
                 **kwargs) -> RunMetrics:
    return run(cfg, channel, system="baseline", seed=seed, **kwargs)
