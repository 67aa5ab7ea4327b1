"""Body-shadowing scenarios and per-frame channel realizations.

A scenario fixes each node's mean gateway SNR plus a node-to-node SNR matrix.
A channel turns those (or a fixed erasure table, or an RSSI trace) into
per-round frame outcomes for the simulator and point estimates for the
protocol's parameter-estimation ticks.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..config import snr_from_rssi
from ..rf_model import pi_e_from_snr

SCENARIO_LOS_SNR = 10 ** 2.5     # 25 dB: line-of-sight gateway link
SCENARIO_NLOS_SNR = 10 ** 0.5    # 5 dB: body-shadowed but not dead
SCENARIO_MID_SNR = 10 ** 1.0     # 10 dB: on-body node-to-node link


def derive_rng(master_seed: int, *key: int) -> random.Random:
    """Named substream: one independent generator per (seed, purpose, ...)."""
    ss = np.random.SeedSequence([int(master_seed) & 0x7FFFFFFF, *key])
    return random.Random(int(ss.generate_state(1, np.uint64)[0]))


@dataclass(frozen=True)
class Scenario:
    """Mean-SNR topology: gw_snr[i] is node i's gateway link (0 = blocked),
    internode_snr[i][j] the on-body RF link between nodes i and j."""

    gw_snr: Tuple[float, ...]
    internode_snr: Tuple[Tuple[float, ...], ...]
    los_flags: Tuple[bool, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.gw_snr)


def body_scenario(kind: str, n_nodes: int, seed: int = 0,
                  los_snr: float = SCENARIO_LOS_SNR,
                  nlos_snr: float = SCENARIO_NLOS_SNR,
                  internode_los_snr: float = SCENARIO_MID_SNR,
                  p_los: float = 0.75,
                  blocked_neighbors: bool = True,
                  matrix: Optional[Sequence[Sequence[float]]] = None,
                  gw_snr: Optional[Sequence[float]] = None) -> Scenario:
    """Build the evaluation topologies.

    scenario1: seated posture; each node is LOS with probability p_los and at
        least half the nodes are forced LOS.  NLOS nodes keep a weak link.
    scenario2: lying posture; exactly ceil(N/2) nodes are LOS, the rest have a
        fully blocked gateway link, and (by default) no usable RF path to the
        LOS group either.
    custom: caller supplies gw_snr and the full internode matrix.
    """
    if kind == "custom":
        if gw_snr is None or matrix is None:
            raise ValueError("custom scenario needs gw_snr and matrix")
        return Scenario(gw_snr=tuple(float(x) for x in gw_snr),
                        internode_snr=tuple(tuple(float(v) for v in row)
                                            for row in matrix),
                        los_flags=tuple(x > 0 for x in gw_snr))
    rng = derive_rng(seed, 0xB0D7)
    if kind == "scenario1":
        los = [rng.random() < p_los for _ in range(n_nodes)]
        need = math.ceil(n_nodes / 2)
        short = need - sum(los)
        if short > 0:
            dark = [i for i, f in enumerate(los) if not f]
            for i in rng.sample(dark, short):
                los[i] = True
    elif kind == "scenario2":
        ids = list(range(n_nodes))
        rng.shuffle(ids)
        chosen = set(ids[: math.ceil(n_nodes / 2)])
        los = [i in chosen for i in range(n_nodes)]
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")

    gw = []
    for f in los:
        if f:
            gw.append(los_snr)
        else:
            gw.append(nlos_snr if kind == "scenario1" else 0.0)
    inter = []
    for i in range(n_nodes):
        row = []
        for j in range(n_nodes):
            if i == j:
                row.append(math.inf)
            elif los[i] and los[j]:
                row.append(los_snr)
            elif kind == "scenario2" and blocked_neighbors:
                row.append(0.0)
            else:
                row.append(internode_los_snr)
        inter.append(tuple(row))
    return Scenario(gw_snr=tuple(gw), internode_snr=tuple(inter),
                    los_flags=tuple(los))


class Channel:
    """Per-round frame outcomes and point link estimates.

    mode 'fixed': each round fails with the given per-node probability (data
        and ACK are not distinguished; a failed round sends no ACK).
    mode 'rayleigh': the data and ACK frames draw independent exponential SNR
        around the scenario mean, per frame.
    mode 'trace': the link's RSSI at the frame time (last observation carried
        forward) sets the frame error probability directly.
    """

    def __init__(self, mode: str, n_nodes: int, payload_bits: int, ack_bits: int,
                 scenario: Optional[Scenario] = None,
                 fixed_pi_e: Optional[Sequence[float]] = None,
                 fixed_internode_pi_e: Optional[Sequence[Sequence[float]]] = None,
                 trace=None, trace_node_ids: Optional[Dict[int, str]] = None,
                 internode_snr: Optional[Sequence[Sequence[float]]] = None,
                 noise_floor_dbm: float = -95.0):
        if mode not in ("fixed", "rayleigh", "trace"):
            raise ValueError(f"unknown channel mode {mode!r}")
        self.mode = mode
        self.n_nodes = n_nodes
        self.payload_bits = payload_bits
        self.ack_bits = ack_bits
        self.scenario = scenario
        self.fixed_pi_e = list(fixed_pi_e) if fixed_pi_e is not None else None
        self.fixed_internode_pi_e = fixed_internode_pi_e
        self.trace = trace
        self.trace_node_ids = trace_node_ids or {}
        self.internode_snr = internode_snr
        self.noise_floor_dbm = noise_floor_dbm
        if mode == "fixed" and self.fixed_pi_e is None:
            raise ValueError("fixed mode needs fixed_pi_e")
        if mode in ("rayleigh",) and scenario is None:
            raise ValueError("rayleigh mode needs a scenario")
        if mode == "trace" and trace is None:
            raise ValueError("trace mode needs a trace")

    # -- mean/point views (protocol estimation) ------------------------------

    def gw_mean_snr(self, node: int, now: float) -> float:
        if self.mode == "trace":
            name = self.trace_node_ids[node]
            return snr_from_rssi(self.trace.value_at(name, now), self.noise_floor_dbm)
        if self.mode == "rayleigh":
            return self.scenario.gw_snr[node]
        pe = self.fixed_pi_e[node]
        return math.inf if pe <= 0 else 0.0  # only used for blocked checks

    def gw_pi_e_point(self, node: int, now: float) -> float:
        """Point estimate from the latest RSSI reading (quasi-static view)."""
        if self.mode == "fixed":
            return self.fixed_pi_e[node]
        snr = self.gw_mean_snr(node, now)
        if snr <= 0:
            return 1.0
        if math.isinf(snr):
            return 0.0
        return pi_e_from_snr(snr, self.payload_bits, self.ack_bits)

    def nn_mean_snr(self, a: int, b: int) -> float:
        if self.mode == "fixed":
            if self.fixed_internode_pi_e is None:
                return 0.0
            pe = self.fixed_internode_pi_e[a][b]
            return math.inf if pe <= 0 else 0.0
        if self.internode_snr is not None:
            return self.internode_snr[a][b]
        return self.scenario.internode_snr[a][b]

    def nn_pi_e_point(self, a: int, b: int) -> float:
        if self.mode == "fixed":
            if self.fixed_internode_pi_e is None:
                return 1.0
            return self.fixed_internode_pi_e[a][b]
        snr = self.nn_mean_snr(a, b)
        if snr <= 0:
            return 1.0
        if math.isinf(snr):
            return 0.0
        return pi_e_from_snr(snr, self.payload_bits, self.ack_bits)

    # -- per-round realization ------------------------------------------------

    def _round_from_snr(self, mean_snr: float, rng: random.Random,
                        fading: bool) -> Tuple[bool, bool]:
        if mean_snr <= 0:
            return False, False
        if math.isinf(mean_snr):
            return True, True
        from ..rf_model import bit_error_rate, packet_error_prob
        if fading:
            g_data = rng.expovariate(1.0 / mean_snr)
            g_ack = rng.expovariate(1.0 / mean_snr)
        else:
            g_data = g_ack = mean_snr
        peb_d = packet_error_prob(bit_error_rate(g_data), self.payload_bits)
        peb_a = packet_error_prob(bit_error_rate(g_ack), self.ack_bits)
        return rng.random() >= peb_d, rng.random() >= peb_a

    def gw_round(self, node: int, now: float, rng: random.Random) -> Tuple[bool, bool]:
        """(data delivered, ack deliverable) for one gateway round trip."""
        if self.mode == "fixed":
            ok = rng.random() >= self.fixed_pi_e[node]
            return ok, True
        if self.mode == "trace":
            return self._round_from_snr(self.gw_mean_snr(node, now), rng,
                                        fading=False)
        return self._round_from_snr(self.scenario.gw_snr[node], rng, fading=True)

    def nn_round(self, a: int, b: int, now: float,
                 rng: random.Random) -> Tuple[bool, bool]:
        if self.mode == "fixed":
            if self.fixed_internode_pi_e is None:
                return False, False
            ok = rng.random() >= self.fixed_internode_pi_e[a][b]
            return ok, True
        return self._round_from_snr(self.nn_mean_snr(a, b), rng,
                                    fading=(self.mode == "rayleigh"))
