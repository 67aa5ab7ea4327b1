"""Per-run metric collection: counts, delays, energy by category."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

ENERGY_CATEGORIES = ("active", "cca", "tx", "rx", "sleep", "transitions", "compute")

LOSS_CAUSES = ("erasure", "cca", "collision", "unreachable")


class EnergyMeter:
    """Energy accumulator for one node, split by radio state category."""

    __slots__ = ("by_category",)

    def __init__(self):
        self.by_category = {c: 0.0 for c in ENERGY_CATEGORIES}

    def add(self, category: str, joules: float) -> None:
        self.by_category[category] += joules

    @property
    def total(self) -> float:
        return sum(self.by_category.values())


def _mean(xs: List[float]) -> float:
    return sum(xs) / len(xs) if xs else math.nan


def _percentile(xs: List[float], q: float) -> float:
    if not xs:
        return math.nan
    s = sorted(xs)
    idx = min(len(s) - 1, max(0, int(math.ceil(q * len(s))) - 1))
    return s[idx]


@dataclass
class NodeMetrics:
    generated: int = 0
    delivered: int = 0
    lost: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in LOSS_CAUSES})
    delays: List[float] = field(default_factory=list)
    energy: EnergyMeter = field(default_factory=EnergyMeter)

    @property
    def lost_total(self) -> int:
        return sum(self.lost.values())


@dataclass
class ServiceStats:
    """MAC-layer service statistics for one technology, kept separately from
    end-to-end figures so the analytic models can be validated like for like."""

    count: int = 0
    delay_sum: float = 0.0
    energy_sum: float = 0.0

    def add(self, delay: float, energy: float) -> None:
        self.count += 1
        self.delay_sum += delay
        self.energy_sum += energy

    @property
    def mean_delay(self) -> float:
        return self.delay_sum / self.count if self.count else math.nan

    @property
    def mean_energy(self) -> float:
        return self.energy_sum / self.count if self.count else math.nan


@dataclass
class RunMetrics:
    system: str
    seed: int
    duration: float
    nodes: Dict[int, NodeMetrics]
    rf_service: ServiceStats
    bcc_service: ServiceStats
    control_bits: int
    relay_changes: int
    collisions_rf: int
    collisions_bcc: int
    events_processed: int
    partial: bool = False

    # -- aggregates ----------------------------------------------------------

    @property
    def generated(self) -> int:
        return sum(n.generated for n in self.nodes.values())

    @property
    def delivered(self) -> int:
        return sum(n.delivered for n in self.nodes.values())

    @property
    def lost(self) -> int:
        return sum(n.lost_total for n in self.nodes.values())

    @property
    def plr(self) -> float:
        return self.lost / self.generated if self.generated else 0.0

    def node_plr(self, node_id: int) -> float:
        n = self.nodes[node_id]
        return n.lost_total / n.generated if n.generated else 0.0

    @property
    def mean_delay(self) -> float:
        all_delays = [d for n in self.nodes.values() for d in n.delays]
        return _mean(all_delays)

    def delay_percentile(self, q: float) -> float:
        all_delays = [d for n in self.nodes.values() for d in n.delays]
        return _percentile(all_delays, q)

    @property
    def energy_total(self) -> float:
        return sum(n.energy.total for n in self.nodes.values())

    def energy_by_category(self) -> Dict[str, float]:
        out = {c: 0.0 for c in ENERGY_CATEGORIES}
        for n in self.nodes.values():
            for c, v in n.energy.by_category.items():
                out[c] += v
        return out

    @property
    def energy_per_delivered(self) -> float:
        return self.energy_total / self.delivered if self.delivered else math.nan

    # -- reporting -----------------------------------------------------------

    CSV_HEADER = ("system,seed,duration_s,generated,delivered,lost,plr,"
                  "mean_delay_s,p50_delay_s,p95_delay_s,energy_total_j,"
                  "energy_active_j,energy_cca_j,energy_tx_j,energy_rx_j,"
                  "energy_sleep_j,energy_transitions_j,energy_compute_j,"
                  "energy_per_delivered_j,rf_service_delay_s,rf_service_energy_j,"
                  "bcc_service_delay_s,bcc_service_energy_j,control_bits,"
                  "relay_changes,collisions_rf,collisions_bcc,events,partial")

    def csv_row(self) -> str:
        cats = self.energy_by_category()
        vals = [
            self.system, self.seed, repr(self.duration), self.generated,
            self.delivered, self.lost, repr(self.plr), repr(self.mean_delay),
            repr(self.delay_percentile(0.50)), repr(self.delay_percentile(0.95)),
            repr(self.energy_total),
        ]
        vals += [repr(cats[c]) for c in ENERGY_CATEGORIES]
        vals += [
            repr(self.energy_per_delivered),
            repr(self.rf_service.mean_delay), repr(self.rf_service.mean_energy),
            repr(self.bcc_service.mean_delay), repr(self.bcc_service.mean_energy),
            self.control_bits, self.relay_changes, self.collisions_rf,
            self.collisions_bcc, self.events_processed, int(self.partial),
        ]
        return ",".join(str(v) for v in vals)
