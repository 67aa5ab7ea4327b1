"""Closed-form performance model of the unslotted 802.15.4 RF uplink.

Given the relay set's per-link frame failure probabilities and the aggregate
load, the model jointly solves the CCA-busy probability and the head-of-line
delay as a fixed point, then derives total delay, loss probability, expected
CCA count and per-packet transmission energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .config import LinkState, MacParams, ModelOptions, PowerProfile, TimingParams
from .numerics import FixedPointProblem, q_function, solve_fixed_point


class UnstableSystem(RuntimeError):
    """The M/G/1 utilization reached or exceeded 1 at the model solution."""

    def __init__(self, rho: float, context: str = "rf"):
        super().__init__(f"{context} queue unstable: rho={rho:.4f} >= 1")
        self.rho = rho


class NegativeDuration(RuntimeError):
    """CCA time exceeded the HOL delay; the solution is inconsistent."""


def bit_error_rate(snr_linear: float, rayleigh_average: bool = False) -> float:
    """OQPSK bit error rate at linear SNR: Q(sqrt(3*gamma)).

    With rayleigh_average=True the BER is instead averaged over an exponential
    SNR distribution with the given mean (closed form for Q(sqrt(3*gamma))).
    """
    if snr_linear < 0:
        raise ValueError("snr_linear must be >= 0")
    if rayleigh_average:
        g = 1.5 * snr_linear
        return 0.5 * (1.0 - math.sqrt(g / (1.0 + g)))
    return q_function(math.sqrt(3.0 * snr_linear))


def packet_error_prob(eps: float, len_bits: int) -> float:
    """1 - (1-eps)^L, evaluated in log space so tiny eps stays accurate."""
    if not (0.0 <= eps <= 1.0):
        raise ValueError("eps must be in [0,1]")
    if len_bits < 1:
        raise ValueError("len_bits must be >= 1")
    if eps == 0.0:
        return 0.0
    if eps == 1.0:
        return 1.0
    return -math.expm1(len_bits * math.log1p(-eps))


def frame_failure_prob(peb_data: float, peb_ack: float) -> float:
    """A frame round trip fails if the data packet or its ACK is corrupted."""
    for v in (peb_data, peb_ack):
        if not (0.0 <= v <= 1.0):
            raise ValueError("packet error probabilities must be in [0,1]")
    return 1.0 - (1.0 - peb_data) * (1.0 - peb_ack)


def pi_e_from_snr(snr_linear: float, payload_bits: int, ack_bits: int,
                  rayleigh_average: bool = False) -> float:
    eps = bit_error_rate(snr_linear, rayleigh_average)
    return frame_failure_prob(packet_error_prob(eps, payload_bits),
                              packet_error_prob(eps, ack_bits))


@dataclass(frozen=True)
class RfModelInput:
    relay_links: Tuple[LinkState, ...]
    mac: MacParams
    timing: TimingParams
    power: PowerProfile
    load_direct: float
    load_forwarded: float

    def validate(self) -> None:
        if not self.relay_links:
            raise ValueError("relay_links must be non-empty")
        if self.load_direct < 0 or self.load_forwarded < 0:
            raise ValueError("loads must be >= 0")
        for link in self.relay_links:
            link.validate()

    @property
    def load_total(self) -> float:
        return self.load_direct + self.load_forwarded


@dataclass(frozen=True)
class RfModelSolution:
    pi_cca: float
    mean_hol_delay: float
    mean_delay: float
    pi_loss: float
    mean_cca_count: float
    mean_energy: float
    utilization: float
    mean_busy_pkts: float
    residual: float
    iterations: int


def cca_hol_delay(pi_cca: float, mac: MacParams, timing: TimingParams,
                  attempts: Optional[int] = None) -> float:
    """Expected HOL time spent in backoff and CCA for one contention phase.

    Mixture over v failed CCAs followed by a success, truncated after the
    attempt budget; the truncated branch keeps its printed (M+1) CCA charge.
    """
    m = mac.m_c if attempts is None else attempts
    p = pi_cca
    ts, tc = timing.t_slot, timing.t_cca
    total = 0.0
    backoff = 0.0
    for v in range(m):
        backoff += (mac.window_slots(v) - 1) / 2.0
        total += (p ** v) * (1.0 - p) * (backoff * ts + (v + 1) * tc)
    total += (p ** m) * (backoff * ts + (m + 1) * tc)
    return total


def cca_attempt_count(pi_cca: float, m: int) -> float:
    """Expected CCAs in one contention phase: v+1 on success after v busy
    results, m when the budget is exhausted."""
    p = pi_cca
    total = sum((v + 1) * (p ** v) * (1.0 - p) for v in range(m))
    return total + m * (p ** m)


def node_hol_delay(e_cca: float, pi_e: float, mac: MacParams,
                   timing: TimingParams) -> float:
    """HOL delay for one relay link: one contention phase plus k ACK-timeout
    round trips, weighted by the truncated-geometric retransmission count."""
    rt = timing.t_att + timing.t_data + timing.t_ack
    return sum((pi_e ** k) * (1.0 - pi_e) * (e_cca + k * rt)
               for k in range(mac.m_r))


def node_loss(pi_cca: float, pi_e: float, mac: MacParams) -> float:
    """Residual loss on one link: erasure truncation after m_r transmissions
    or CCA truncation after m_c busy results, independent events."""
    return 1.0 - (1.0 - pi_e ** mac.m_r) * (1.0 - pi_cca ** mac.m_c)


def node_a_cca(pi_cca: float, pi_e: float, mac: MacParams,
               variant: str = "paper") -> float:
    """Average CCA count entering the energy split.

    'paper' keeps the printed product of mean retransmissions and mean failed
    CCAs per round (zero when pi_e is zero); 'corrected' also counts the
    successful round's CCAs.
    """
    k_term = sum(k * (pi_e ** k) * (1.0 - pi_e) for k in range(mac.m_r))
    u_term = sum(u * (pi_cca ** u) * (1.0 - pi_cca) for u in range(mac.m_c))
    base = k_term * u_term
    if variant == "corrected":
        base += cca_attempt_count(pi_cca, mac.m_c)
    return base


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def solve_rf(inp: RfModelInput,
             options: Optional[ModelOptions] = None) -> RfModelSolution:
    """Jointly solve the CCA-busy probability and the HOL delay, then fill in
    delay, loss, CCA count, energy and the M/G/1 busy-period figures."""
    options = options or ModelOptions()
    inp.validate()
    lam = inp.load_total
    if lam <= 0:
        raise ValueError("total load must be > 0")
    mac, timing = inp.mac, inp.timing
    pi_e = [link.pi_e for link in inp.relay_links]
    n_r = len(pi_e)
    service_tail = timing.t_data + timing.t_att + timing.t_ack
    occupancy = timing.t_cca + service_tail
    if options.cca_scaling == "paper":
        contender_scale = float(n_r - 1)
    else:
        contender_scale = (n_r - 1) / n_r

    def step(x):
        p, _ = x
        e_cca = cca_hol_delay(p, mac, timing)
        d_new = _mean([node_hol_delay(e_cca, pe, mac, timing) for pe in pi_e])
        loss = _mean([node_loss(p, pe, mac) for pe in pi_e])
        rho = lam * (d_new + service_tail)
        busy = 1.0 / (1.0 - min(rho, 1.0 - 1e-9))
        p_new = (contender_scale * (1.0 - loss) * busy * occupancy
                 / (1.0 / lam + busy * d_new))
        return (p_new, d_new)

    d0 = _mean([node_hol_delay(cca_hol_delay(0.0, mac, timing), pe, mac, timing)
                for pe in pi_e])
    problem = FixedPointProblem(residual_map=step, prob_coords=(0,))
    result = solve_fixed_point(problem, (0.0, d0))
    p_star, d_star = result.x

    e_cca = cca_hol_delay(p_star, mac, timing)
    d_star = _mean([node_hol_delay(e_cca, pe, mac, timing) for pe in pi_e])
    loss = _mean([node_loss(p_star, pe, mac) for pe in pi_e])
    rho = lam * (d_star + service_tail)
    if rho >= 1.0:
        raise UnstableSystem(rho, "rf")
    busy_pkts = 1.0 / (1.0 - rho)
    a_cca = _mean([node_a_cca(p_star, pe, mac, options.a_cca_variant)
                   for pe in pi_e])
    energy = rf_energy_terms(d_star, a_cca, timing, inp.power)
    return RfModelSolution(
        pi_cca=p_star,
        mean_hol_delay=d_star,
        mean_delay=d_star + service_tail,
        pi_loss=loss,
        mean_cca_count=a_cca,
        mean_energy=energy,
        utilization=rho,
        mean_busy_pkts=busy_pkts,
        residual=result.residual,
        iterations=result.iterations,
    )


def rf_energy_terms(mean_hol_delay: float, a_cca: float, timing: TimingParams,
                    power: PowerProfile) -> float:
    """Per-packet RF energy: HOL time at active power with the CCA share
    re-priced at CCA power, plus the data/turnaround/ACK tail."""
    cca_time = a_cca * timing.t_cca
    if mean_hol_delay - cca_time < -1e-15:
        raise NegativeDuration(
            f"HOL delay {mean_hol_delay} shorter than CCA time {cca_time}")
    return ((mean_hol_delay - cca_time) * power.p_act
            + power.p_cca * cca_time
            + timing.t_data * power.p_tx
            + timing.t_att * power.p_act
            + timing.t_ack * power.p_rx)


def rf_energy(solution: RfModelSolution, inp: RfModelInput) -> float:
    return rf_energy_terms(solution.mean_hol_delay, solution.mean_cca_count,
                           inp.timing, inp.power)


@dataclass(frozen=True)
class NodeRfEstimate:
    """Model outputs for a single link at the network's solved pi_cca."""

    mean_delay: float
    mean_energy: float
    plr: float
    a_cca: float


def node_estimate(solution: RfModelSolution, inp: RfModelInput, pi_e: float,
                  options: Optional[ModelOptions] = None) -> NodeRfEstimate:
    """Per-node delay/energy/loss before the relay averaging, reusing the
    network-wide pi_cca from a solved model."""
    options = options or ModelOptions()
    mac, timing = inp.mac, inp.timing
    p = solution.pi_cca
    e_cca = cca_hol_delay(p, mac, timing)
    d_hol = node_hol_delay(e_cca, pi_e, mac, timing)
    plr = node_loss(p, pi_e, mac)
    a = node_a_cca(p, pi_e, mac, options.a_cca_variant)
    energy = rf_energy_terms(d_hol, a, timing, inp.power)
    delay = d_hol + timing.t_data + timing.t_att + timing.t_ack
    return NodeRfEstimate(mean_delay=delay, mean_energy=energy, plr=plr, a_cca=a)
