"""Closed-form performance model of the body-coupled link's LPL MAC.

Delay decomposes into the preamble-contention HOL delay, the wake-up phase
(preamble + turnaround + ready-to-receive), and the contention-free data
phase.  The link itself is treated as error-free; the only losses are CCA
truncations during preamble contention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .config import MacParams, ModelOptions, PowerProfile, TimingParams
from .numerics import FixedPointProblem, solve_fixed_point
from .rf_model import UnstableSystem, cca_hol_delay, cca_attempt_count


class InvalidDutyCycle(ValueError):
    """The preamble cannot bridge a full sleep phase (t_pream < r_s)."""


@dataclass(frozen=True)
class BccModelInput:
    n_nodes: int
    n_relays: int
    load_forwarded: float
    mac: MacParams
    timing: TimingParams
    power: PowerProfile

    def validate(self) -> None:
        if self.n_nodes < self.n_relays:
            raise ValueError("n_nodes must be >= n_relays")
        if self.load_forwarded < 0:
            raise ValueError("load_forwarded must be >= 0")

    @property
    def n_contenders(self) -> int:
        """Forwarding nodes that transmit on the BCC link."""
        return self.n_nodes - self.n_relays


@dataclass(frozen=True)
class WakeupTiming:
    mean_t_w: float
    mean_t_a: float
    mean_t_b: float
    t2: float


@dataclass(frozen=True)
class BccModelSolution:
    sigma_cca: float
    mean_hol_delay: float
    t2: float
    t3: float
    mean_delay: float
    mean_t_a: float
    mean_t_b: float
    mean_t_w: float
    energy_send: float
    energy_recv: float
    mean_energy: float
    pi_loss: float
    utilization: float
    mean_busy_pkts: float
    residual: float
    iterations: int


def wakeup_timing(mac: MacParams, timing: TimingParams) -> WakeupTiming:
    """Wake-up phase statistics for a duty-cycled receiver.

    A transmission's preamble start falls uniformly in the receiver's
    sleep/listen cycle, so the wait-to-wake T_w averages r_s/2 and is only
    incurred with the sleeping probability r_s/(r_s+r_l).  The receiver stays
    up to the end of the fixed-length preamble.
    """
    if timing.t_pream < mac.r_s:
        raise InvalidDutyCycle(
            f"t_pream={timing.t_pream} cannot bridge a sleep phase r_s={mac.r_s}")
    if mac.r_s + mac.r_l <= 0:
        raise ValueError("r_s + r_l must be > 0")
    mean_t_w = mac.r_s / 2.0
    mean_t_a = mean_t_w * (mac.r_s / (mac.r_s + mac.r_l))
    mean_t_b = timing.t_pream - mean_t_a
    t2 = timing.t_pream + timing.t_att + timing.t_rtr
    return WakeupTiming(mean_t_w=mean_t_w, mean_t_a=mean_t_a,
                        mean_t_b=mean_t_b, t2=t2)


def data_phase_delay(timing: TimingParams) -> float:
    """Contention-free data phase: data, two turnarounds, ACK."""
    return timing.t_data + 2.0 * timing.t_att + timing.t_ack


def bcc_energy(mean_hol_delay: float, sigma_cca: float, mac: MacParams,
               timing: TimingParams, power: PowerProfile,
               wake: WakeupTiming) -> Tuple[float, float, float]:
    """Per-packet sender and receiver energy.

    The sender splits its HOL time between active backoff and CCA sensing,
    then pays for the preamble, the RTR wait and the data phase.  The
    receiver pays one sleep phase, the awake preamble remainder T_b, the RTR,
    the data reception and the final ACK.
    """
    cca_time = cca_attempt_count(sigma_cca, mac.m_mp) * timing.t_cca
    # The truncated branch of the HOL expression charges one extra CCA slot,
    # so clip rather than let the active share go negative.
    act_time = max(0.0, mean_hol_delay - cca_time)
    e_contention = act_time * power.p_act + cca_time * power.p_cca
    e_wakeup = (timing.t_pream * power.p_tx + timing.t_att * power.p_act
                + timing.t_rtr * power.p_rx)
    e_data = (timing.t_data * power.p_tx + 2.0 * timing.t_att * power.p_act
              + timing.t_ack * power.p_rx)
    send = e_contention + e_wakeup + e_data
    recv = (mac.r_s * power.p_sleep + wake.mean_t_b * power.p_act
            + timing.t_rtr * power.p_tx + timing.t_data * power.p_rx
            + timing.t_ack * power.p_tx)
    return send, recv, send + recv


def idle_listening_power(mac: MacParams, power: PowerProfile) -> float:
    """Standing draw of a duty-cycled listener: r_l awake per r_s+r_l cycle."""
    cycle = mac.r_s + mac.r_l
    return (mac.r_l * power.p_act + mac.r_s * power.p_sleep) / cycle


def solve_bcc(inp: BccModelInput,
              options: Optional[ModelOptions] = None) -> BccModelSolution:
    """Solve the preamble-contention fixed point and assemble the solution.

    With at most one forwarding node, or no forwarded load, contention is
    impossible and the closed contention-free solution is returned directly.
    """
    options = options or ModelOptions()
    inp.validate()
    mac, timing = inp.mac, inp.timing
    wake = wakeup_timing(mac, timing)
    t3 = data_phase_delay(timing)
    lam = inp.load_forwarded
    m = inp.n_contenders
    service_tail = wake.t2 + t3
    occupancy = timing.t_cca + timing.t_data + timing.t_att + timing.t_ack

    def finish(sigma: float, residual: float, iterations: int) -> BccModelSolution:
        d_hol = cca_hol_delay(sigma, mac, timing, attempts=mac.m_mp)
        loss = sigma ** mac.m_mp
        rho = lam * (d_hol + service_tail)
        if lam > 0 and rho >= 1.0:
            raise UnstableSystem(rho, "bcc")
        busy = 1.0 / (1.0 - rho) if rho < 1.0 else math.inf
        send, recv, total = bcc_energy(d_hol, sigma, mac, timing, inp.power, wake)
        return BccModelSolution(
            sigma_cca=sigma,
            mean_hol_delay=d_hol,
            t2=wake.t2,
            t3=t3,
            mean_delay=d_hol + wake.t2 + t3,
            mean_t_a=wake.mean_t_a,
            mean_t_b=wake.mean_t_b,
            mean_t_w=wake.mean_t_w,
            energy_send=send,
            energy_recv=recv,
            mean_energy=total,
            pi_loss=loss,
            utilization=rho,
            mean_busy_pkts=busy,
            residual=residual,
            iterations=iterations,
        )

    if lam <= 0 or m <= 1:
        return finish(0.0, 0.0, 0)

    if options.cca_scaling == "paper":
        contender_scale = float(m - 1)
    else:
        contender_scale = (m - 1) / m

    def step(x):
        s, _ = x
        d_new = cca_hol_delay(s, mac, timing, attempts=mac.m_mp)
        loss = s ** mac.m_mp
        rho = lam * (d_new + service_tail)
        busy = 1.0 / (1.0 - min(rho, 1.0 - 1e-9))
        s_new = (contender_scale * (1.0 - loss) * busy * occupancy
                 / (1.0 / lam + busy * d_new))
        return (s_new, d_new)

    d0 = cca_hol_delay(0.0, mac, timing, attempts=mac.m_mp)
    problem = FixedPointProblem(residual_map=step, prob_coords=(0,))
    result = solve_fixed_point(problem, (0.0, d0))
    return finish(result.x[0], result.residual, result.iterations)
