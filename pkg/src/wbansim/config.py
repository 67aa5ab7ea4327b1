"""Domain types, default parameter sets, and configuration validation.

Every duration is in seconds, every power in watts, every energy in joules.
Defaults follow the evaluation setup of the modeled system: an IEEE 802.15.4
radio (CC2420-class, 250 kb/s) next to a capacitively coupled on-body link
(8.5 Mb/s class) with a low-power-listening MAC.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib


class ConfigError(ValueError):
    """A configuration invariant was violated; the message names it."""


# CC2420-class current draws converted at the (configurable) supply voltage.
DEFAULT_SUPPLY_VOLTAGE = 1.8
RF_TX_CURRENT_A = 19.7e-3
RF_RX_CURRENT_A = 17.4e-3
RF_SLEEP_CURRENT_A = 20e-6

DEFAULT_NOISE_FLOOR_DBM = -95.0

# 11-byte 802.15.4 ACK frame; used to derive the ACK packet error probability.
DEFAULT_ACK_BITS = 88

RF_PHY_RATE_BPS = 250e3


@dataclass(frozen=True)
class TimingParams:
    """MAC/PHY timing constants for one radio technology."""

    t_slot: float
    t_cca: float
    t_data: float
    t_ack: float
    t_att: float
    t_rtr: float = 0.0      # BCC only: ready-to-receive frame
    t_pream: float = 0.0    # BCC only: wake-up preamble
    phy_rate_bps: Optional[float] = None

    def validate(self, name: str, payload_bits: Optional[int] = None) -> None:
        for f in dataclasses.fields(self):
            if f.name == "phy_rate_bps":
                continue
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name}.{f.name} must be finite and >= 0, got {v}")
        if self.phy_rate_bps is not None and payload_bits is not None:
            expect = payload_bits / self.phy_rate_bps
            if expect > 0 and abs(self.t_data - expect) > 0.01 * expect:
                raise ConfigError(
                    f"{name}.t_data={self.t_data} inconsistent with "
                    f"payload_bits/phy_rate={expect} (>1% off)"
                )


@dataclass(frozen=True)
class PowerProfile:
    """Power draw of one transceiver in each radio state, watts."""

    p_act: float
    p_cca: float
    p_tx: float
    p_rx: float
    p_sleep: float

    def validate(self, name: str) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name}.{f.name} must be finite and >= 0, got {v}")
        if self.p_sleep > self.p_act:
            raise ConfigError(f"{name}: p_sleep must not exceed p_act")
        if self.p_act > max(self.p_tx, self.p_rx):
            raise ConfigError(f"{name}: p_act must not exceed max(p_tx, p_rx)")


@dataclass(frozen=True)
class MacParams:
    """Tunables of both MACs.

    m_r/m_c bound transmissions and CCA attempts on the RF link, m_mp bounds
    preamble CCA attempts on the BCC link.  Backoff stage i draws uniformly
    from [0, 2^(be_min+i) - 1] slots; be_max=None leaves the exponent uncapped.
    """

    m_r: int = 3
    m_c: int = 3
    be_min: int = 3
    be_max: Optional[int] = None
    m_mp: int = 3
    r_s: float = 10e-3
    r_l: float = 0.5e-3

    def validate(self) -> None:
        if self.m_r < 1:
            raise ConfigError("mac.m_r must be >= 1")
        if self.m_c < 1:
            raise ConfigError("mac.m_c must be >= 1")
        if self.m_mp < 1:
            raise ConfigError("mac.m_mp must be >= 1")
        if self.be_min < 0:
            raise ConfigError("mac.be_min must be >= 0")
        if self.be_max is not None and self.be_max < self.be_min:
            raise ConfigError("mac.be_max must be >= be_min")
        if self.r_s < 0 or self.r_l < 0:
            raise ConfigError("mac.r_s and mac.r_l must be >= 0")
        if self.r_s + self.r_l <= 0:
            raise ConfigError("mac.r_s + mac.r_l must be > 0")

    def window_slots(self, stage: int) -> int:
        """Contention window W_i = 2^(be_min+i) slots at backoff stage i."""
        be = self.be_min + stage
        if self.be_max is not None:
            be = min(be, self.be_max)
        return 1 << be


@dataclass(frozen=True)
class NetworkConfig:
    """Topology and traffic description: N nodes, the first n_relays of which
    start as RF relays; per_node_rate holds one Poisson rate per node."""

    n_nodes: int
    n_relays: int
    per_node_rate: tuple
    payload_bits: int = 800
    est_period: float = 1.0
    status_len_bits: int = 160
    ack_bits: int = DEFAULT_ACK_BITS

    def validate(self) -> None:
        if self.n_nodes < 1:
            raise ConfigError("network.n_nodes must be >= 1")
        if not (1 <= self.n_relays <= self.n_nodes):
            if self.n_relays > self.n_nodes:
                raise ConfigError("n_relays exceeds n_nodes")
            raise ConfigError("network.n_relays must be >= 1")
        if len(self.per_node_rate) != self.n_nodes:
            raise ConfigError("network.per_node_rate needs one entry per node")
        if any(r < 0 or not math.isfinite(r) for r in self.per_node_rate):
            raise ConfigError("network.per_node_rate entries must be >= 0")
        if self.payload_bits <= 0:
            raise ConfigError("network.payload_bits must be > 0")
        if self.est_period <= 0:
            raise ConfigError("network.est_period must be > 0")
        if self.status_len_bits <= 0:
            raise ConfigError("network.status_len_bits must be > 0")

    @property
    def rate_total(self) -> float:
        return float(sum(self.per_node_rate))

    @property
    def rate_direct(self) -> float:
        """Load generated by the current relay set (first n_relays nodes)."""
        return float(sum(self.per_node_rate[: self.n_relays]))

    @property
    def rate_forwarded(self) -> float:
        """Load entering the BCC network from the non-relay nodes."""
        return float(sum(self.per_node_rate[self.n_relays:]))


@dataclass(frozen=True)
class ModelOptions:
    """Switches for the documented interpretation choices in the models.

    cca_scaling: 'share' weighs channel occupancy by the competing nodes'
        share of the busy period ((m-1)/m); 'paper' keeps the printed (m-1)
        factor, which counts every competitor as carrying the full aggregate
        load and overshoots the event simulator badly for m > 2.
    a_cca_variant: 'paper' evaluates the printed CCA-count expression, which
        is zero whenever the erasure probability is zero; 'corrected' adds the
        successful round's expected CCA count.
    rayleigh_average_ber: average the OQPSK BER over the Rayleigh SNR
        distribution instead of evaluating it at the point SNR estimate.
    """

    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM
    supply_voltage: float = DEFAULT_SUPPLY_VOLTAGE
    cca_scaling: str = "share"
    a_cca_variant: str = "paper"
    rayleigh_average_ber: bool = False

    def validate(self) -> None:
        if self.cca_scaling not in ("share", "paper"):
            raise ConfigError("model.cca_scaling must be 'share' or 'paper'")
        if self.a_cca_variant not in ("paper", "corrected"):
            raise ConfigError("model.a_cca_variant must be 'paper' or 'corrected'")
        if self.supply_voltage <= 0:
            raise ConfigError("model.supply_voltage must be > 0")


@dataclass(frozen=True)
class SimOptions:
    """Simulator behavior switches.

    retx_policy: what an RF node does after an ACK timeout. 'cca' re-enters at
        the carrier-sense step with a fresh CCA budget and no new random
        backoff, matching the analytical service model; 'backoff' restarts the
        full CSMA/CA contention as the 802.15.4 standard prescribes.
    extended_accounting: add power-up/down transition energy and per-call
        protocol compute energy to the metrics.
    """

    retx_policy: str = "cca"
    extended_accounting: bool = False
    transition_energy_j: float = 1.5e-6   # CC2420-class PLL/regulator start-up
    compute_energy_j: float = 0.2e-6      # per rx_STATUS/forward_decision call
    forward_metric: str = "energy"        # energy | delay | combined
    better_metric: str = "delay"          # delay | energy (relay-drop count)
    blocked_pi_e: float = 0.99            # link treated as fully blocked above this
    probe_bits: int = DEFAULT_ACK_BITS

    def validate(self) -> None:
        if self.retx_policy not in ("cca", "backoff"):
            raise ConfigError("sim.retx_policy must be 'cca' or 'backoff'")
        if self.forward_metric not in ("energy", "delay", "combined"):
            raise ConfigError("sim.forward_metric must be energy|delay|combined")
        if self.better_metric not in ("delay", "energy"):
            raise ConfigError("sim.better_metric must be delay|energy")


@dataclass(frozen=True)
class LinkState:
    """Latest per-node RF channel state plus remaining battery energy."""

    node_id: int
    rssi_dbm: float = 0.0
    snr_linear: float = 0.0
    pi_e: float = 0.0
    e_rem: float = 1.0

    def validate(self) -> None:
        if not (0.0 <= self.pi_e <= 1.0):
            raise ConfigError(f"link[{self.node_id}].pi_e must be in [0,1]")
        if self.snr_linear < 0:
            raise ConfigError(f"link[{self.node_id}].snr_linear must be >= 0")
        if self.e_rem < 0:
            raise ConfigError(f"link[{self.node_id}].e_rem must be >= 0")


@dataclass(frozen=True)
class PerfEstimate:
    """A node's advertised RF performance: mean delay/energy per packet, the
    energy cost metric E^2/E_rem, and the residual packet loss ratio."""

    mean_delay: float
    mean_energy: float
    energy_cost: float
    plr: float


def default_rf_timing() -> TimingParams:
    return TimingParams(
        t_slot=0.192e-3,
        t_cca=0.25e-3,
        t_data=1.12e-3,
        t_ack=0.352e-3,
        t_att=0.384e-3,
    )


def default_bcc_timing() -> TimingParams:
    return TimingParams(
        t_slot=23e-6,
        t_cca=23e-6,
        t_data=0.2e-3,
        t_ack=0.1e-3,
        t_att=0.1e-3,
        t_rtr=0.1e-3,
        t_pream=12e-3,
    )


def default_rf_power(supply_voltage: float = DEFAULT_SUPPLY_VOLTAGE) -> PowerProfile:
    # The radio sits in RX mode during backoff (ready for CCA), so active and
    # CCA power both default to the RX draw.
    p_rx = RF_RX_CURRENT_A * supply_voltage
    return PowerProfile(
        p_act=p_rx,
        p_cca=p_rx,
        p_tx=RF_TX_CURRENT_A * supply_voltage,
        p_rx=p_rx,
        p_sleep=RF_SLEEP_CURRENT_A * supply_voltage,
    )


def default_bcc_power() -> PowerProfile:
    # Measured transceiver figures: 2.1 mW receiving, 0.6 mW transmitting.
    # The always-on wake-up receiver draw is folded into p_sleep.
    return PowerProfile(p_act=2.1e-3, p_cca=2.1e-3, p_tx=0.6e-3, p_rx=2.1e-3,
                        p_sleep=1e-6)


def default_network(n_nodes: int = 4, n_relays: int = 2,
                    rate: float = 10.0) -> NetworkConfig:
    return NetworkConfig(n_nodes=n_nodes, n_relays=n_relays,
                         per_node_rate=tuple([rate] * n_nodes))


@dataclass(frozen=True)
class ValidatedConfig:
    """A fully populated, invariant-checked configuration bundle."""

    network: NetworkConfig
    rf_timing: TimingParams
    bcc_timing: TimingParams
    rf_power: PowerProfile
    bcc_power: PowerProfile
    mac: MacParams
    model: ModelOptions = field(default_factory=ModelOptions)
    sim: SimOptions = field(default_factory=SimOptions)

    def with_(self, **kwargs) -> "ValidatedConfig":
        return validate_config(**{**self._parts(), **kwargs})

    def _parts(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def validate_config(network: Optional[NetworkConfig] = None,
                    rf_timing: Optional[TimingParams] = None,
                    bcc_timing: Optional[TimingParams] = None,
                    rf_power: Optional[PowerProfile] = None,
                    bcc_power: Optional[PowerProfile] = None,
                    mac: Optional[MacParams] = None,
                    model: Optional[ModelOptions] = None,
                    sim: Optional[SimOptions] = None) -> ValidatedConfig:
    """Fill defaults for omitted parts and check every invariant.

    Raises ConfigError naming the first violated invariant.
    """
    model = model or ModelOptions()
    model.validate()
    cfg = ValidatedConfig(
        network=network or default_network(),
        rf_timing=rf_timing or default_rf_timing(),
        bcc_timing=bcc_timing or default_bcc_timing(),
        rf_power=rf_power or default_rf_power(model.supply_voltage),
        bcc_power=bcc_power or default_bcc_power(),
        mac=mac or MacParams(),
        model=model,
        sim=sim or SimOptions(),
    )
    cfg.network.validate()
    cfg.rf_timing.validate("rf.timing", cfg.network.payload_bits)
    cfg.bcc_timing.validate("bcc.timing", cfg.network.payload_bits)
    cfg.rf_power.validate("rf.power")
    cfg.bcc_power.validate("bcc.power")
    cfg.mac.validate()
    cfg.sim.validate()
    if cfg.bcc_timing.t_pream < cfg.mac.r_s:
        raise ConfigError(
            "bcc.timing.t_pream must cover a full sleep phase (t_pream >= mac.r_s)")
    return cfg


def snr_from_rssi(rssi_dbm: float, noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM) -> float:
    """Linear SNR from an RSSI reading against the receiver noise floor."""
    gamma = 10.0 ** ((rssi_dbm - noise_floor_dbm) / 10.0)
    return max(0.0, gamma)


# ---------------------------------------------------------------------------
# Config file round trip.  TOML sections: [network], [rf.timing], [bcc.timing],
# [rf.power], [bcc.power], [mac], [model], [sim].  Writing uses repr() floats
# so a load/save cycle preserves every value bit-exactly.

_SECTION_TYPES = {
    "network": NetworkConfig,
    ("rf", "timing"): TimingParams,
    ("bcc", "timing"): TimingParams,
    ("rf", "power"): PowerProfile,
    ("bcc", "power"): PowerProfile,
    "mac": MacParams,
    "model": ModelOptions,
    "sim": SimOptions,
}


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")
    if cls is NetworkConfig and "per_node_rate" in data:
        data = dict(data, per_node_rate=tuple(float(x) for x in data["per_node_rate"]))
    return cls(**data)


def loads_config(text: str) -> ValidatedConfig:
    raw = tomllib.loads(text)
    kw = {}
    if "network" in raw:
        kw["network"] = _build(NetworkConfig, raw["network"], "network")
    for tech in ("rf", "bcc"):
        sub = raw.get(tech, {})
        if "timing" in sub:
            kw[f"{tech}_timing"] = _build(TimingParams, sub["timing"], f"{tech}.timing")
        if "power" in sub:
            kw[f"{tech}_power"] = _build(PowerProfile, sub["power"], f"{tech}.power")
    if "mac" in raw:
        kw["mac"] = _build(MacParams, raw["mac"], "mac")
    if "model" in raw:
        kw["model"] = _build(ModelOptions, raw["model"], "model")
    if "sim" in raw:
        kw["sim"] = _build(SimOptions, raw["sim"], "sim")
    return validate_config(**kw)


def load_config(path) -> ValidatedConfig:
    with open(path, "rb") as fh:
        return loads_config(fh.read().decode("utf-8"))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"%s"' % v
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def _emit_section(name: str, obj) -> str:
    lines = [f"[{name}]"]
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_toml_value(v)}")
    return "\n".join(lines)


def dumps_config(cfg: ValidatedConfig) -> str:
    parts = [
        _emit_section("network", cfg.network),
        _emit_section("rf.timing", cfg.rf_timing),
        _emit_section("bcc.timing", cfg.bcc_timing),
        _emit_section("rf.power", cfg.rf_power),
        _emit_section("bcc.power", cfg.bcc_power),
        _emit_section("mac", cfg.mac),
        _emit_section("model", cfg.model),
        _emit_section("sim", cfg.sim),
    ]
    return "\n\n".join(parts) + "\n"


def save_config(cfg: ValidatedConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_config(cfg))
