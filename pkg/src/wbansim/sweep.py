"""Experiment orchestration: parameter sweeps, comparative trace replays, and
the CSV reports they produce.

A sweep runs the cross product of axis values x seeds x systems against one
base configuration, writing a long-format CSV (one row per run) plus an
aggregate CSV with per-point medians/IQRs and, when both proposed and
baseline are present, their relative energy/delay/PLR (median over the
common seeds).  Identical specs reproduce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .bcc_model import BccModelInput
from .config import LinkState, ValidatedConfig, snr_from_rssi
from .numerics import NonConvergence
from .optimizer import BccOptProblem, Infeasible, optimize_bcc
from .rf_model import RfModelInput, UnstableSystem, solve_rf
from .sim.engine import run
from .sim.metrics import RunMetrics
from .sim.scenario import Channel, body_scenario
from .traces import RssiTrace

DEFAULT_RUN_CAP = 10_000

# duty-cycle grid offered to the per-point optimizer; preamble contention is
# kept deeply persistent so data reliability is not traded for energy
SWEEP_RS_GRID = tuple(1e-3 * (2.0 ** i) for i in range(9))    # 1 ms .. 256 ms
SWEEP_RL_GRID = (0.1e-3, 0.2e-3, 0.5e-3, 1e-3)
SWEEP_MMP_GRID = (8,)


@dataclass(frozen=True)
class SweepSpec:
    base: ValidatedConfig
    axes: Dict[str, Tuple]                 # e.g. {"load_scale": (0.1, 0.3)}
    systems: Tuple[str, ...] = ("proposed", "baseline")
    seeds: Tuple[int, ...] = tuple(range(10))
    scenario_kind: str = "scenario1"
    scenario_seed: int = 0
    packets_per_node: int = 1000
    warmup: float = 5.0
    tau: Optional[float] = None           # re-optimize BCC duty per point
    run_cap: int = DEFAULT_RUN_CAP

    def points(self) -> List[Dict[str, float]]:
        keys = sorted(self.axes)
        pts: List[Dict[str, float]] = [{}]
        for k in keys:
            pts = [dict(p, **{k: v}) for p in pts for v in self.axes[k]]
        return pts


def _apply_axis(cfg: ValidatedConfig, key: str, value) -> ValidatedConfig:
    net, mac = cfg.network, cfg.mac
    if key == "load_scale":
        rates = tuple(r * value for r in net.per_node_rate)
        return cfg.with_(network=dataclasses.replace(net, per_node_rate=rates))
    if key == "n_relays":
        return cfg.with_(network=dataclasses.replace(net, n_relays=int(value)))
    if key == "est_period":
        return cfg.with_(network=dataclasses.replace(net, est_period=value))
    if key.startswith("mac."):
        return cfg.with_(mac=dataclasses.replace(mac, **{key[4:]: value}))
    if key == "snr_offset_db":
        return cfg  # handled by the scenario builder
    raise ValueError(f"unknown sweep axis {key!r}")


def _point_config(spec: SweepSpec, point: Dict[str, float]) -> ValidatedConfig:
    cfg = spec.base
    for k, v in sorted(point.items()):
        cfg = _apply_axis(cfg, k, v)
    if spec.tau is not None:
        cfg = optimize_duty_cycle(cfg, spec.tau)
    return cfg


def optimize_duty_cycle(cfg: ValidatedConfig, tau: float) -> ValidatedConfig:
    """Pick (r_s, r_l) for the forwarding load under the combined delay bound
    and write them (and the derived preamble) back into the configuration."""
    net = cfg.network
    links = tuple(LinkState(node_id=i) for i in range(net.n_relays))
    rf_inp = RfModelInput(relay_links=links, mac=cfg.mac, timing=cfg.rf_timing,
                          power=cfg.rf_power, load_direct=net.rate_total,
                          load_forwarded=0.0)
    try:
        rf_delay = solve_rf(rf_inp, cfg.model).mean_delay
    except (UnstableSystem, NonConvergence):
        rf_delay = cfg.rf_timing.t_data * 3
    base = BccModelInput(n_nodes=net.n_nodes, n_relays=net.n_relays,
                         load_forwarded=max(net.rate_forwarded, 1e-9),
                         mac=cfg.mac, timing=cfg.bcc_timing, power=cfg.bcc_power)
    problem = BccOptProblem(base=base, tau=tau, rf_delay=rf_delay,
                            rl_values=SWEEP_RL_GRID, rs_values=SWEEP_RS_GRID,
                            mmp_values=SWEEP_MMP_GRID, options=cfg.model)
    try:
        result = optimize_bcc(problem)
    except Infeasible:
        return cfg
    r_s, r_l = result.best_params["r_s"], result.best_params["r_l"]
    m_mp = int(result.best_params["m_mp"])
    mac = dataclasses.replace(cfg.mac, r_s=r_s, r_l=r_l, m_mp=m_mp)
    timing = dataclasses.replace(cfg.bcc_timing, t_pream=r_s + r_l)
    return cfg.with_(mac=mac, bcc_timing=timing)


def _point_channel(spec: SweepSpec, point: Dict[str, float],
                   cfg: ValidatedConfig) -> Channel:
    offset = 10 ** (point.get("snr_offset_db", 0.0) / 10.0)
    kw = {}
    if spec.scenario_kind == "scenario1" and "snr_offset_db" in point:
        kw = dict(los_snr=10 ** 2.5 * offset, nlos_snr=10 ** 0.5 * offset,
                  internode_los_snr=10 ** 1.0 * offset)
    sc = body_scenario(spec.scenario_kind, cfg.network.n_nodes,
                       seed=spec.scenario_seed, **kw)
    return Channel("rayleigh", cfg.network.n_nodes, cfg.network.payload_bits,
                   cfg.network.ack_bits, scenario=sc)


def _point_label(point: Dict[str, float]) -> str:
    return ";".join(f"{k}={point[k]!r}" for k in sorted(point)) or "base"


@dataclass
class SweepResult:
    long_rows: List[str]
    aggregate_rows: List[str]
    failures: List[str]

    def write(self, out_dir, prefix: str = "sweep") -> Tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        long_path = out / f"{prefix}_runs.csv"
        agg_path = out / f"{prefix}_aggregate.csv"
        long_path.write_text("\n".join(self.long_rows) + "\n", encoding="utf-8")
        agg_path.write_text("\n".join(self.aggregate_rows) + "\n", encoding="utf-8")
        if self.failures:
            (out / f"{prefix}_failures.csv").write_text(
                "\n".join(self.failures) + "\n", encoding="utf-8")
        return long_path, agg_path


def _median_iqr(xs: Sequence[float]) -> Tuple[float, float]:
    med = statistics.median(xs)
    if len(xs) < 2:
        return med, 0.0
    qs = statistics.quantiles(xs, n=4, method="inclusive")
    return med, qs[2] - qs[0]


AGG_HEADER = ("point,system,runs,plr_med,plr_iqr,delay_med,delay_iqr,"
              "energy_med,energy_iqr,energy_ratio_med,delay_ratio_med,"
              "plr_ratio_med")


def run_sweep(spec: SweepSpec) -> SweepResult:
    points = spec.points()
    total = len(points) * len(spec.seeds) * len(spec.systems)
    if total > spec.run_cap:
        raise ValueError(f"sweep size {total} exceeds cap {spec.run_cap}")
    long_rows = ["point," + RunMetrics.CSV_HEADER]
    agg_rows = [AGG_HEADER]
    failures: List[str] = []
    for point in points:
        label = _point_label(point)
        cfg = _point_config(spec, point)
        channel = _point_channel(spec, point, cfg)
        per_system: Dict[str, Dict[int, RunMetrics]] = {}
        for system in spec.systems:
            per_system[system] = {}
            for seed in spec.seeds:
                try:
                    m = run(cfg, channel, system=system, seed=seed,
                            packets_per_node=spec.packets_per_node,
                            warmup=spec.warmup)
                except Exception as exc:  # noqa: BLE001 - reported, not hidden
                    failures.append(f"{label},{system},{seed},{exc!r}")
                    continue
                per_system[system][seed] = m
                long_rows.append(f"{label},{m.csv_row()}")
        for system in spec.systems:
            runs = per_system[system]
            if not runs:
                continue
            plr_med, plr_iqr = _median_iqr([m.plr for m in runs.values()])
            d_med, d_iqr = _median_iqr([m.mean_delay for m in runs.values()])
            e_med, e_iqr = _median_iqr([m.energy_total for m in runs.values()])
            ratios = ("", "", "")
            if system == "proposed" and "baseline" in per_system:
                base = per_system["baseline"]
                common = sorted(set(runs) & set(base))
                if common:
                    er = statistics.median(
                        runs[s].energy_total / base[s].energy_total
                        for s in common)
                    dr = statistics.median(
                        runs[s].mean_delay / base[s].mean_delay
                        for s in common)
                    pr = statistics.median(
                        (runs[s].plr / base[s].plr) if base[s].plr > 0 else math.inf
                        for s in common)
                    ratios = (repr(er), repr(dr), repr(pr))
            agg_rows.append(
                f"{label},{system},{len(runs)},{plr_med!r},{plr_iqr!r},"
                f"{d_med!r},{d_iqr!r},{e_med!r},{e_iqr!r},"
                f"{ratios[0]},{ratios[1]},{ratios[2]}")
    return SweepResult(long_rows=long_rows, aggregate_rows=agg_rows,
                       failures=failures)


# ---------------------------------------------------------------------------
# Comparative trace replay (two-node walking experiment)

TRACE_SYSTEMS = ("proposed", "baseline", "torso", "pocket")
TRACE_HEADER = "system,m_r,t_est,seed,plr,mean_delay_s,energy_total_j,delivered,generated"


def trace_run(cfg: ValidatedConfig, traces: Dict[str, RssiTrace],
              mr_values: Sequence[int] = (1, 2, 3, 4),
              est_periods: Sequence[float] = (1.0,),
              seeds: Sequence[int] = (0,),
              internode_rssi_dbm: float = -90.0,
              systems: Sequence[str] = TRACE_SYSTEMS) -> List[str]:
    """Replay the torso/pocket traces through each system.

    proposed: both nodes, BCC forwarding with one relay role.
    baseline: both nodes, RF only, opportunistic neighbor relaying.
    torso/pocket: a single node carrying the whole load over that link.
    """
    names = sorted(traces)
    if names != ["pocket", "torso"]:
        raise ValueError("traces must map 'torso' and 'pocket'")
    trace_obj = _merge_traces(traces)
    duration = min(t.duration for t in traces.values())
    nn_snr = snr_from_rssi(internode_rssi_dbm)
    rows = [TRACE_HEADER]
    total_rate = cfg.network.rate_total
    for system in systems:
        for m_r in mr_values:
            for t_est in est_periods:
                for seed in sorted(seeds):
                    mac = dataclasses.replace(cfg.mac, m_r=int(m_r))
                    if system in ("torso", "pocket"):
                        net = dataclasses.replace(
                            cfg.network, n_nodes=1, n_relays=1,
                            per_node_rate=(total_rate,), est_period=t_est)
                        run_cfg = cfg.with_(network=net, mac=mac)
                        ch = Channel("trace", 1, net.payload_bits, net.ack_bits,
                                     trace=trace_obj,
                                     trace_node_ids={0: system})
                        m = run(run_cfg, ch, system="rf-direct", seed=seed,
                                duration=duration)
                    else:
                        half = total_rate / 2
                        net = dataclasses.replace(
                            cfg.network, n_nodes=2, n_relays=1,
                            per_node_rate=(half, half), est_period=t_est)
                        run_cfg = cfg.with_(network=net, mac=mac)
                        ch = Channel("trace", 2, net.payload_bits, net.ack_bits,
                                     trace=trace_obj,
                                     trace_node_ids={0: "torso", 1: "pocket"},
                                     internode_snr=((math.inf, nn_snr),
                                                    (nn_snr, math.inf)))
                        m = run(run_cfg, ch, system=system, seed=seed,
                                duration=duration)
                    rows.append(f"{system},{m_r},{t_est!r},{seed},{m.plr!r},"
                                f"{m.mean_delay!r},{m.energy_total!r},"
                                f"{m.delivered},{m.generated}")
    return rows


def _merge_traces(traces: Dict[str, RssiTrace]) -> RssiTrace:
    samples = []
    for tr in traces.values():
        samples.extend(tr.samples)
    samples.sort(key=lambda s: (s[0], s[1]))
    by_node = {}
    for t, node, rssi in samples:
        times, values = by_node.setdefault(node, ([], []))
        times.append(t)
        values.append(rssi)
    return RssiTrace(samples=tuple(samples), by_node=by_node)
