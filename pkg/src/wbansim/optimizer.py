"""Constrained MAC-parameter selection by exhaustive grid search.

Three problems are covered: RF energy minimization under a per-node loss
bound, BCC energy minimization under a combined delay bound, and the reversed
delay-minimization under a per-packet energy budget.  Grids are exact on the
integer parameters and explicit on the duty-cycle parameters, so the search is
the specification of the optimum, not an approximation of it.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .bcc_model import (BccModelInput, BccModelSolution, InvalidDutyCycle,
                        idle_listening_power, solve_bcc)
from .config import ModelOptions
from .numerics import NonConvergence
from .rf_model import (RfModelInput, RfModelSolution, UnstableSystem, node_loss,
                       solve_rf)


class Infeasible(RuntimeError):
    """No grid candidate satisfied the constraint; carries a diagnostic with
    the least-violating candidate."""

    def __init__(self, message: str, diagnostic: Optional[dict] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


def _log_grid(lo: float, hi: float, n: int) -> Tuple[float, ...]:
    if n == 1:
        return (lo,)
    ratio = (hi / lo) ** (1.0 / (n - 1))
    return tuple(lo * ratio ** i for i in range(n))


DEFAULT_MC_VALUES = tuple(range(1, 9))
DEFAULT_MR_VALUES = tuple(range(1, 9))
DEFAULT_MMP_VALUES = tuple(range(1, 9))
DEFAULT_DUTY_GRID = _log_grid(0.1e-3, 1.0, 16)


@dataclass(frozen=True)
class RfOptProblem:
    base: RfModelInput
    plr_max: float = 0.15
    mc_values: Tuple[int, ...] = DEFAULT_MC_VALUES
    mr_values: Tuple[int, ...] = DEFAULT_MR_VALUES
    options: ModelOptions = field(default_factory=ModelOptions)


@dataclass(frozen=True)
class BccOptProblem:
    base: BccModelInput
    tau: float
    rf_delay: float
    rl_values: Tuple[float, ...] = DEFAULT_DUTY_GRID
    rs_values: Tuple[float, ...] = DEFAULT_DUTY_GRID
    mmp_values: Tuple[int, ...] = DEFAULT_MMP_VALUES
    include_idle_cost: bool = True
    options: ModelOptions = field(default_factory=ModelOptions)


@dataclass(frozen=True)
class OptResult:
    best_params: Dict[str, float]
    best_objective: float
    feasible_count: int
    evaluated_count: int
    table: Optional[List[dict]] = None


def _rf_candidates(problem: RfOptProblem):
    """Evaluate every (m_r, m_c) pair; unstable/unsolvable candidates are kept
    in the table as infeasible."""
    for m_r in problem.mr_values:
        for m_c in problem.mc_values:
            mac = dataclasses.replace(problem.base.mac, m_r=m_r, m_c=m_c)
            inp = dataclasses.replace(problem.base, mac=mac)
            row = {"m_r": m_r, "m_c": m_c}
            try:
                sol = solve_rf(inp, problem.options)
            except (UnstableSystem, NonConvergence) as exc:
                yield row, None, None, str(exc)
                continue
            worst = max(node_loss(sol.pi_cca, link.pi_e, mac)
                        for link in inp.relay_links)
            yield row, sol, worst, None


def optimize_rf(problem: RfOptProblem, keep_table: bool = False) -> OptResult:
    """Minimize per-packet RF energy subject to every relay's residual loss
    staying under plr_max.  Ties break to smaller (m_r, m_c)."""
    best = None
    best_key = None
    least_violating = None
    feasible = evaluated = 0
    table: List[dict] = []
    for row, sol, worst_plr, err in _rf_candidates(problem):
        evaluated += 1
        entry = dict(row)
        if sol is None:
            entry.update(feasible=False, error=err)
        else:
            ok = worst_plr <= problem.plr_max
            entry.update(energy=sol.mean_energy, delay=sol.mean_delay,
                         plr=worst_plr, feasible=ok)
            if least_violating is None or worst_plr < least_violating["plr"]:
                least_violating = entry
            if ok:
                feasible += 1
                key = (sol.mean_energy, row["m_r"], row["m_c"])
                if best_key is None or key < best_key:
                    best_key, best = key, (row, sol)
        if keep_table:
            table.append(entry)
    if best is None:
        raise Infeasible("no (m_r, m_c) candidate meets the loss bound",
                         diagnostic=least_violating)
    row, sol = best
    return OptResult(best_params=dict(row), best_objective=sol.mean_energy,
                     feasible_count=feasible, evaluated_count=evaluated,
                     table=table or None)


def _bcc_candidate_input(problem: BccOptProblem, r_l: float, r_s: float,
                         m_mp: int) -> BccModelInput:
    # The preamble is re-derived per candidate so one preamble always bridges
    # the candidate's sleep phase.
    mac = dataclasses.replace(problem.base.mac, r_l=r_l, r_s=r_s, m_mp=m_mp)
    timing = dataclasses.replace(problem.base.timing, t_pream=r_s + r_l)
    return dataclasses.replace(problem.base, mac=mac, timing=timing)


def bcc_objective(problem: BccOptProblem, inp: BccModelInput,
                  sol: BccModelSolution) -> float:
    """Per-packet system energy: sender + receiver, plus (by default) the
    destination's duty-cycle listening cost amortized over the forwarded load.
    Without the idle share, shrinking the duty cycle would look free."""
    energy = sol.mean_energy
    if problem.include_idle_cost and problem.base.load_forwarded > 0:
        energy += (idle_listening_power(inp.mac, inp.power)
                   / problem.base.load_forwarded)
    return energy


def _bcc_candidates(problem: BccOptProblem):
    for m_mp in problem.mmp_values:
        for r_s in problem.rs_values:
            for r_l in problem.rl_values:
                row = {"r_l": r_l, "r_s": r_s, "m_mp": m_mp}
                inp = _bcc_candidate_input(problem, r_l, r_s, m_mp)
                try:
                    sol = solve_bcc(inp, problem.options)
                except (UnstableSystem, NonConvergence, InvalidDutyCycle) as exc:
                    yield row, inp, None, str(exc)
                    continue
                yield row, inp, sol, None


def optimize_bcc(problem: BccOptProblem, keep_table: bool = False) -> OptResult:
    """Minimize BCC per-packet energy subject to rf_delay + E[D_bcc] <= tau.
    Ties break to more sleep (larger r_s, then larger r_l, then smaller m_mp).
    """
    if problem.tau <= 0:
        raise ValueError("tau must be > 0")
    best = None
    best_key = None
    min_delay = None
    feasible = evaluated = 0
    table: List[dict] = []
    for row, inp, sol, err in _bcc_candidates(problem):
        evaluated += 1
        entry = dict(row)
        if sol is None:
            entry.update(feasible=False, error=err)
        else:
            total_delay = problem.rf_delay + sol.mean_delay
            obj = bcc_objective(problem, inp, sol)
            ok = total_delay <= problem.tau
            entry.update(energy=obj, delay=total_delay, feasible=ok)
            if min_delay is None or total_delay < min_delay["delay"]:
                min_delay = entry
            if ok:
                feasible += 1
                key = (obj, -row["r_s"], -row["r_l"], row["m_mp"])
                if best_key is None or key < best_key:
                    best_key, best = key, (row, obj)
        if keep_table:
            table.append(entry)
    if best is None:
        raise Infeasible("no (r_l, r_s, m_mp) candidate meets the delay bound",
                         diagnostic=min_delay)
    row, obj = best
    return OptResult(best_params=dict(row), best_objective=obj,
                     feasible_count=feasible, evaluated_count=evaluated,
                     table=table or None)


def optimize_delay_under_energy(rf_problem: RfOptProblem,
                                bcc_problem: BccOptProblem,
                                budget_per_packet: float,
                                keep_table: bool = False) -> OptResult:
    """Reversed problem: minimize E[D_rf] + E[D_bcc] subject to the combined
    per-packet energy staying under the budget.

    The two links' delay and energy add, so each link's grid is solved once
    and candidates are combined pairwise.  Ties break to smaller m_r, m_c,
    then more sleep.
    """
    if budget_per_packet <= 0:
        raise ValueError("budget_per_packet must be > 0")
    rf_rows = [(row, sol) for row, sol, _, err in _rf_candidates(rf_problem)
               if err is None]
    bcc_rows = [(row, inp, sol) for row, inp, sol, err in _bcc_candidates(bcc_problem)
                if err is None]
    best = None
    best_key = None
    cheapest = None
    feasible = 0
    evaluated = 0
    table: List[dict] = []
    for rf_row, rf_sol in rf_rows:
        for bcc_row, bcc_inp, bcc_sol in bcc_rows:
            evaluated += 1
            delay = rf_sol.mean_delay + bcc_sol.mean_delay
            energy = rf_sol.mean_energy + bcc_objective(bcc_problem, bcc_inp, bcc_sol)
            ok = energy <= budget_per_packet
            if cheapest is None or energy < cheapest["energy"]:
                cheapest = {**rf_row, **bcc_row, "energy": energy, "delay": delay}
            if ok:
                feasible += 1
                key = (delay, rf_row["m_r"], rf_row["m_c"],
                       -bcc_row["r_s"], -bcc_row["r_l"], bcc_row["m_mp"])
                if best_key is None or key < best_key:
                    best_key = key
                    best = ({**rf_row, **bcc_row}, delay, energy)
            if keep_table:
                table.append({**rf_row, **bcc_row, "energy": energy,
                              "delay": delay, "feasible": ok})
    if best is None:
        raise Infeasible("no candidate meets the energy budget", diagnostic=cheapest)
    params, delay, energy = best
    return OptResult(best_params=params, best_objective=delay,
                     feasible_count=feasible, evaluated_count=evaluated,
                     table=table or None)


def write_table_csv(result: OptResult, path) -> None:
    """Audit export of the per-candidate table."""
    if not result.table:
        raise ValueError("result has no table; run the optimizer with keep_table")
    cols: List[str] = []
    for row in result.table:
        for k in row:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in result.table:
            w.writerow(row)
