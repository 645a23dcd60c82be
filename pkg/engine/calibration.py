"""
QSDA: Threshold Calibration
Finds the symmetric SPRT threshold eta (eta1 = eta, eta0 = -eta) that gives a
group a target wrong-decision probability under a given rule, and compares
the fastest and majority rules at equal group accuracy.
"""

import math
import sys
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import (
    TAIL_TOL, CALIB_PW_TOL, CALIB_ETA_TOL, CALIB_MAX_ITER, CALIB_BRACKET,
    CALIB_DEGENERATE_ETA, WORKERS,
)
from agents.sprt_model import SprtModel
from agents.sprt_agent import SprtAgent
from engine.decision_profile import DecisionProfile, GroupSpec
from engine.aggregation import GroupOutcome, aggregate
from utils.errors import SdaError, CalibrationError
from utils.log import get_logger

log = get_logger("engine.calibration")

RULES = ("fastest", "majority")


@dataclass(frozen=True)
class CalibrationTask:
    """
    One calibration problem.

    Args:
        target_pw: Target group P[wrong decision], in (0, 0.5).
        n: Group size N.
        rule: "fastest" (q = 1) or "majority" (q = floor(N/2) + 1).
        model: SDM template; only its thresholds are replaced.
        bracket: Search interval for eta, in nats.
        pw_tol: Stop once |achieved - target| < pw_tol.
        eta_tol: Stop once the bracket is narrower than eta_tol.
    """

    target_pw: float
    n: int
    rule: str
    model: SprtModel
    bracket: tuple[float, float] = CALIB_BRACKET
    pw_tol: float = CALIB_PW_TOL
    eta_tol: float = CALIB_ETA_TOL
    max_iter: int = CALIB_MAX_ITER
    delta: float | None = None
    tail_tol: float = TAIL_TOL

    def __post_init__(self):
        if not 0.0 < self.target_pw < 0.5:
            raise ValueError(f"target p_w must lie in (0, 0.5), got {self.target_pw}")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}, got {self.rule!r}")
        lo, hi = self.bracket
        if not 0.0 < lo < hi:
            raise ValueError(f"bracket must satisfy 0 < lo < hi, got {self.bracket}")

    @property
    def spec(self) -> GroupSpec:
        return GroupSpec.fastest(self.n) if self.rule == "fastest" else GroupSpec.majority(self.n)


@dataclass(frozen=True)
class CalibrationResult:
    eta: float
    achieved_pw: float
    group_expected_T: float
    iterations: int
    stop_reason: str
    degenerate: bool = False

    def as_row(self) -> dict:
        return {
            "eta": self.eta,
            "achieved_pw": self.achieved_pw,
            "e_t": self.group_expected_T,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "degenerate": self.degenerate,
        }


@lru_cache(maxsize=256)
def _profile_at(model: SprtModel, eta: float, delta: float | None, tail_tol: float) -> DecisionProfile:
    agent = SprtAgent(model.with_symmetric_threshold(eta), delta=delta, tail_tol=tail_tol)
    return agent.decision_profile()


def group_outcome_at(task: CalibrationTask, eta: float) -> GroupOutcome:
    """Group outcome under H1 for threshold magnitude eta."""
    profile = _profile_at(task.model, eta, task.delta, task.tail_tol)
    spec = task.spec
    return aggregate(profile, spec.n, spec.q, hypothesis=1, tail_tol=task.tail_tol)


def calibrate(task: CalibrationTask) -> CalibrationResult:
    """
    Bisection on eta until the group p_w matches the target.

    Group p_w decreases in eta, so the bracket must give p_w(lo) > target >
    p_w(hi). A target above p_w(lo) with lo near zero is treated as an
    uninformative test: eta = lo is returned with a warning.

    Raises:
        CalibrationError: when the bracket does not straddle the target, the
            response is not monotone, or max_iter is exhausted.
    """
    lo, hi = task.bracket
    pw_lo = group_outcome_at(task, lo).p_w
    pw_hi = group_outcome_at(task, hi).p_w
    log.debug(f"[CAL] N={task.n} {task.rule}: p_w({lo:g})={pw_lo:.6g}, p_w({hi:g})={pw_hi:.6g}")

    if pw_lo <= task.target_pw:
        if lo <= CALIB_DEGENERATE_ETA:
            log.warning(f"[CAL] target {task.target_pw:g} is met at eta={lo:g}; the calibrated test "
                        "is close to uninformative")
            outcome = group_outcome_at(task, lo)
            return CalibrationResult(lo, outcome.p_w, outcome.expected_T, 0, "degenerate", True)
        raise CalibrationError("bracket does not straddle the target",
                               {"target": task.target_pw, "eta_lo": lo, "pw_lo": pw_lo})
    if pw_hi >= task.target_pw:
        raise CalibrationError("bracket does not straddle the target",
                               {"target": task.target_pw, "eta_hi": hi, "pw_hi": pw_hi})

    for iteration in range(1, task.max_iter + 1):
        mid = 0.5 * (lo + hi)
        outcome = group_outcome_at(task, mid)
        pw_mid = outcome.p_w
        if not pw_hi - task.pw_tol <= pw_mid <= pw_lo + task.pw_tol:
            raise CalibrationError("group p_w is not monotone in eta",
                                   {"eta_lo": lo, "eta": mid, "eta_hi": hi,
                                    "pw_lo": pw_lo, "pw": pw_mid, "pw_hi": pw_hi})
        if abs(pw_mid - task.target_pw) < task.pw_tol:
            return CalibrationResult(mid, pw_mid, outcome.expected_T, iteration, "pw_tol")
        if pw_mid > task.target_pw:
            lo, pw_lo = mid, pw_mid
        else:
            hi, pw_hi = mid, pw_mid
        if hi - lo < task.eta_tol:
            return CalibrationResult(mid, pw_mid, outcome.expected_T, iteration, "eta_tol")

    raise CalibrationError("bisection did not converge",
                           {"iterations": task.max_iter, "eta_lo": lo, "eta_hi": hi})


# ═══════════════════════════════════════════════════════════════════════════════
# RULE COMPARISON
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass
class RuleComparison:
    """Rows {target, n, eta/e_t/p_w per rule, winner, error} and crossover N per target."""

    rows: list = field(default_factory=list)
    crossovers: dict = field(default_factory=dict)


def _calibrate_cell(task: CalibrationTask) -> tuple[CalibrationResult | None, str]:
    try:
        return calibrate(task), ""
    except SdaError as e:
        log.warning(f"[CAL] N={task.n} {task.rule} target={task.target_pw:g}: {e}")
        return None, str(e)


def _winner(fastest: CalibrationResult, majority: CalibrationResult) -> str:
    a, b = fastest.group_expected_T, majority.group_expected_T
    if math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12):
        return "tie"
    return "fastest" if a < b else "majority"


def crossover_n(rows: list) -> int | None:
    """Smallest N from which the majority rule is never slower for the rest of the grid."""
    ordered = sorted((r for r in rows if not r["error"]), key=lambda r: r["n"])
    crossover = None
    for row in reversed(ordered):
        if row["winner"] not in ("majority", "tie"):
            break
        crossover = row["n"]
    return crossover


def compare_rules(targets, n_grid, model: SprtModel, workers: int = WORKERS, **task_options) -> RuleComparison:
    """
    Calibrate both rules for every (target, N) and compare their expected times.

    Cells that fail keep their row with the error message.
    """
    tasks = [CalibrationTask(t, n, rule, model, **task_options)
             for t in targets for n in n_grid for rule in RULES]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_calibrate_cell, tasks))
    else:
        results = [_calibrate_cell(task) for task in tasks]

    comparison = RuleComparison()
    for i in range(0, len(tasks), 2):
        task = tasks[i]
        (fast, fast_err), (major, major_err) = results[i], results[i + 1]
        row = {"target": task.target_pw, "n": task.n}
        for name, result in (("fastest", fast), ("majority", major)):
            row[f"eta_{name}"] = result.eta if result else math.nan
            row[f"e_t_{name}"] = result.group_expected_T if result else math.nan
            row[f"p_w_{name}"] = result.achieved_pw if result else math.nan
        row["winner"] = _winner(fast, major) if fast and major else ""
        row["error"] = "; ".join(e for e in (fast_err, major_err) if e)
        comparison.rows.append(row)

    for target in targets:
        cells = [r for r in comparison.rows if r["target"] == target]
        comparison.crossovers[target] = crossover_n(cells)
        log.info(f"[CAL] target {target:g}: crossover N = {comparison.crossovers[target]}")
    return comparison
