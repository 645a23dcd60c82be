"""
QSDA: Large-Group Predictors
Closed-form limits as the number of SDMs grows: accuracy and decision time
of the fastest and majority rules, half binomial sums, and the monotonicity
chains of group metrics over the threshold q.
"""

import math
import sys
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, FP_EPS, PLATEAU_TOL, MONOTONE_TOL
from engine.decision_profile import DecisionProfile, HypothesisProfile, has_almost_sure_decisions
from engine.aggregation import aggregate
from utils.errors import ProfileError
from utils.log import get_logger

log = get_logger("engine.asymptotics")


def _require_odd(n: int) -> None:
    if n < 1 or n % 2 == 0:
        raise ValueError(f"N must be a positive odd integer, got {n}")


# ═══════════════════════════════════════════════════════════════════════════════
# FASTEST RULE
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class FastestLimits:
    """Large-N limits of the fastest rule (q = 1) under H1."""

    t_bar: int
    limit_pw: float
    limit_et: float


def earliest_decision_time(h: HypothesisProfile, fp_eps: float = FP_EPS) -> int:
    """First t with p_say0(t) or p_say1(t) above fp_eps."""
    hits = np.flatnonzero((h.p_say0 > fp_eps) | (h.p_say1 > fp_eps))
    if hits.size == 0:
        raise ProfileError("profile never decides: every entry is zero")
    return int(hits[0]) + 1


def fastest_limits(profile: DecisionProfile, fp_eps: float = FP_EPS,
                   tail_tol: float = TAIL_TOL) -> FastestLimits:
    """
    Limits of p_w and E[T] for the fastest rule as N grows.

    The group decides at t_bar almost surely; the verdict is the one more
    likely at t_bar, and a coin flip when both are equally likely.
    """
    if not has_almost_sure_decisions(profile, tail_tol):
        log.warning("[ASYM] single SDM is not almost-sure; fastest-rule limits assume it is")
    h = profile.under_h1
    t_bar = earliest_decision_time(h, fp_eps)
    correct, wrong = float(h.p_say1[t_bar - 1]), float(h.p_say0[t_bar - 1])
    if correct - wrong > fp_eps:
        limit_pw = 0.0
    elif wrong - correct > fp_eps:
        limit_pw = 1.0
    else:
        limit_pw = 0.5
    return FastestLimits(t_bar, limit_pw, float(t_bar))


# ═══════════════════════════════════════════════════════════════════════════════
# MAJORITY RULE ACCURACY
# ═══════════════════════════════════════════════════════════════════════════════


def majority_pw(p_w_single: float, n: int) -> float:
    """
    Group wrong-decision probability under the majority rule:
    sum_{j > N/2} C(N, j) p^j (1-p)^(N-j).
    """
    _require_odd(n)
    if not 0.0 <= p_w_single <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p_w_single}")
    if p_w_single == 0.5:
        return 0.5
    return float(binom.sf(n // 2, n, p_w_single))


def majority_pw_leading_term(p_w_single: float, n: int) -> float:
    """First term of the expansion of majority_pw as p -> 0: C(N, ceil(N/2)) p^ceil(N/2)."""
    _require_odd(n)
    k = math.ceil(n / 2)
    return math.comb(n, k) * p_w_single ** k


def majority_pw_asymptote(p_w_single: float, n: int) -> float:
    """Stirling form sqrt(N / 2pi) * (4p)^ceil(N/2); defined for p < 1/4."""
    _require_odd(n)
    if not 0.0 <= p_w_single < 0.25:
        raise ValueError(f"asymptote needs 0 <= p < 1/4, got {p_w_single}")
    if p_w_single == 0.0:
        return 0.0
    return math.sqrt(n / (2.0 * math.pi)) * (4.0 * p_w_single) ** math.ceil(n / 2)


def majority_pw_limit(p_w_single: float) -> float:
    if p_w_single < 0.5:
        return 0.0
    if p_w_single > 0.5:
        return 1.0
    return 0.5


def half_binomial(n: int, c: float, x: float, side: str = "upper") -> float:
    """
    Half of the binomial expansion of c^N = (x + (c - x))^N.

    Args:
        n: Odd number of terms minus one.
        c: Total, 0 < c <= 1.
        x: Weight of the counted outcome, 0 <= x <= c/2.
        side: "lower" sums j = 0..floor(N/2), "upper" sums j = ceil(N/2)..N.

    Returns:
        sum over the chosen j of C(N, j) x^j (c - x)^(N - j).
    """
    _require_odd(n)
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    if not 0.0 <= x <= c / 2.0:
        raise ValueError(f"x must lie in [0, c/2], got x={x}, c={c}")
    if side not in ("lower", "upper"):
        raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
    if x == c / 2.0:
        return c ** n / 2.0
    if side == "lower":
        return c ** n * float(binom.cdf(n // 2, n, x / c))
    return c ** n * float(binom.sf(n // 2, n, x / c))


# ═══════════════════════════════════════════════════════════════════════════════
# MAJORITY RULE DECISION TIME
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class MajorityTimeCase:
    """
    Classified large-N behavior of E[T] under the majority rule.

    case is "A1" (one verdict more likely), "A2" (balanced, both cumulative
    curves reach 1/2), "A3/A4" (balanced, at least one curve only approaches
    1/2; the limit is infinite), or "indeterminate".
    """

    case: str
    limit_et: float | None
    majority_verdict: int | None = None
    t_lt_half: int | None = None
    t_gt_half: int | None = None
    t0: int | None = None
    t1: int | None = None
    note: str = ""

    @property
    def adjacent_crossing(self) -> bool:
        """t_gt_half = t_lt_half + 1, in which case the limit equals t_gt_half."""
        return (self.case == "A1" and self.t_lt_half is not None
                and self.t_gt_half == self.t_lt_half + 1)


def _first_at_half(pi: np.ndarray, fp_eps: float) -> int | None:
    hits = np.flatnonzero(np.abs(pi - 0.5) <= fp_eps)
    return int(hits[0]) + 1 if hits.size else None


def _approaches_half(pi: np.ndarray, fp_eps: float, plateau_tol: float) -> bool:
    return bool(np.all(pi < 0.5 - fp_eps)) and 0.5 - float(pi[-1]) < plateau_tol


def _crossing_case(pi: np.ndarray, verdict: int, fp_eps: float) -> MajorityTimeCase:
    below = np.flatnonzero(pi < 0.5 - fp_eps)
    above = np.flatnonzero(pi > 0.5 + fp_eps)
    t_lt = int(below[-1]) + 1 if below.size else 0
    if above.size == 0:
        return MajorityTimeCase("indeterminate", None, verdict, t_lt_half=t_lt,
                                note="cumulative probability never exceeds 1/2 before T_max")
    t_gt = int(above[0]) + 1
    return MajorityTimeCase("A1", (t_lt + t_gt + 1) / 2.0, verdict, t_lt_half=t_lt, t_gt_half=t_gt)


def majority_et_limit(profile: DecisionProfile, fp_eps: float = FP_EPS,
                      plateau_tol: float = PLATEAU_TOL) -> MajorityTimeCase:
    """
    Large-N limit of the majority-rule expected decision time under H1.

    When the wrong verdict is the more likely one the same crossing formula
    applies to its cumulative curve (majority_verdict = 0).

    Raises:
        ProfileError: if more than 2 * plateau_tol of the H1 mass is undecided.
    """
    h = profile.under_h1
    if 1.0 - h.decided_mass > 2.0 * plateau_tol:
        raise ProfileError(f"majority time limit needs almost-sure decisions; "
                           f"undecided mass {1.0 - h.decided_mass:.3g}")
    pi0, pi1 = h.cumulative()
    t0, t1 = _first_at_half(pi0, fp_eps), _first_at_half(pi1, fp_eps)
    near0 = _approaches_half(pi0, fp_eps, plateau_tol)
    near1 = _approaches_half(pi1, fp_eps, plateau_tol)

    if t0 is not None and t1 is not None:
        return MajorityTimeCase("A2", (t0 + t1) / 2.0, t0=t0, t1=t1)
    if (t1 is not None and near0) or (t0 is not None and near1) or (near0 and near1):
        return MajorityTimeCase("A3/A4", math.inf, t0=t0, t1=t1,
                                note="a cumulative curve approaches 1/2 without reaching it")

    p_c, p_w = float(pi1[-1]), float(pi0[-1])
    if p_c > p_w + fp_eps:
        return _crossing_case(pi1, 1, fp_eps)
    if p_w > p_c + fp_eps:
        return _crossing_case(pi0, 0, fp_eps)
    return MajorityTimeCase("indeterminate", None, t0=t0, t1=t1,
                            note="balanced accuracies without a certified crossing")


# ═══════════════════════════════════════════════════════════════════════════════
# MONOTONICITY IN q
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass
class MonotonicityReport:
    """
    Per-cell records {N, q, metric, value, monotone_ok, chain, theorem}.

    monotone_ok compares a cell with the previous q of the same chain.
    """

    records: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [r for r in self.records if r["theorem"] and not r["monotone_ok"]]

    @property
    def findings(self) -> list:
        """Conjecture chains that failed; reported, not errors."""
        return [r for r in self.records if not r["theorem"] and not r["monotone_ok"]]


def _chain(records: list, n: int, qs: list, metric: str, values: dict, direction: int,
           chain: str, theorem: bool, tol: float) -> None:
    previous = None
    for q in qs:
        value = values[q]
        if previous is None:
            ok = True
        elif direction > 0:
            ok = value >= previous - tol
        else:
            ok = value <= previous + tol
        records.append({"N": n, "q": q, "metric": metric, "value": value,
                        "monotone_ok": bool(ok), "chain": chain, "theorem": theorem})
        previous = value


def monotonicity_suite(profile: DecisionProfile, n_grid, q_grid=None, hypothesis: int = 1,
                       horizon: int | None = None, tail_tol: float = TAIL_TOL,
                       tol: float = MONOTONE_TOL) -> MonotonicityReport:
    """
    Check the ordering of group metrics over q for every N in n_grid.

    Theorem chains: E[T] nondecreasing over all q; p_c and p_w
    nonincreasing and p_nd nondecreasing over q >= floor(N/2)+1.
    Conjecture chains: p_c nondecreasing and p_w nonincreasing over
    q <= floor(N/2)+1.

    Args:
        profile: Single-SDM profile.
        n_grid: Group sizes (odd).
        q_grid: Thresholds to evaluate; all of 1..N when None.
        hypothesis: True hypothesis.
    """
    report = MonotonicityReport()
    for n in n_grid:
        _require_odd(n)
        qs = sorted(q for q in (q_grid or range(1, n + 1)) if 1 <= q <= n)
        outcomes = {q: aggregate(profile, n, q, horizon, hypothesis, tail_tol) for q in qs}
        metric = {
            "e_t": {q: o.expected_T for q, o in outcomes.items()},
            "p_c": {q: o.p_c for q, o in outcomes.items()},
            "p_w": {q: o.p_w for q, o in outcomes.items()},
            "p_nd": {q: o.p_nd_group for q, o in outcomes.items()},
        }
        high = [q for q in qs if q >= n // 2 + 1]
        low = [q for q in qs if q <= n // 2 + 1]

        _chain(report.records, n, qs, "e_t", metric["e_t"], +1, "expected_time", True, tol)
        _chain(report.records, n, high, "p_c", metric["p_c"], -1, "high_q", True, tol)
        _chain(report.records, n, high, "p_w", metric["p_w"], -1, "high_q", True, tol)
        _chain(report.records, n, high, "p_nd", metric["p_nd"], +1, "high_q", True, tol)
        _chain(report.records, n, low, "p_c", metric["p_c"], +1, "low_q_conjecture", False, tol)
        _chain(report.records, n, low, "p_w", metric["p_w"], -1, "low_q_conjecture", False, tol)

    for r in report.violations:
        log.error(f"[ASYM] N={r['N']} q={r['q']}: {r['metric']} breaks the {r['chain']} ordering")
    for r in report.findings:
        log.warning(f"[ASYM] conjecture chain fails at N={r['N']} q={r['q']} for {r['metric']}")
    return report
