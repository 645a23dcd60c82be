"""
QSDA: Aggregation Core
Exact group decision probabilities of N identical SDMs fused by the
q out of N rule: the fusion center declares H_i at the first time the count
of H_i verdicts reaches q and strictly exceeds the count of the other verdict.

Two regimes:
  - q <= floor(N/2): both counters can pass q together and tie (the
    canceling situation). The recursion carries the cumulative single-SDM
    probabilities plus one tie probability per tie level s = q..floor(N/2).
  - q >= floor(N/2)+1: a verdict reaching q is automatically the majority,
    so only the two cumulative probabilities are needed.

All binomial coefficients are assembled in log space (log-gamma) and
exponentiated once per term.
"""

import math
import sys
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy
from scipy.stats import binom

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, QUIET_STEPS
from engine.decision_profile import DecisionProfile, GroupSpec, HypothesisProfile
from utils.errors import GroupSpecError
from utils.log import get_logger

log = get_logger("engine.aggregation")

NEG_INF = -np.inf
TINY = np.finfo(float).tiny  # ratios below this are treated as 0


def log_comb(n, k):
    """log C(n, k) elementwise; -inf outside 0 <= k <= n."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    valid = (k >= 0) & (k <= n)
    nn = np.where(valid, n, 0.0)
    kk = np.where(valid, k, 0.0)
    out = gammaln(nn + 1.0) - gammaln(kk + 1.0) - gammaln(nn - kk + 1.0)
    return np.where(valid, out, NEG_INF)


def _lse(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return NEG_INF
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(logsumexp(values))


def _exp(value: float) -> float:
    return math.exp(value) if value > NEG_INF else 0.0


# ═══════════════════════════════════════════════════════════════════════════════
# RECURSION TERMS (scalar reference forms)
# ═══════════════════════════════════════════════════════════════════════════════


def alpha(t: int, s0: int, s1: int, pi0: float, pi1: float) -> float:
    """
    Probability that a given set of s0+s1 SDMs decided by time t with s0
    verdicts for H0 and s1 for H1: C(s0+s1, s0) * pi0^s0 * pi1^s1.

    `t` only labels the time at which pi0, pi1 are evaluated.
    """
    return _exp(_log_alpha(s0, s1, pi0, pi1))


def _log_alpha(s0: int, s1: int, pi0: float, pi1: float) -> float:
    return float(log_comb(s0 + s1, s0) + xlogy(s0, pi0) + xlogy(s1, pi1))


def alpha_bar_step(t: int, s: int, q: int, prev_alpha_bar, prev_pi0: float, prev_pi1: float,
                   p0: float, p1: float) -> float:
    """
    Tie probability at level s after step t: a given set of 2s SDMs has
    decided by t, s for each hypothesis, without the group deciding.

    Args:
        t: Step being computed (t >= 1).
        s: Tie level, q <= s <= floor(N/2).
        q: Threshold of the rule.
        prev_alpha_bar: Tie probabilities at t-1, indexed by h - q.
        prev_pi0, prev_pi1: Cumulative single-SDM probabilities at t-1.
        p0, p1: Single-SDM decision probabilities at t.
    """
    terms = []
    for s0 in range(q):
        for s1 in range(q):
            sbar = s0 + s1
            terms.append(
                log_comb(2 * s, sbar) + log_comb(2 * s - sbar, s - s0)
                + _log_alpha(s0, s1, prev_pi0, prev_pi1)
                + xlogy(s - s0, p0) + xlogy(s - s1, p1)
            )
    for h in range(q, s + 1):
        prev = float(prev_alpha_bar[h - q])
        if prev <= 0.0:
            continue
        terms.append(
            log_comb(2 * s, 2 * h) + log_comb(2 * s - 2 * h, s - h)
            + math.log(prev) + xlogy(s - h, p0 * p1)
        )
    return _exp(_lse(terms))


def beta(t: int, s0: int, s1: int, favored: int, p0: float, p1: float,
         pi0: float, pi1: float, n: int, q: int) -> float:
    """
    Probability that, starting from no-tie counts (s0, s1) both below q, the
    N-s0-s1 SDMs still undecided at t-1 push the favored counter to at least
    q and strictly above the other one at time t.

    pi0, pi1 are cumulative probabilities at t; the SDMs that do not decide
    at t stay undecided with probability 1 - pi0 - pi1.
    """
    if favored == 0:
        s0, s1, p0, p1, pi0, pi1 = s1, s0, p1, p0, pi1, pi0
    m_free = n - s0 - s1
    rest = max(1.0 - pi0 - pi1, 0.0)
    terms = []
    for h1 in range(max(q - s1, 0), m_free + 1):
        upper = min(h1 + s1 - s0 - 1, m_free - h1)
        for h0 in range(0, upper + 1):
            terms.append(
                log_comb(m_free, h1) + xlogy(h1, p1)
                + log_comb(m_free - h1, h0) + xlogy(h0, p0)
                + xlogy(m_free - h1 - h0, rest)
            )
    return _exp(_lse(terms))


def beta_bar(t: int, s: int, favored: int, p0: float, p1: float,
             pi0: float, pi1: float, n: int) -> float:
    """
    Probability that, from a tie at level s, the N-2s remaining SDMs break
    the tie in favor of `favored` at time t.
    """
    if favored == 0:
        p0, p1, pi0, pi1 = p1, p0, pi1, pi0
    m_free = n - 2 * s
    rest = max(1.0 - pi0 - pi1, 0.0)
    terms = []
    for h1 in range(1, m_free + 1):
        for h0 in range(0, min(h1 - 1, m_free - h1) + 1):
            terms.append(
                log_comb(m_free, h1) + xlogy(h1, p1)
                + log_comb(m_free - h1, h0) + xlogy(h0, p0)
                + xlogy(m_free - h1 - h0, rest)
            )
    return _exp(_lse(terms))


# ═══════════════════════════════════════════════════════════════════════════════
# STATE & OUTCOME
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass
class AggregatorState:
    """
    Recursion state after step t.

    pi0, pi1 are cumulative single-SDM decision probabilities; log_alpha_bar
    holds log tie probabilities for levels s = q..floor(N/2) (empty in the
    high band).
    """

    t: int = 0
    pi0: float = 0.0
    pi1: float = 0.0
    log_alpha_bar: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def size(self) -> int:
        """Number of live probability cells."""
        return 2 + int(self.log_alpha_bar.size)


@dataclass(frozen=True, eq=False)
class GroupOutcome:
    """
    Group decision probabilities under one true hypothesis.

    p_say0[k], p_say1[k] are the probabilities that the group decides at
    time k+1. expected_T is math.inf when p_nd_group exceeds N * tail_tol.
    """

    n: int
    q: int
    hypothesis: int
    p_say0: np.ndarray
    p_say1: np.ndarray
    p_c: float
    p_w: float
    p_nd_group: float
    expected_T: float
    conditional_expected_T: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def t_max(self) -> int:
        return int(self.p_say0.size)

    @property
    def p_t(self) -> np.ndarray:
        """Per-t probabilities as a (T, 2) array, columns (say-H0, say-H1)."""
        return np.column_stack([self.p_say0, self.p_say1])

    def cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        return np.cumsum(self.p_say0), np.cumsum(self.p_say1)

    def metrics(self) -> dict:
        return {
            "p_c": self.p_c,
            "p_w": self.p_w,
            "p_nd": self.p_nd_group,
            "e_t": self.expected_T,
            "e_t_conditional": self.conditional_expected_T,
            "n": self.n,
            "q": self.q,
        }


def build_outcome(spec: GroupSpec, hypothesis: int, p_say0, p_say1,
                  tail_tol: float = TAIL_TOL, diagnostics: dict | None = None) -> GroupOutcome:
    """Attach accuracy and timing metrics to per-t group probabilities."""
    p_say0 = np.asarray(p_say0, dtype=float)
    p_say1 = np.asarray(p_say1, dtype=float)
    say_correct, say_wrong = (p_say1, p_say0) if hypothesis == 1 else (p_say0, p_say1)
    p_c = float(say_correct.sum())
    p_w = float(say_wrong.sum())
    decided = p_c + p_w
    p_nd = max(0.0, 1.0 - decided)
    t = np.arange(1, p_say0.size + 1, dtype=float)
    weighted = float(np.dot(t, p_say0 + p_say1))
    conditional = weighted / decided if decided > 0.0 else math.nan
    expected = weighted if p_nd <= spec.n * tail_tol else math.inf
    return GroupOutcome(spec.n, spec.q, hypothesis, p_say0, p_say1, p_c, p_w, p_nd,
                        expected, conditional, dict(diagnostics or {}))


# ═══════════════════════════════════════════════════════════════════════════════
# VECTORIZED STEPS
# ═══════════════════════════════════════════════════════════════════════════════


class _LowBandKernel:
    """Precomputed log-coefficient tables for one (N, q) with q <= floor(N/2)."""

    def __init__(self, n: int, q: int):
        self.n = n
        self.q = q
        self.levels = np.arange(q, n // 2 + 1)
        s = self.levels[:, None].astype(float)
        h = self.levels[None, :].astype(float)
        self.log_tie_carry = log_comb(2 * s, 2 * h) + log_comb(2 * s - 2 * h, s - h)
        self.gap = np.maximum(s - h, 0.0)
        self.log_center = log_comb(2 * self.levels, self.levels)
        below = np.arange(q)[None, :].astype(float)
        self.below = below
        self.log_split = log_comb(s, below)
        self.split_gap = s - below
        self.log_choose_ties = log_comb(n, 2 * self.levels)
        self.free_after_tie = n - 2 * self.levels
        self.h = np.arange(n + 1)[None, :]

    # ─── No-tie entry: both counters below q at t-1 ─────────────────────

    def first_sum(self, ax: float, ay: float, px: float, py: float, rest: float) -> float:
        """Group decides for `y` at t from counts (sx, sy) both below q at t-1."""
        n, q = self.n, self.q
        sy = np.arange(q)[:, None]
        keep = px + rest
        rho = px / keep if keep > 0.0 else 0.0
        rho = rho if rho >= TINY else 0.0
        pieces = []
        with np.errstate(divide="ignore", invalid="ignore"):
            for sx in range(q):
                m_free = n - sx - sy
                k = m_free - self.h
                valid = (self.h >= q - sy) & (k >= 0)
                kk = np.maximum(k, 0)
                upper = np.minimum(self.h + sy - sx - 1, kk)
                base = log_comb(n, sx + sy) + log_comb(sx + sy, sx) + xlogy(sx, ax) + xlogy(sy, ay)
                term = (base + log_comb(m_free, self.h) + xlogy(self.h, py)
                        + xlogy(kk, keep) + np.log(binom.cdf(upper, kk, rho)))
                pieces.append(np.where(valid, term, NEG_INF).ravel())
        return _exp(_lse(np.concatenate(pieces)))

    # ─── Tie exit: break a tie at level s ───────────────────────────────

    def second_sums(self, log_ab: np.ndarray, p0: float, p1: float, rest: float,
                    width: float) -> tuple[float, float]:
        """(to H0, to H1) group probabilities at t from ties carried out of t-1."""
        live = np.isfinite(log_ab)
        if width <= 0.0 or not live.any():
            return 0.0, 0.0
        free = self.free_after_tie[live]
        pos, neg = _walk_tails(p0 / width, p1 / width, rest / width, int(free.max()))
        with np.errstate(divide="ignore"):
            common = self.log_choose_ties[live] + log_ab[live] + free * math.log(width)
            to1 = common + np.log(pos[free])
            to0 = common + np.log(neg[free])
        return _exp(_lse(to0)), _exp(_lse(to1))

    # ─── Tie table update ───────────────────────────────────────────────

    def advance_ties(self, log_ab: np.ndarray, a0: float, a1: float, p0: float, p1: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            enter0 = logsumexp(self.log_split + xlogy(self.below, a0) + xlogy(self.split_gap, p0), axis=1)
            enter1 = logsumexp(self.log_split + xlogy(self.below, a1) + xlogy(self.split_gap, p1), axis=1)
            entering = self.log_center + enter0 + enter1
            carried = logsumexp(self.log_tie_carry + log_ab[None, :] + xlogy(self.gap, p0 * p1), axis=1)
            return np.logaddexp(entering, carried)


def _walk_tails(step_down: float, step_up: float, stay: float, deepest: int):
    """
    P[X_M > 0] and P[X_M < 0] for M = 0..deepest, where X_M is a sum of M
    i.i.d. steps equal to +1, -1, 0 with the given probabilities.
    """
    pos = np.zeros(deepest + 1)
    neg = np.zeros(deepest + 1)
    kernel = np.array([step_down, stay, step_up])
    dist = np.ones(1)
    for m in range(1, deepest + 1):
        dist = np.convolve(dist, kernel)
        pos[m] = dist[m + 1:].sum()
        neg[m] = dist[:m].sum()
    return pos, neg


def _high_band_step(n: int, q: int, prev_pi: float, p: float) -> float:
    """Probability that the count of one verdict first reaches q at this step."""
    width = 1.0 - prev_pi
    if width <= 0.0 or p <= 0.0:
        return 0.0
    k = np.arange(q)
    rho = min(p / width, 1.0)
    if rho < TINY:
        return 0.0
    with np.errstate(divide="ignore"):
        log_below = log_comb(n, k) + xlogy(k, prev_pi) + (n - k) * math.log(width)
        log_reach = np.log(binom.sf(q - k - 1, n - k, rho))
    return _exp(_lse(log_below + log_reach))


# ═══════════════════════════════════════════════════════════════════════════════
# AGGREGATION
# ═══════════════════════════════════════════════════════════════════════════════


def _resolve_horizon(h: HypothesisProfile, horizon: int | None) -> int:
    if horizon is None or horizon > h.t_max:
        return h.t_max
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    return horizon


def _remaining_mass(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """remaining[k] = single-SDM decision mass strictly after time k+1."""
    mass = p0 + p1
    suffix = np.cumsum(mass[::-1])[::-1]
    return np.append(suffix[1:], 0.0)


def _identity(spec: GroupSpec, h: HypothesisProfile, hypothesis: int, horizon: int,
              tail_tol: float) -> GroupOutcome:
    return build_outcome(spec, hypothesis, h.p_say0[:horizon].copy(), h.p_say1[:horizon].copy(),
                         tail_tol, {"band": "identity", "state_size": 2, "steps": horizon})


def aggregate_low_q(profile: DecisionProfile, n: int, q: int, horizon: int | None = None,
                    hypothesis: int = 1, tail_tol: float = TAIL_TOL,
                    early_stop: bool = True) -> GroupOutcome:
    """
    Exact group probabilities for 1 <= q <= floor(N/2).

    Args:
        profile: Single-SDM decision profile.
        n: Group size N.
        q: Threshold.
        horizon: Last time step; defaults to the profile's T_max.
        hypothesis: True hypothesis the probabilities are conditioned on.
        tail_tol: Negligible per-step mass for early stopping.
        early_stop: Stop once the group has been quiet for QUIET_STEPS steps
            and the single SDM has less than tail_tol mass left.

    Returns:
        GroupOutcome; diagnostics["state_size"] is floor(N/2) - q + 3.
    """
    spec = GroupSpec(n, q)
    if not spec.low_band:
        raise GroupSpecError(f"q={q} is outside the tie band 1..{n // 2} for N={n}")
    h = profile.branch(hypothesis)
    horizon = _resolve_horizon(h, horizon)
    p0s, p1s = h.p_say0[:horizon], h.p_say1[:horizon]
    remaining = _remaining_mass(p0s, p1s)

    kernel = _LowBandKernel(n, q)
    state = AggregatorState(log_alpha_bar=np.full(kernel.levels.size, NEG_INF))
    out0, out1 = [], []
    quiet = 0
    for k in range(horizon):
        p0, p1 = float(p0s[k]), float(p1s[k])
        a0, a1 = state.pi0, state.pi1
        width = max(1.0 - a0 - a1, 0.0)
        rest = max(width - p0 - p1, 0.0)

        g1 = kernel.first_sum(a0, a1, p0, p1, rest)
        g0 = kernel.first_sum(a1, a0, p1, p0, rest)
        t0, t1 = kernel.second_sums(state.log_alpha_bar, p0, p1, rest, width)
        out0.append(g0 + t0)
        out1.append(g1 + t1)

        state = AggregatorState(
            t=k + 1, pi0=a0 + p0, pi1=a1 + p1,
            log_alpha_bar=kernel.advance_ties(state.log_alpha_bar, a0, a1, p0, p1),
        )
        quiet = quiet + 1 if out0[-1] + out1[-1] < tail_tol else 0
        if early_stop and quiet >= QUIET_STEPS and remaining[k] <= tail_tol:
            break

    diagnostics = {"band": "low", "state_size": state.size, "steps": len(out0)}
    log.debug(f"[AGG] N={n} q={q} low band: {len(out0)} steps, state size {state.size}")
    return build_outcome(spec, hypothesis, out0, out1, tail_tol, diagnostics)


def aggregate_high_q(profile: DecisionProfile, n: int, q: int, horizon: int | None = None,
                     hypothesis: int = 1, tail_tol: float = TAIL_TOL,
                     early_stop: bool = True) -> GroupOutcome:
    """
    Exact group probabilities for floor(N/2)+1 <= q <= N.

    The count of H_i verdicts first reaches q at t with probability
    sum_{k<q} Bin(k; N, pi_i(t-1)) * P[Bin(N-k, p_i(t)/(1-pi_i(t-1))) >= q-k].
    N = 1 returns the profile itself.
    """
    spec = GroupSpec(n, q)
    if spec.low_band:
        raise GroupSpecError(f"q={q} is inside the tie band 1..{n // 2} for N={n}")
    h = profile.branch(hypothesis)
    horizon = _resolve_horizon(h, horizon)
    if n == 1:
        return _identity(spec, h, hypothesis, horizon, tail_tol)
    p0s, p1s = h.p_say0[:horizon], h.p_say1[:horizon]
    remaining = _remaining_mass(p0s, p1s)

    state = AggregatorState()
    out0, out1 = [], []
    quiet = 0
    for k in range(horizon):
        p0, p1 = float(p0s[k]), float(p1s[k])
        out0.append(_high_band_step(n, q, state.pi0, p0))
        out1.append(_high_band_step(n, q, state.pi1, p1))
        state = AggregatorState(t=k + 1, pi0=state.pi0 + p0, pi1=state.pi1 + p1)
        quiet = quiet + 1 if out0[-1] + out1[-1] < tail_tol else 0
        if early_stop and quiet >= QUIET_STEPS and remaining[k] <= tail_tol:
            break

    diagnostics = {"band": "high", "state_size": state.size, "steps": len(out0)}
    return build_outcome(spec, hypothesis, out0, out1, tail_tol, diagnostics)


def aggregate(profile: DecisionProfile, n: int, q: int, horizon: int | None = None,
              hypothesis: int = 1, tail_tol: float = TAIL_TOL,
              early_stop: bool = True) -> GroupOutcome:
    """Group outcome for any 1 <= q <= N, dispatching on the band of q."""
    spec = GroupSpec(n, q)
    if spec.low_band:
        return aggregate_low_q(profile, n, q, horizon, hypothesis, tail_tol, early_stop)
    return aggregate_high_q(profile, n, q, horizon, hypothesis, tail_tol, early_stop)


def aggregate_both(profile: DecisionProfile, n: int, q: int, horizon: int | None = None,
                   tail_tol: float = TAIL_TOL) -> tuple[GroupOutcome, GroupOutcome]:
    """Outcomes conditioned on H0 and on H1."""
    return (aggregate(profile, n, q, horizon, 0, tail_tol),
            aggregate(profile, n, q, horizon, 1, tail_tol))
