"""
QSDA: SPRT as an Absorbing Markov Chain
Continuous observations: the per-sample log-likelihood ratio is rounded to a
grid of step delta, which turns the running sum into a finite absorbing
chain. Decision probabilities per step come from iterating the chain; total
absorption probabilities and the mean absorption time come from the
fundamental matrix, obtained by LU solves.
"""

import math
import sys
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import erfc

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, FP_EPS, INITIAL_HORIZON, HORIZON_CAP, MIN_CHAIN_STATES, DELTA_SCALE
from agents.sprt_model import SprtModel, llr_spec
from engine.decision_profile import HypothesisProfile, DecisionProfile
from utils.errors import ModelError, NumericalError
from utils.log import get_logger

log = get_logger("agents.markov_chain")

_LOG9 = math.log(9.0)


@dataclass(frozen=True, eq=False)
class AbsorbingChain:
    """
    Discretized SPRT under one hypothesis.

    States are s_i = floor(eta0/delta)*delta + i*delta, i = 0..n-1; state 0
    and state n-1 are absorbing (decide H0 / decide H1). The chain starts on
    the state whose value is 0.
    """

    delta: float
    state_values: np.ndarray
    transition: np.ndarray
    zero_index: int
    increment_pmf: np.ndarray
    hypothesis: int

    @property
    def n_states(self) -> int:
        return int(self.state_values.size)

    @property
    def pi0(self) -> np.ndarray:
        start = np.zeros(self.n_states)
        start[self.zero_index] = 1.0
        return start

    @property
    def transient(self) -> np.ndarray:
        """Q: transitions among the interior states."""
        return self.transition[1:-1, 1:-1]

    @property
    def absorbing(self) -> np.ndarray:
        """R: interior-to-absorbing transitions, columns (decide H0, decide H1)."""
        return self.transition[1:-1, [0, -1]]


@dataclass(frozen=True)
class ChainSummary:
    """Absorption probabilities and mean absorption time from the start state."""

    p_say0: float
    p_say1: float
    expected_time: float


def default_delta(eta0: float, eta1: float) -> float:
    """Grid step scaled so that thresholds at +/- log 9 give delta = 0.01."""
    return DELTA_SCALE * (eta1 - eta0) / (2.0 * _LOG9)


def _normal_cell_probs(lower: np.ndarray, upper: np.ndarray, mean: float, sd: float) -> np.ndarray:
    """P[lower < X <= upper] for X ~ Normal(mean, sd^2), via erfc on the shorter tail."""
    zl = (lower - mean) / (sd * math.sqrt(2.0))
    zu = (upper - mean) / (sd * math.sqrt(2.0))
    right = lower >= mean
    with np.errstate(invalid="ignore"):
        from_right = 0.5 * (erfc(zl) - erfc(zu))
        from_left = 0.5 * (erfc(-zu) - erfc(-zl))
    return np.where(right, from_right, from_left)


def discretize(model: SprtModel, delta: float | None = None) -> tuple[AbsorbingChain, AbsorbingChain]:
    """
    Build the absorbing chain of a gaussian SPRT under H0 and under H1.

    Args:
        model: Gaussian SprtModel.
        delta: Grid step in nats; default_delta(eta0, eta1) when omitted.

    Returns:
        (chain under H0, chain under H1).
    """
    if model.dist != "gaussian":
        raise ModelError(f"chain discretization expects a gaussian model, got {model.dist!r}")
    if delta is None:
        delta = default_delta(model.eta0, model.eta1)
    if not delta > 0:
        raise ModelError(f"delta must be positive, got {delta}")

    k_lo = math.floor(model.eta0 / delta)
    k_hi = math.ceil(model.eta1 / delta)
    n = k_hi - k_lo + 1
    if n < MIN_CHAIN_STATES:
        raise ModelError(f"delta={delta:g} leaves only {n} states; need at least {MIN_CHAIN_STATES}")
    zero_index = -k_lo
    if not 0 < zero_index < n - 1:
        raise ModelError("the zero-valued start state is absorbing; thresholds must straddle 0")

    states = (k_lo + np.arange(n)) * delta
    llr = llr_spec(model)
    steps = np.arange(-(n - 2), n - 1)
    lower = (steps - 0.5) * delta
    upper = (steps + 0.5) * delta
    lower[0], upper[-1] = -np.inf, np.inf

    chains = []
    for hypothesis in (0, 1):
        mean = llr.slope * model.theta(hypothesis) + llr.intercept
        sd = abs(llr.slope) * model.sigma
        pmf = _normal_cell_probs(lower, upper, mean, sd)
        chains.append(AbsorbingChain(delta, states, _assemble(pmf, n), zero_index, pmf, hypothesis))
        log.debug(f"[SPRT] chain H{hypothesis}: n={n}, delta={delta:.4g}, increment mean={mean:.4g}")
    return chains[0], chains[1]


def _assemble(pmf: np.ndarray, n: int) -> np.ndarray:
    """Transition matrix from the increment pmf over steps -(n-2)..(n-2)."""
    offset = n - 2
    A = np.zeros((n, n))
    A[0, 0] = 1.0
    A[-1, -1] = 1.0
    interior = np.arange(1, n - 1)
    jj, ii = np.meshgrid(interior, interior)
    A[1:-1, 1:-1] = pmf[jj - ii + offset]
    below = np.cumsum(pmf)
    above = np.cumsum(pmf[::-1])[::-1]
    A[1:-1, 0] = below[-interior + offset]
    A[1:-1, -1] = above[(n - 1 - interior) + offset]
    row_error = np.max(np.abs(A.sum(axis=1) - 1.0))
    if row_error > 1e3 * FP_EPS:
        raise NumericalError(f"transition rows do not sum to 1 (max error {row_error:.3g})")
    return A


def chain_profile(chain: AbsorbingChain, horizon: int | None = None, tail_tol: float = TAIL_TOL,
                  cap: int = HORIZON_CAP) -> HypothesisProfile:
    """
    Per-step absorption probabilities of the chain started at the zero state.

    p_say0(t) and p_say1(t) are the increments of the absorbing-state masses;
    p_nd is the mass still transient at T_max. With horizon None the horizon
    doubles until that mass is below tail_tol or the cap is reached.
    """
    Q, R = chain.transient, chain.absorbing
    v = np.zeros(Q.shape[0])
    v[chain.zero_index - 1] = 1.0
    say0, say1 = [], []
    target = horizon if horizon is not None else min(INITIAL_HORIZON, cap)
    t = 0
    while True:
        t += 1
        exits = v @ R
        say0.append(float(exits[0]))
        say1.append(float(exits[1]))
        v = v @ Q
        if t < target:
            continue
        residual = float(v.sum())
        if horizon is not None or residual < tail_tol or t >= cap:
            break
        target = min(2 * target, cap)
    residual = max(float(v.sum()), 0.0)
    if horizon is None and residual >= tail_tol:
        log.warning(f"[SPRT] horizon cap {cap} reached with residual {residual:.3g}")
    return HypothesisProfile(say0, say1, p_nd=residual, tail_mass=residual)


def chain_closed_form(chain: AbsorbingChain) -> ChainSummary:
    """
    Absorption probabilities and expected absorption time from the start state.

    Solves (I - Q) B = R and (I - Q) tau = 1 with one LU factorization.
    """
    Q = chain.transient
    system = np.eye(Q.shape[0]) - Q
    lu, piv = lu_factor(system, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= FP_EPS * max(1.0, pivots.max()):
        raise NumericalError("I - Q is singular: the transient states contain a closed class")
    B = lu_solve((lu, piv), chain.absorbing)
    tau = lu_solve((lu, piv), np.ones(Q.shape[0]))
    start = chain.zero_index - 1
    return ChainSummary(float(B[start, 0]), float(B[start, 1]), float(tau[start]))


def gaussian_profile(model: SprtModel, delta: float | None = None, horizon: int | None = None,
                     tail_tol: float = TAIL_TOL, cap: int = HORIZON_CAP) -> DecisionProfile:
    """Decision profile of a gaussian SPRT under both hypotheses via the chain."""
    chain0, chain1 = discretize(model, delta)
    h0 = chain_profile(chain0, horizon, tail_tol, cap)
    h1 = chain_profile(chain1, horizon, tail_tol, cap)
    if h0.t_max < h1.t_max:
        h0 = chain_profile(chain0, h1.t_max, tail_tol, cap)
    elif h1.t_max < h0.t_max:
        h1 = chain_profile(chain1, h0.t_max, tail_tol, cap)
    return DecisionProfile(h0, h1, meta={"source": "chain", "model": model, "delta": chain1.delta})


def refinement_check(model: SprtModel, delta: float | None = None) -> dict:
    """
    Change in the closed-form outputs when the grid step is halved.

    Returns:
        Dict with the absolute differences per hypothesis of P[say H0],
        P[say H1] and E[T], and their maximum under "max_prob_diff".
    """
    if delta is None:
        delta = default_delta(model.eta0, model.eta1)
    coarse = [chain_closed_form(c) for c in discretize(model, delta)]
    fine = [chain_closed_form(c) for c in discretize(model, delta / 2.0)]
    report = {}
    for hypothesis, (a, b) in enumerate(zip(coarse, fine)):
        report[f"h{hypothesis}_p_say0"] = abs(a.p_say0 - b.p_say0)
        report[f"h{hypothesis}_p_say1"] = abs(a.p_say1 - b.p_say1)
        report[f"h{hypothesis}_expected_time"] = abs(a.expected_time - b.expected_time)
    report["max_prob_diff"] = max(v for k, v in report.items() if "p_say" in k)
    return report
