"""
QSDA: Exact SPRT Recursion for Lattice Observations
Binomial observations have a log-likelihood ratio affine in the sample, so
the test continues while the running sum X(t) stays inside an integer band.
The law of X(t) restricted to that band is propagated exactly by
convolution with the observation pmf; mass leaving the band is the
decision probability at t.
"""

import math
import sys
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.stats import binom

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, INITIAL_HORIZON, HORIZON_CAP
from agents.sprt_model import SprtModel, LlrSpec, llr_spec
from engine.decision_profile import HypothesisProfile, DecisionProfile
from utils.errors import ModelError
from utils.log import get_logger

log = get_logger("agents.kdp")


@dataclass(frozen=True)
class Band:
    """Integer continuation band [lo, hi] of X(t) and the verdicts on each side."""

    lo: int
    hi: int
    below_verdict: int
    above_verdict: int


@dataclass(frozen=True, eq=False)
class LatticeState:
    """
    Continuing mass of X(t) on [lo, lo + len(mass) - 1] after step t,
    with the mass that exited towards each verdict at step t.
    """

    t: int
    lo: int
    mass: np.ndarray
    exit0: float
    exit1: float

    @property
    def hi(self) -> int:
        return self.lo + self.mass.size - 1

    @property
    def continuing(self) -> float:
        return float(self.mass.sum())


def continuation_band(llr: LlrSpec, eta0: float, eta1: float, t: int) -> Band:
    """
    Values of X(t) for which eta0 < slope*X(t) - t*a_diff < eta1.

    With a negative slope the inequalities reverse, and so do the verdicts
    attached to the two sides of the band.
    """
    lower = (eta0 + t * llr.a_diff) / llr.b_diff
    upper = (eta1 + t * llr.a_diff) / llr.b_diff
    if llr.b_diff > 0:
        return Band(math.floor(lower) + 1, math.ceil(upper) - 1, 0, 1)
    return Band(math.floor(upper) + 1, math.ceil(lower) - 1, 1, 0)


def _observation_pmf(model: SprtModel, hypothesis: int) -> np.ndarray:
    return binom.pmf(np.arange(model.n + 1), model.n, model.theta(hypothesis))


def lattice_states(model: SprtModel, hypothesis: int) -> Iterator[LatticeState]:
    """Yield the lattice recursion state for t = 1, 2, ... (unbounded)."""
    if model.dist != "binomial":
        raise ModelError(f"lattice recursion needs a finite-support model, got {model.dist!r}")
    llr = llr_spec(model)
    pmf = _observation_pmf(model, hypothesis)
    lo, mass = 0, np.ones(1)
    t = 0
    while True:
        t += 1
        if mass.size == 0:
            yield LatticeState(t, lo, mass, 0.0, 0.0)
            continue
        spread = np.convolve(mass, pmf)
        band = continuation_band(llr, model.eta0, model.eta1, t)
        a = int(np.clip(band.lo - lo, 0, spread.size))
        b = int(np.clip(band.hi - lo + 1, a, spread.size))
        below, above = float(spread[:a].sum()), float(spread[b:].sum())
        exits = {band.below_verdict: below, band.above_verdict: above}
        mass = spread[a:b]
        lo = lo + a
        yield LatticeState(t, lo, mass, exits[0], exits[1])


def _branch_profile(model: SprtModel, hypothesis: int, horizon: int | None,
                    tail_tol: float, cap: int) -> HypothesisProfile:
    say0, say1 = [], []
    target = horizon if horizon is not None else min(INITIAL_HORIZON, cap)
    continuing = 1.0
    for state in lattice_states(model, hypothesis):
        say0.append(state.exit0)
        say1.append(state.exit1)
        continuing = state.continuing
        if state.t < target:
            if horizon is None and state.mass.size == 0:
                break
            continue
        if horizon is not None or continuing < tail_tol or state.t >= cap:
            break
        target = min(2 * target, cap)
    if horizon is None and continuing >= tail_tol:
        log.warning(f"[SPRT] horizon cap {cap} reached with residual {continuing:.3g} under H{hypothesis}")
    return HypothesisProfile(say0, say1, p_nd=continuing, tail_mass=continuing)


def kdp_profile(model: SprtModel, horizon: int | None = None, tail_tol: float = TAIL_TOL,
                cap: int = HORIZON_CAP) -> DecisionProfile:
    """
    Exact decision profile of a binomial SPRT under both hypotheses.

    Args:
        model: Binomial SprtModel.
        horizon: Fixed T_max; None grows the horizon by doubling until the
            continuing mass drops below tail_tol or the cap is reached.
        tail_tol: Residual mass target for horizon growth.
        cap: Hard limit on T_max.

    Returns:
        DecisionProfile whose p_nd holds the mass still continuing at T_max.
    """
    h0 = _branch_profile(model, 0, horizon, tail_tol, cap)
    h1 = _branch_profile(model, 1, horizon, tail_tol, cap)
    # Both branches must share T_max; rerun the shorter one at the longer horizon.
    if h0.t_max < h1.t_max:
        h0 = _branch_profile(model, 0, h1.t_max, tail_tol, cap)
    elif h1.t_max < h0.t_max:
        h1 = _branch_profile(model, 1, h0.t_max, tail_tol, cap)
    log.debug(f"[SPRT] lattice profile T_max={h1.t_max}, residual H0={h0.p_nd:.3g} H1={h1.p_nd:.3g}")
    return DecisionProfile(h0, h1, meta={"source": "kdp", "model": model})
