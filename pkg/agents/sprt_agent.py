"""
QSDA: SPRT Agent
One sequential decision maker. Produces its decision profile through the
engine that fits its observation family, and can also run raw SPRT
trajectories for the Monte Carlo oracle.
"""

import sys
import os

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, HORIZON_CAP
from agents.sprt_model import SprtModel, llr_spec
from agents.kdp import kdp_profile, continuation_band
from agents.markov_chain import discretize, chain_closed_form, gaussian_profile, ChainSummary
from engine.decision_profile import DecisionProfile
from utils.log import get_logger

log = get_logger("agents.sprt_agent")


class SprtAgent:
    """
    A sequential decision maker running an SPRT.

    Args:
        model: Observation family, hypotheses and thresholds.
        delta: Grid step for the gaussian chain (default scales with the thresholds).
        tail_tol: Residual mass target when growing profile horizons.
        horizon_cap: Largest T_max a profile may reach.
    """

    def __init__(self, model: SprtModel, delta: float | None = None,
                 tail_tol: float = TAIL_TOL, horizon_cap: int = HORIZON_CAP):
        self.model = model
        self.delta = delta
        self.tail_tol = tail_tol
        self.horizon_cap = horizon_cap
        self.llr = llr_spec(model)

    def decision_profile(self, horizon: int | None = None) -> DecisionProfile:
        """Decision profile under both hypotheses; horizon None grows it automatically."""
        if self.model.dist == "binomial":
            return kdp_profile(self.model, horizon, self.tail_tol, self.horizon_cap)
        return gaussian_profile(self.model, self.delta, horizon, self.tail_tol, self.horizon_cap)

    def closed_form(self) -> dict[int, ChainSummary]:
        """Fundamental-matrix summary per hypothesis (gaussian models only)."""
        chains = discretize(self.model, self.delta)
        return {c.hypothesis: chain_closed_form(c) for c in chains}

    # ─── Raw Trajectories ────────────────────────────────────────────────

    def sample_decisions(self, rng: np.random.Generator, size: int, hypothesis: int,
                         cap: int) -> tuple[np.ndarray, np.ndarray]:
        """
        Run `size` independent SPRTs on simulated observations.

        Returns:
            (times, verdicts): decision time (cap + 1 when undecided by cap)
            and verdict (0/1, meaningless for undecided runs).
        """
        times = np.full(size, cap + 1, dtype=np.int64)
        verdicts = np.zeros(size, dtype=np.int8)
        active = np.arange(size)
        theta = self.model.theta(hypothesis)

        if self.model.dist == "gaussian":
            running = np.zeros(size)
            for t in range(1, cap + 1):
                if active.size == 0:
                    break
                x = rng.normal(theta, self.model.sigma, active.size)
                running[active] += self.llr(x)
                values = running[active]
                low = values <= self.model.eta0
                high = values >= self.model.eta1
                active = self._settle(active, low, high, 0, 1, t, times, verdicts)
        else:
            running = np.zeros(size, dtype=np.int64)
            for t in range(1, cap + 1):
                if active.size == 0:
                    break
                running[active] += rng.binomial(self.model.n, theta, active.size)
                band = continuation_band(self.llr, self.model.eta0, self.model.eta1, t)
                values = running[active]
                low = values < band.lo
                high = values > band.hi
                active = self._settle(active, low, high, band.below_verdict,
                                      band.above_verdict, t, times, verdicts)
        if active.size:
            log.debug(f"[MC] {active.size} of {size} trajectories undecided at cap {cap}")
        return times, verdicts

    @staticmethod
    def _settle(active, low, high, low_verdict, high_verdict, t, times, verdicts):
        stopped_low = active[low]
        stopped_high = active[high]
        times[stopped_low] = t
        times[stopped_high] = t
        verdicts[stopped_low] = low_verdict
        verdicts[stopped_high] = high_verdict
        return active[~(low | high)]
