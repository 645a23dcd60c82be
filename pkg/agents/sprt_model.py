"""
QSDA: SPRT Model
Hypothesis pair, observation family and thresholds of one sequential
probability ratio test, plus Wald threshold design and the affine form of
the per-sample log-likelihood ratio.
"""

import math
import sys
import os
from dataclasses import dataclass, replace

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import DEFAULT_P_MD, DEFAULT_P_FA, DEFAULT_BINOM_TRIALS, FP_EPS
from utils.errors import ModelError
from utils.log import get_logger

log = get_logger("agents.sprt_model")

DISTRIBUTIONS = ("gaussian", "binomial")


@dataclass(frozen=True)
class SprtModel:
    """
    One SDM running an SPRT.

    Args:
        dist: "gaussian" (parameter is the mean) or "binomial" (success probability).
        theta0: Parameter under H0.
        theta1: Parameter under H1.
        eta0: Lower log-likelihood threshold (nats).
        eta1: Upper log-likelihood threshold (nats).
        sigma: Standard deviation of gaussian observations.
        n: Number of trials of binomial observations.
    """

    dist: str
    theta0: float
    theta1: float
    eta0: float
    eta1: float
    sigma: float | None = None
    n: int | None = None

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise ModelError(f"unknown distribution {self.dist!r}; expected one of {DISTRIBUTIONS}")
        if self.theta0 == self.theta1:
            raise ModelError("theta0 and theta1 must differ")
        if not self.eta0 < self.eta1:
            raise ModelError(f"need eta0 < eta1, got ({self.eta0}, {self.eta1})")
        if self.dist == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ModelError("gaussian model needs sigma > 0")
        else:
            if self.n is None or self.n < 1:
                raise ModelError("binomial model needs n >= 1")
            for theta in (self.theta0, self.theta1):
                if not 0.0 < theta < 1.0:
                    raise ModelError(f"binomial parameter must lie in (0, 1), got {theta}")
        if not self.eta0 < 0.0 < self.eta1:
            log.warning(f"[SPRT] thresholds ({self.eta0:.4g}, {self.eta1:.4g}) do not straddle 0")

    def with_thresholds(self, eta0: float, eta1: float) -> "SprtModel":
        return replace(self, eta0=eta0, eta1=eta1)

    def with_symmetric_threshold(self, eta: float) -> "SprtModel":
        return self.with_thresholds(-eta, eta)

    def theta(self, hypothesis: int) -> float:
        return self.theta1 if hypothesis == 1 else self.theta0


@dataclass(frozen=True)
class LlrSpec:
    """
    Per-sample log-likelihood ratio lambda(x) = slope * x + intercept.

    For binomial models slope is B(theta1) - B(theta0) and intercept is
    -(A(theta1) - A(theta0)).
    """

    slope: float
    intercept: float

    @property
    def b_diff(self) -> float:
        return self.slope

    @property
    def a_diff(self) -> float:
        return -self.intercept

    def __call__(self, x):
        return self.slope * x + self.intercept


def wald_thresholds(p_md: float = DEFAULT_P_MD, p_fa: float = DEFAULT_P_FA) -> tuple[float, float]:
    """
    Wald's thresholds for target mis-detection and false-alarm rates.

    Args:
        p_md: Target P[say H0 | H1].
        p_fa: Target P[say H1 | H0].

    Returns:
        (eta0, eta1) = (log(p_md / (1 - p_fa)), log((1 - p_md) / p_fa)).
    """
    if not (0.0 < p_md < 1.0 and 0.0 < p_fa < 1.0):
        raise ModelError(f"error rates must lie in (0, 1), got p_md={p_md}, p_fa={p_fa}")
    if p_md + p_fa >= 1.0:
        raise ModelError(f"p_md + p_fa must be < 1 (got {p_md + p_fa}); thresholds would invert")
    eta0 = math.log(p_md / (1.0 - p_fa))
    eta1 = math.log((1.0 - p_md) / p_fa)
    if eta1 - eta0 < 1e-3:
        log.warning(f"[SPRT] near-degenerate thresholds ({eta0:.3g}, {eta1:.3g})")
    return eta0, eta1


def llr_spec(model: SprtModel) -> LlrSpec:
    """Affine-in-x form of the per-sample log-likelihood ratio."""
    if model.dist == "gaussian":
        var = model.sigma ** 2
        slope = (model.theta1 - model.theta0) / var
        intercept = -(model.theta1 ** 2 - model.theta0 ** 2) / (2.0 * var)
    else:
        b_diff = _natural(model.theta1) - _natural(model.theta0)
        a_diff = _log_partition(model.theta1, model.n) - _log_partition(model.theta0, model.n)
        slope, intercept = b_diff, -a_diff
    if abs(slope) <= FP_EPS:
        raise ModelError("log-likelihood ratio does not depend on the observation")
    return LlrSpec(slope, intercept)


def _natural(theta: float) -> float:
    return math.log(theta / (1.0 - theta))


def _log_partition(theta: float, n: int) -> float:
    return -n * math.log1p(-theta)


def gaussian_model(theta0: float, theta1: float, sigma: float,
                   p_md: float = DEFAULT_P_MD, p_fa: float = DEFAULT_P_FA) -> SprtModel:
    eta0, eta1 = wald_thresholds(p_md, p_fa)
    return SprtModel("gaussian", theta0, theta1, eta0, eta1, sigma=sigma)


def binomial_model(theta0: float, theta1: float, n: int = DEFAULT_BINOM_TRIALS,
                   p_md: float = DEFAULT_P_MD, p_fa: float = DEFAULT_P_FA) -> SprtModel:
    eta0, eta1 = wald_thresholds(p_md, p_fa)
    return SprtModel("binomial", theta0, theta1, eta0, eta1, n=n)


def binomial_model_from_eps(eps: float, n: int = DEFAULT_BINOM_TRIALS,
                            p_md: float = DEFAULT_P_MD, p_fa: float = DEFAULT_P_FA) -> SprtModel:
    """Binomial SDM testing theta0 = 0.5 - eps against theta1 = 0.5 + eps."""
    if not 0.0 < eps < 0.5:
        raise ModelError(f"eps must lie in (0, 0.5), got {eps}")
    return binomial_model(0.5 - eps, 0.5 + eps, n, p_md, p_fa)
