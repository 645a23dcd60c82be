import pytest

from agents.sprt_model import gaussian_model, binomial_model_from_eps
from agents.sprt_agent import SprtAgent
from engine.decision_profile import DecisionProfile, HypothesisProfile


@pytest.fixture(scope="session")
def wald_gaussian():
    """Gaussian SDM, theta 0 vs 1, sigma 1, Wald thresholds at 0.1 / 0.1."""
    return gaussian_model(0.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def wald_gaussian_profile(wald_gaussian):
    return SprtAgent(wald_gaussian).decision_profile()


@pytest.fixture(scope="session")
def wald_binomial():
    """Binomial SDM with 5 trials per sample, theta 0.45 vs 0.55."""
    return binomial_model_from_eps(0.05, 5)


@pytest.fixture
def make_profile():
    """
    Build a profile from H1 masses; the H0 branch mirrors it unless given.
    Missing mass is folded into p_nd.
    """

    def build(h1_say0, h1_say1, h0_say0=None, h0_say1=None):
        h1 = HypothesisProfile.from_truncated(h1_say0, h1_say1)
        if h0_say0 is None:
            h0 = h1.swapped()
        else:
            h0 = HypothesisProfile.from_truncated(h0_say0, h0_say1)
        return DecisionProfile(h0, h1, meta={"source": "test"})

    return build
