import itertools
import math
from collections import defaultdict

import numpy as np
import pytest
from scipy.stats import binom

from agents.sprt_model import (
    SprtModel, wald_thresholds, llr_spec, gaussian_model, binomial_model, binomial_model_from_eps,
)
from agents.kdp import kdp_profile, continuation_band, lattice_states
from agents.markov_chain import (
    discretize, chain_profile, chain_closed_form, default_delta, refinement_check,
)
from agents.sprt_agent import SprtAgent
from utils.errors import ModelError

LOG9 = math.log(9.0)


def brute_force_lattice(model: SprtModel, hypothesis: int, horizon: int):
    """Exit probabilities by tracking every reachable running sum in a dict."""
    llr = llr_spec(model)
    pmf = binom.pmf(np.arange(model.n + 1), model.n, model.theta(hypothesis))
    alive = {0: 1.0}
    say0, say1 = [], []
    for t in range(1, horizon + 1):
        spread = defaultdict(float)
        for x, mass in alive.items():
            for k, pk in enumerate(pmf):
                spread[x + k] += mass * pk
        alive, exit0, exit1 = {}, 0.0, 0.0
        for x, mass in spread.items():
            value = llr.slope * x - t * llr.a_diff
            if value <= model.eta0:
                exit0 += mass
            elif value >= model.eta1:
                exit1 += mass
            else:
                alive[x] = mass
        say0.append(exit0)
        say1.append(exit1)
    return np.array(say0), np.array(say1)


# ─── Model & Wald Design ─────────────────────────────────────────────────────


def test_wald_thresholds_at_ten_percent():
    eta0, eta1 = wald_thresholds(0.1, 0.1)
    assert eta0 == pytest.approx(-LOG9, abs=1e-12)
    assert eta1 == pytest.approx(LOG9, abs=1e-12)


def test_wald_thresholds_asymmetric():
    eta0, eta1 = wald_thresholds(0.01, 0.05)
    assert eta0 == pytest.approx(math.log(0.01 / 0.95), rel=1e-14)
    assert eta1 == pytest.approx(math.log(0.99 / 0.05), rel=1e-14)


def test_wald_thresholds_near_degenerate():
    eta0, eta1 = wald_thresholds(0.5, 0.4999)
    assert -1e-3 < eta0 < 0.0 < eta1 < 1e-3


@pytest.mark.parametrize("p_md,p_fa", [(0.6, 0.4), (0.0, 0.1), (0.1, 1.0)])
def test_wald_thresholds_reject_bad_rates(p_md, p_fa):
    with pytest.raises(ModelError):
        wald_thresholds(p_md, p_fa)


def test_gaussian_llr_is_affine():
    llr = llr_spec(gaussian_model(0.0, 1.0, 1.0))
    assert llr.slope == pytest.approx(1.0)
    assert llr.intercept == pytest.approx(-0.5)
    assert llr(2.0) == pytest.approx(1.5)


def test_binomial_llr_coefficients():
    llr = llr_spec(binomial_model_from_eps(0.05, 5))
    assert llr.b_diff == pytest.approx(2.0 * math.log(11.0 / 9.0), rel=1e-14)
    assert llr.a_diff == pytest.approx(5.0 * math.log(0.55 / 0.45), rel=1e-14)


def test_model_validation():
    with pytest.raises(ModelError):
        SprtModel("gaussian", 0.0, 1.0, -1.0, 1.0)
    with pytest.raises(ModelError):
        SprtModel("binomial", 0.0, 0.5, -1.0, 1.0, n=5)
    with pytest.raises(ModelError):
        SprtModel("poisson", 0.0, 1.0, -1.0, 1.0)
    with pytest.raises(ModelError):
        gaussian_model(1.0, 1.0, 1.0)
    with pytest.raises(ModelError):
        binomial_model_from_eps(0.5, 5)


def test_symmetric_threshold_replaces_both():
    model = gaussian_model(0.0, 1.0, 2.0).with_symmetric_threshold(1.25)
    assert (model.eta0, model.eta1) == (-1.25, 1.25)
    assert model.sigma == 2.0


def test_thresholds_replace_independently():
    model = gaussian_model(0.0, 1.0, 2.0).with_thresholds(-0.5, 3.0)
    assert (model.eta0, model.eta1) == (-0.5, 3.0)
    assert model.theta1 == 1.0


# ─── Lattice Recursion ───────────────────────────────────────────────────────


def test_one_step_exit_is_a_binomial_tail():
    model = binomial_model(0.2, 0.8, 5)
    band = continuation_band(llr_spec(model), model.eta0, model.eta1, 1)
    assert (band.lo, band.hi) == (2, 3)
    profile = kdp_profile(model, horizon=3)
    assert profile.under_h1.p_say1[0] == pytest.approx(binom.sf(3, 5, 0.8), rel=1e-12)
    assert profile.under_h1.p_say0[0] == pytest.approx(binom.cdf(1, 5, 0.8), rel=1e-12)


@pytest.mark.parametrize("theta0,theta1", [(0.42, 0.58), (0.45, 0.55), (0.6, 0.4)])
def test_lattice_recursion_matches_brute_force(theta0, theta1):
    model = binomial_model(theta0, theta1, 5)
    profile = kdp_profile(model, horizon=30)
    for hypothesis in (0, 1):
        say0, say1 = brute_force_lattice(model, hypothesis, 30)
        h = profile.branch(hypothesis)
        np.testing.assert_allclose(h.p_say0, say0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(h.p_say1, say1, rtol=0, atol=1e-12)


def test_lattice_profile_grows_until_tail_is_negligible():
    profile = kdp_profile(binomial_model(0.42, 0.58, 5))
    for h in (profile.under_h0, profile.under_h1):
        assert h.p_nd < 1e-9
        assert h.decided_mass + h.p_nd == pytest.approx(1.0, abs=1e-12)
    assert profile.under_h0.t_max == profile.under_h1.t_max


def test_lattice_mass_is_conserved_at_every_step(wald_binomial):
    for hypothesis in (0, 1):
        exited = 0.0
        for state in itertools.islice(lattice_states(wald_binomial, hypothesis), 200):
            exited += state.exit0 + state.exit1
            assert exited + state.continuing == pytest.approx(1.0, abs=1e-12)


def test_negative_slope_swaps_verdicts():
    profile = kdp_profile(binomial_model(0.6, 0.4, 5))
    assert profile.under_h1.p_say1.sum() > 0.8
    assert profile.under_h0.p_say0.sum() > 0.8


# ─── Absorbing Chain ─────────────────────────────────────────────────────────


def test_default_delta_at_wald_thresholds():
    assert default_delta(-LOG9, LOG9) == pytest.approx(0.01)


def test_chain_state_count():
    chain0, chain1 = discretize(gaussian_model(0.0, 1.0, 1.0), delta=0.1)
    assert chain0.n_states == 45
    assert chain1.state_values[chain1.zero_index] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(chain1.transition.sum(axis=1), 1.0, atol=1e-12)


def test_chain_rejects_too_coarse_grid():
    with pytest.raises(ModelError):
        discretize(gaussian_model(0.0, 1.0, 1.0), delta=3.0)


def test_chain_rejects_binomial_model(wald_binomial):
    with pytest.raises(ModelError):
        discretize(wald_binomial)


def test_chain_profile_matches_closed_form(wald_gaussian):
    agent = SprtAgent(wald_gaussian)
    profile = agent.decision_profile()
    closed = agent.closed_form()
    for hypothesis in (0, 1):
        h = profile.branch(hypothesis)
        summary = closed[hypothesis]
        assert h.p_say0.sum() == pytest.approx(summary.p_say0, abs=1e-9)
        assert h.p_say1.sum() == pytest.approx(summary.p_say1, abs=1e-9)
        t = np.arange(1, h.t_max + 1)
        assert float(np.dot(t, h.p_say0 + h.p_say1)) == pytest.approx(summary.expected_time, rel=1e-6)


def test_fixed_horizon_keeps_remaining_mass(wald_gaussian):
    chain0, _ = discretize(wald_gaussian)
    h = chain_profile(chain0, horizon=3)
    assert h.t_max == 3
    assert h.decided_mass + h.p_nd == pytest.approx(1.0, abs=1e-12)
    assert h.p_nd > 0.1


def test_halving_the_grid_step_barely_moves_the_outputs(wald_gaussian):
    report = refinement_check(wald_gaussian)
    assert report["max_prob_diff"] < 5e-3
    assert report["h1_expected_time"] < 0.05


def test_closed_form_meets_wald_design(wald_gaussian, wald_binomial):
    for model in (wald_gaussian, wald_binomial):
        profile = SprtAgent(model).decision_profile()
        assert profile.under_h1.p_say0.sum() <= 0.12
        assert profile.under_h0.p_say1.sum() <= 0.12


def test_symmetric_gaussian_mirrors_verdicts():
    profile = SprtAgent(gaussian_model(-0.5, 0.5, 1.0)).decision_profile(horizon=60)
    h0, h1 = profile.under_h0, profile.under_h1
    np.testing.assert_allclose(h0.p_say0, h1.p_say1, rtol=0, atol=1e-12)
    np.testing.assert_allclose(h0.p_say1, h1.p_say0, rtol=0, atol=1e-12)


# ─── Raw Trajectories ────────────────────────────────────────────────────────


@pytest.mark.slow
@pytest.mark.parametrize("model_fixture,slack", [("wald_binomial", 0.0), ("wald_gaussian", 2e-3)])
def test_raw_trajectories_agree_with_profile(request, model_fixture, slack):
    model = request.getfixturevalue(model_fixture)
    agent = SprtAgent(model)
    profile = agent.decision_profile()
    replicates = 1_000_000
    rng = np.random.Generator(np.random.Philox(12345))
    for hypothesis in (0, 1):
        times, verdicts = agent.sample_decisions(rng, replicates, hypothesis, cap=5000)
        decided = times <= 5000
        wrong = 1 - hypothesis
        freq = np.count_nonzero(decided & (verdicts == wrong)) / replicates
        exact = float(profile.branch(hypothesis).p_say0.sum() if wrong == 0
                      else profile.branch(hypothesis).p_say1.sum())
        se = math.sqrt(exact * (1.0 - exact) / replicates)
        assert abs(freq - exact) < 4.0 * se + slack
        assert freq <= 0.12


def test_sample_decisions_marks_undecided_runs(wald_gaussian):
    agent = SprtAgent(wald_gaussian)
    times, verdicts = agent.sample_decisions(np.random.default_rng(3), 2000, 1, cap=1)
    assert set(np.unique(times)) <= {1, 2}
    assert np.any(times == 2)
    assert verdicts.dtype == np.int8
