import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engine.aggregation import aggregate
from engine.asymptotics import (
    earliest_decision_time, fastest_limits, majority_pw, majority_pw_leading_term,
    majority_pw_asymptote, majority_pw_limit, half_binomial, majority_et_limit,
    monotonicity_suite,
)
from engine.decision_profile import HypothesisProfile
from utils.errors import ProfileError

ODD = list(range(1, 102, 2))


# ─── Fastest Rule ────────────────────────────────────────────────────────────


def test_earliest_decision_time():
    assert earliest_decision_time(HypothesisProfile([0.0, 0.1, 0.6], [0.0, 0.3, 0.0])) == 2
    assert earliest_decision_time(HypothesisProfile([0.5], [0.5])) == 1
    with pytest.raises(ProfileError):
        earliest_decision_time(HypothesisProfile([0.0, 0.0], [0.0, 0.0], p_nd=1.0))


@pytest.mark.parametrize("wrong,correct,limit", [(0.1, 0.3, 0.0), (0.2, 0.2, 0.5), (0.3, 0.1, 1.0)])
def test_fastest_limits(make_profile, wrong, correct, limit):
    profile = make_profile([0.0, wrong, 0.6 - wrong], [0.0, correct, 0.4 - correct])
    limits = fastest_limits(profile)
    assert limits.t_bar == 2
    assert limits.limit_pw == limit
    assert limits.limit_et == 2.0


def test_sprt_profile_decides_at_first_step(wald_gaussian_profile):
    limits = fastest_limits(wald_gaussian_profile)
    assert limits.t_bar == 1
    assert limits.limit_pw == 0.0
    h = wald_gaussian_profile.under_h1
    assert h.p_say1[0] > h.p_say0[0]


@pytest.mark.slow
def test_fastest_rule_speeds_up_with_group_size(wald_gaussian_profile):
    outcomes = [aggregate(wald_gaussian_profile, n, 1) for n in range(1, 62, 2)]
    times = [o.expected_T for o in outcomes]
    assert all(b <= a + 1e-9 for a, b in zip(times, times[1:]))
    assert times[-1] < 1.25
    assert outcomes[-1].p_w < outcomes[0].p_w


# ─── Majority Rule Accuracy ──────────────────────────────────────────────────


def test_majority_pw_values():
    assert majority_pw(0.1, 3) == pytest.approx(0.028, abs=1e-12)
    assert majority_pw(0.1, 5) == pytest.approx(0.00856, abs=1e-12)
    assert majority_pw(0.1, 1) == pytest.approx(0.1, abs=1e-15)


def test_coin_flip_stays_a_coin_flip():
    assert all(majority_pw(0.5, n) == 0.5 for n in ODD)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.3])
def test_majority_pw_decreases_below_one_half(p):
    values = [majority_pw(p, n) for n in ODD]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 0.05
    assert majority_pw_limit(p) == 0.0


@pytest.mark.parametrize("p", [0.55, 0.7, 0.95])
def test_majority_pw_increases_above_one_half(p):
    values = [majority_pw(p, n) for n in ODD]
    assert all(b > a or b >= 1.0 - 1e-12 for a, b in zip(values, values[1:]))
    assert majority_pw_limit(p) == 1.0


def test_majority_pw_rejects_even_groups():
    with pytest.raises(ValueError):
        majority_pw(0.1, 4)
    with pytest.raises(ValueError):
        majority_pw(1.2, 3)


@pytest.mark.parametrize("n", range(3, 23, 2))
def test_leading_term_dominates_for_rare_errors(n):
    ratio = majority_pw(1e-5, n) / majority_pw_leading_term(1e-5, n)
    assert ratio == pytest.approx(1.0, abs=1e-3)


def test_asymptote_domain():
    assert majority_pw_asymptote(0.0, 11) == 0.0
    assert majority_pw_asymptote(0.1, 1) == pytest.approx(math.sqrt(1.0 / (2.0 * math.pi)) * 0.4)
    with pytest.raises(ValueError):
        majority_pw_asymptote(0.25, 11)


def test_stirling_form_of_the_leading_term():
    # central binomial coefficient: C(N, ceil(N/2)) * sqrt(N(N+1)) ~ sqrt(N/2pi) * 2^(N+1)
    n = 101
    scaled = majority_pw_leading_term(0.1, n) * math.sqrt(n * (n + 1))
    assert majority_pw_asymptote(0.1, n) / scaled == pytest.approx(1.0, abs=1e-2)


# ─── Half Binomial Sums ──────────────────────────────────────────────────────


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(ODD), st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_halves_add_up(n, c, share):
    x = share * c / 2.0
    total = half_binomial(n, c, x, "lower") + half_binomial(n, c, x, "upper")
    assert abs(total - c ** n) <= 1e-14


@pytest.mark.parametrize("x", [0.1, 0.2, 0.25, 0.3, 0.45])
def test_halves_add_up_across_group_sizes(x):
    for n in ODD:
        total = half_binomial(n, 1.0, x, "lower") + half_binomial(n, 1.0, x, "upper")
        assert abs(total - 1.0) <= 1e-14


@pytest.mark.parametrize("n", [1, 7, 51, 101])
def test_halves_are_equal_at_the_midpoint(n):
    assert half_binomial(n, 0.8, 0.4, "lower") == half_binomial(n, 0.8, 0.4, "upper") == 0.8 ** n / 2.0


@pytest.mark.parametrize("x", [0.1, 0.2, 0.3, 0.4, 0.45])
def test_upper_half_shrinks_with_group_size(x):
    values = [half_binomial(n, 1.0, x, "upper") for n in ODD]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_upper_half_vanishes():
    assert half_binomial(301, 1.0, 0.3, "upper") < 1e-6


def test_upper_half_is_majority_error():
    for n in (3, 9, 33):
        assert abs(half_binomial(n, 1.0, 0.2, "upper") - majority_pw(0.2, n)) <= 1e-14


def test_half_binomial_validates():
    with pytest.raises(ValueError):
        half_binomial(3, 1.0, 0.6)
    with pytest.raises(ValueError):
        half_binomial(3, 0.0, 0.0)
    with pytest.raises(ValueError):
        half_binomial(3, 1.0, 0.2, side="middle")


# ─── Majority Rule Decision Time ─────────────────────────────────────────────


def test_adjacent_crossing(make_profile):
    case = majority_et_limit(make_profile([0.0, 0.0, 0.1], [0.4, 0.3, 0.2]))
    assert case.case == "A1"
    assert (case.t_lt_half, case.t_gt_half) == (1, 2)
    assert case.limit_et == 2.0
    assert case.adjacent_crossing
    assert case.majority_verdict == 1


def test_crossing_after_a_plateau_at_one_half(make_profile):
    case = majority_et_limit(make_profile([0.0, 0.0, 0.0, 0.0, 0.0, 0.2],
                                          [0.25, 0.125, 0.125, 0.0, 0.0, 0.3]))
    assert case.case == "A1"
    assert (case.t_lt_half, case.t_gt_half) == (2, 6)
    assert case.limit_et == 4.5
    assert not case.adjacent_crossing


def test_wrong_verdict_more_likely(make_profile):
    case = majority_et_limit(make_profile([0.2, 0.5], [0.1, 0.2]))
    assert case.case == "A1"
    assert case.majority_verdict == 0
    assert (case.t_lt_half, case.t_gt_half) == (1, 2)


def test_both_curves_reach_one_half(make_profile):
    case = majority_et_limit(make_profile([0.0, 0.5], [0.5, 0.0]))
    assert case.case == "A2"
    assert (case.t0, case.t1) == (2, 1)
    assert case.limit_et == 1.5


def test_curve_approaching_one_half_gives_infinite_time(make_profile):
    tail = 0.25 * 0.5 ** np.arange(20)
    case = majority_et_limit(make_profile(tail, np.append(0.5, np.zeros(19))))
    assert case.case == "A3/A4"
    assert math.isinf(case.limit_et)


def test_leaky_profile_is_rejected(make_profile):
    with pytest.raises(ProfileError):
        majority_et_limit(make_profile([0.4999], [0.5]))


def test_sprt_profile_is_a_crossing_case(wald_gaussian_profile):
    case = majority_et_limit(wald_gaussian_profile)
    assert case.case == "A1"
    assert case.majority_verdict == 1
    assert case.t_gt_half > case.t_lt_half >= 1


@pytest.mark.slow
def test_majority_time_approaches_its_limit(wald_gaussian_profile):
    limit = majority_et_limit(wald_gaussian_profile).limit_et
    outcome = aggregate(wald_gaussian_profile, 201, 101)
    assert math.isfinite(outcome.expected_T)
    assert abs(outcome.expected_T - limit) < 1.0


# ─── Monotonicity in q ───────────────────────────────────────────────────────


def test_suite_records_every_chain(wald_gaussian_profile):
    report = monotonicity_suite(wald_gaussian_profile, [5])
    metrics = {(r["metric"], r["chain"]) for r in report.records}
    assert ("e_t", "expected_time") in metrics
    assert ("p_nd", "high_q") in metrics
    assert ("p_c", "low_q_conjecture") in metrics
    assert len([r for r in report.records if r["chain"] == "expected_time"]) == 5
    assert report.violations == []


def test_suite_rejects_even_groups(wald_gaussian_profile):
    with pytest.raises(ValueError):
        monotonicity_suite(wald_gaussian_profile, [4])


@pytest.mark.slow
def test_threshold_theorems_hold(wald_gaussian_profile):
    report = monotonicity_suite(wald_gaussian_profile, range(3, 36, 2))
    assert report.violations == []
