"""
QSDA: Test Strategies
Hypothesis strategies for random valid decision profiles.
"""

import numpy as np
from hypothesis import strategies as st

from engine.decision_profile import DecisionProfile, HypothesisProfile


def _weights(count: int):
    return st.lists(st.floats(0.0, 1.0), min_size=count, max_size=count).filter(lambda w: sum(w) > 0.01)


@st.composite
def hypothesis_profiles(draw, horizon: int, allow_undecided: bool = True) -> HypothesisProfile:
    """Normalized say-H0 / say-H1 masses for t = 1..horizon plus a never-decide atom."""
    if allow_undecided:
        w = np.array(draw(_weights(2 * horizon + 1)))
    else:
        w = np.append(draw(_weights(2 * horizon)), 0.0)
    w = w / w.sum()
    return HypothesisProfile(w[0:-1:2], w[1:-1:2], p_nd=float(w[-1]))


@st.composite
def decision_profiles(draw, horizon: int = 4, allow_undecided: bool = True) -> DecisionProfile:
    h0 = draw(hypothesis_profiles(horizon, allow_undecided))
    h1 = draw(hypothesis_profiles(horizon, allow_undecided))
    return DecisionProfile(h0, h1, meta={"source": "hypothesis"})
