"""
QSDA: Decision Profiles
Time-indexed decision probabilities of a single sequential decision maker
(SDM), their validation, and the single-SDM / group decision properties.

Time starts at t=1. Arrays are stored 0-based, so entry k holds time k+1.
"""

import math
import sys
import os
from dataclasses import dataclass, field

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TAIL_TOL, FP_EPS
from utils.errors import ProfileError, GroupSpecError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HypothesisProfile:
    """
    Decision probabilities of one SDM conditioned on one true hypothesis.

    Args:
        p_say0: P[decide H0 at time t], t = 1..T_max.
        p_say1: P[decide H1 at time t], t = 1..T_max.
        p_nd: Probability of never deciding (includes any folded tail).
        tail_mass: Part of p_nd that is truncation residual beyond T_max.
    """

    p_say0: np.ndarray
    p_say1: np.ndarray
    p_nd: float = 0.0
    tail_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p_say0", _frozen(self.p_say0))
        object.__setattr__(self, "p_say1", _frozen(self.p_say1))
        object.__setattr__(self, "p_nd", float(self.p_nd))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @classmethod
    def from_truncated(cls, p_say0, p_say1, p_nd: float | None = None) -> "HypothesisProfile":
        """Build a profile, folding the mass missing after T_max into p_nd."""
        p_say0 = np.asarray(p_say0, dtype=float)
        p_say1 = np.asarray(p_say1, dtype=float)
        base_nd = 0.0 if p_nd is None else float(p_nd)
        residual = max(0.0, 1.0 - float(p_say0.sum() + p_say1.sum()) - base_nd)
        return cls(p_say0, p_say1, p_nd=base_nd + residual, tail_mass=residual)

    @property
    def t_max(self) -> int:
        return int(self.p_say0.shape[0])

    @property
    def decided_mass(self) -> float:
        return float(self.p_say0.sum() + self.p_say1.sum())

    @property
    def residual(self) -> float:
        """1 - sum_t (p0 + p1) - p_nd."""
        return 1.0 - self.decided_mass - self.p_nd

    def cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative decision probabilities (pi0(t), pi1(t)) for t = 1..T_max."""
        return np.cumsum(self.p_say0), np.cumsum(self.p_say1)

    def swapped(self) -> "HypothesisProfile":
        """Same profile with the roles of the two verdicts exchanged."""
        return HypothesisProfile(self.p_say1, self.p_say0, self.p_nd, self.tail_mass)


@dataclass(frozen=True, eq=False)
class DecisionProfile:
    """Decision probabilities of one SDM under both hypotheses."""

    under_h0: HypothesisProfile
    under_h1: HypothesisProfile
    meta: dict = field(default_factory=dict)

    @property
    def t_max(self) -> int:
        return self.under_h1.t_max

    def branch(self, hypothesis: int) -> HypothesisProfile:
        if hypothesis not in (0, 1):
            raise ValueError(f"hypothesis must be 0 or 1, got {hypothesis!r}")
        return self.under_h1 if hypothesis == 1 else self.under_h0

    def swapped(self) -> "DecisionProfile":
        """Exchange the hypotheses: H0 becomes H1 and say-H0 becomes say-H1."""
        return DecisionProfile(self.under_h1.swapped(), self.under_h0.swapped(), dict(self.meta))


@dataclass(frozen=True)
class GroupSpec:
    """Group of N identical SDMs fused by the q out of N rule."""

    n: int
    q: int

    def __post_init__(self):
        if self.n < 1:
            raise GroupSpecError(f"group size must be >= 1, got N={self.n}")
        if not 1 <= self.q <= self.n:
            raise GroupSpecError(f"threshold must satisfy 1 <= q <= N, got q={self.q}, N={self.n}")

    @classmethod
    def fastest(cls, n: int) -> "GroupSpec":
        return cls(n, 1)

    @classmethod
    def majority(cls, n: int) -> "GroupSpec":
        return cls(n, n // 2 + 1)

    @property
    def low_band(self) -> bool:
        """True when q <= floor(N/2), where ties between counters can occur."""
        return self.q <= self.n // 2


@dataclass
class ValidationReport:
    """Per-invariant outcome of validate_profile."""

    checks: dict = field(default_factory=dict)
    residual_h0: float = 0.0
    residual_h1: float = 0.0
    messages: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# ─── Validation ──────────────────────────────────────────────────────────────


def _check_entries(name: str, h: HypothesisProfile) -> None:
    if h.p_say0.shape != h.p_say1.shape:
        raise ProfileError(
            f"{name}: p_say0 has {h.p_say0.size} entries, p_say1 has {h.p_say1.size}"
        )
    for label, arr in (("p_say0", h.p_say0), ("p_say1", h.p_say1)):
        if not np.all(np.isfinite(arr)):
            raise ProfileError(f"{name}.{label} contains non-finite entries")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ProfileError(f"{name}.{label} has entries outside [0, 1]")
    if not 0.0 <= h.p_nd <= 1.0:
        raise ProfileError(f"{name}.p_nd={h.p_nd} outside [0, 1]")


def validate_profile(profile: DecisionProfile, tail_tol: float = TAIL_TOL) -> ValidationReport:
    """
    Check the partition-of-unity invariants of a decision profile.

    Malformed inputs (negative entries, entries above 1, mismatched lengths)
    raise ProfileError. Normalization problems are reported, not raised.

    Args:
        profile: Profile to check.
        tail_tol: Allowed missing mass per hypothesis.

    Returns:
        ValidationReport with one boolean per invariant and the residuals.
    """
    report = ValidationReport()
    for name, h in (("under_h0", profile.under_h0), ("under_h1", profile.under_h1)):
        _check_entries(name, h)
        if h.t_max < 1:
            raise ProfileError(f"{name}: T_max must be >= 1")
        residual = h.residual
        total = 1.0 - residual
        ok = (1.0 - tail_tol) <= total <= (1.0 + FP_EPS)
        report.checks[f"{name}.normalized"] = ok
        if not ok:
            report.messages.append(f"{name}: total mass {total:.12g} outside [1-{tail_tol:g}, 1+{FP_EPS:g}]")
        if name == "under_h0":
            report.residual_h0 = residual
        else:
            report.residual_h1 = residual

    same = profile.under_h0.t_max == profile.under_h1.t_max
    report.checks["same_t_max"] = same
    if not same:
        report.messages.append(
            f"T_max differs: {profile.under_h0.t_max} under H0, {profile.under_h1.t_max} under H1"
        )
    return report


# ─── Single SDM Properties ───────────────────────────────────────────────────


def has_almost_sure_decisions(profile: DecisionProfile, tail_tol: float = TAIL_TOL) -> bool:
    """True when both hypotheses leave at most tail_tol undecided."""
    return all(h.decided_mass >= 1.0 - tail_tol for h in (profile.under_h0, profile.under_h1))


@dataclass(frozen=True)
class DecisionTime:
    """Expected decision time; `mean` is math.inf when mass is lost."""

    mean: float
    conditional_mean: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.mean)


def expected_decision_time(h: HypothesisProfile, tail_tol: float = TAIL_TOL) -> DecisionTime:
    """
    Mean decision time sum_t t*(p0(t)+p1(t)).

    The unconditional mean is infinite when p_nd exceeds tail_tol; the mean
    conditioned on deciding is always reported (nan with no decision mass).
    """
    t = np.arange(1, h.t_max + 1, dtype=float)
    mass = h.p_say0 + h.p_say1
    weighted = float(np.dot(t, mass))
    decided = float(mass.sum())
    conditional = weighted / decided if decided > 0.0 else math.nan
    mean = weighted if h.p_nd <= tail_tol else math.inf
    return DecisionTime(mean, conditional)


def tail_ratio(h: HypothesisProfile, window: int = 16) -> float | None:
    """
    Geometric decay ratio of the per-t decision mass near T_max.

    Returns 0.0 for a profile whose support ends before T_max, None when
    there are too few positive points to fit.
    """
    mass = h.p_say0 + h.p_say1
    positive = np.flatnonzero(mass > 0.0)
    if positive.size == 0:
        return None
    if positive[-1] < h.t_max - 1:
        return 0.0
    tail = positive[-window:]
    if tail.size < 3:
        return None
    slope, _ = np.polyfit(tail.astype(float), np.log(mass[tail]), 1)
    return float(np.exp(slope))


def has_finite_expected_time(profile: DecisionProfile, tail_tol: float = TAIL_TOL) -> bool:
    """Almost-sure decisions whose per-t mass decays at least geometrically."""
    if not has_almost_sure_decisions(profile, tail_tol):
        return False
    for h in (profile.under_h0, profile.under_h1):
        ratio = tail_ratio(h)
        if ratio is not None and ratio >= 1.0:
            return False
    return True


# ─── Group Properties ────────────────────────────────────────────────────────


def _admissible_rule(spec: GroupSpec) -> bool:
    return spec.n % 2 == 1 and 1 <= spec.q <= math.ceil(spec.n / 2)


def group_almost_sure(spec: GroupSpec, profile: DecisionProfile, tail_tol: float = TAIL_TOL) -> bool:
    """Almost-sure single SDM, odd N and q <= ceil(N/2)."""
    return has_almost_sure_decisions(profile, tail_tol) and _admissible_rule(spec)


def group_finite_expected_time(spec: GroupSpec, profile: DecisionProfile,
                               tail_tol: float = TAIL_TOL) -> bool:
    """Finite-expected-time single SDM, odd N and q <= ceil(N/2)."""
    return has_finite_expected_time(profile, tail_tol) and _admissible_rule(spec)
