"""
QSDA: Ground-Truth Oracles
Two independent checks on the aggregation recursion:
  - simulate_group: seeded Monte Carlo of the full protocol (N asynchronous
    SDMs feeding the two fusion counters), with SDM decisions drawn either
    from raw SPRT trajectories or from a decision profile.
  - enumerate_exact: exhaustive sum over every joint per-SDM outcome for
    small groups and short horizons.
"""

import math
import sys
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import (
    TAIL_TOL, ENUM_CAP, MC_BLOCK, MC_DEFAULT_REPLICATES, MC_DEFAULT_SEED,
    HORIZON_CAP, WORKERS,
)
from agents.sprt_model import SprtModel
from agents.sprt_agent import SprtAgent
from engine.decision_profile import DecisionProfile, GroupSpec, validate_profile
from engine.aggregation import GroupOutcome, build_outcome
from utils.errors import ProfileError, EnumerationCapError
from utils.log import get_logger

log = get_logger("engine.montecarlo")

_ENUM_CHUNK = 1 << 20


# ═══════════════════════════════════════════════════════════════════════════════
# TYPES
# ═══════════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class SimConfig:
    """
    Monte Carlo run of one q out of N group.

    Args:
        n: Group size N.
        q: Threshold.
        source: SprtModel (raw observations) or DecisionProfile (direct draws).
        replicates: Number of independent group runs.
        seed: Root seed of the counter-based generator.
        cap: Last simulated time; SDMs undecided by then stay silent. Defaults
            to the profile's T_max, or HORIZON_CAP for raw trajectories.
    """

    n: int
    q: int
    source: SprtModel | DecisionProfile
    replicates: int = MC_DEFAULT_REPLICATES
    seed: int = MC_DEFAULT_SEED
    cap: int | None = None

    def __post_init__(self):
        GroupSpec(self.n, self.q)
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.cap is not None and self.cap < 1:
            raise ValueError(f"cap must be >= 1, got {self.cap}")
        if isinstance(self.source, DecisionProfile):
            report = validate_profile(self.source)
            if not report.passed:
                raise ProfileError("cannot sample an invalid profile: " + "; ".join(report.messages))
        elif not isinstance(self.source, SprtModel):
            raise TypeError(f"source must be an SprtModel or DecisionProfile, got {type(self.source).__name__}")

    @property
    def horizon(self) -> int:
        if isinstance(self.source, DecisionProfile):
            return min(self.cap or self.source.t_max, self.source.t_max)
        return self.cap or HORIZON_CAP


@dataclass(frozen=True, eq=False)
class EmpiricalOutcome:
    """
    Integer tallies of a Monte Carlo run.

    counts_say0[k], counts_say1[k] count group decisions at time k+1, up to
    the last time any run decided;
    count_nd counts runs with no group decision by the cap. The three
    partition the replicates, so frequencies sum to exactly 1.
    """

    n: int
    q: int
    hypothesis: int
    replicates: int
    counts_say0: np.ndarray
    counts_say1: np.ndarray
    count_nd: int
    time_sum: int
    time_sq_sum: int

    @property
    def freq_say0(self) -> np.ndarray:
        return self.counts_say0 / self.replicates

    @property
    def freq_say1(self) -> np.ndarray:
        return self.counts_say1 / self.replicates

    @property
    def freq_nd(self) -> float:
        return self.count_nd / self.replicates

    @property
    def se_say0(self) -> np.ndarray:
        f = self.freq_say0
        return np.sqrt(f * (1.0 - f) / self.replicates)

    @property
    def se_say1(self) -> np.ndarray:
        f = self.freq_say1
        return np.sqrt(f * (1.0 - f) / self.replicates)

    @property
    def decided(self) -> int:
        return self.replicates - self.count_nd

    @property
    def p_c(self) -> float:
        counts = self.counts_say1 if self.hypothesis == 1 else self.counts_say0
        return int(counts.sum()) / self.replicates

    @property
    def p_w(self) -> float:
        counts = self.counts_say0 if self.hypothesis == 1 else self.counts_say1
        return int(counts.sum()) / self.replicates

    @property
    def mean_time(self) -> float:
        """Mean group decision time over the runs that decided."""
        return self.time_sum / self.decided if self.decided else math.nan

    @property
    def mean_time_se(self) -> float:
        k = self.decided
        if k < 2:
            return math.nan
        variance = (self.time_sq_sum - self.time_sum ** 2 / k) / (k - 1)
        return math.sqrt(max(variance, 0.0) / k)


# ═══════════════════════════════════════════════════════════════════════════════
# FUSION REPLAY
# ═══════════════════════════════════════════════════════════════════════════════


def replay_fusion(times: np.ndarray, verdicts: np.ndarray, q: int,
                  cap: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run the fusion counters over rows of N SDM decisions.

    Args:
        times: (runs, N) decision times; values above cap are silent.
        verdicts: (runs, N) verdicts 0/1.
        q: Threshold.
        cap: Last time at which SDM decisions count.

    Returns:
        (decided mask, group time, group verdict) per run. The group declares
        H_i at the first time Count_i >= q and Count_i > Count_other.
    """
    order = np.argsort(times, axis=1, kind="stable")
    ts = np.take_along_axis(times, order, axis=1)
    vs = np.take_along_axis(verdicts, order, axis=1)
    live = ts <= cap
    c1 = np.cumsum(live & (vs == 1), axis=1)
    c0 = np.cumsum(live & (vs == 0), axis=1)
    # Counters are read only once every decision of a time step is in.
    closes = np.ones_like(live)
    closes[:, :-1] = ts[:, 1:] != ts[:, :-1]
    ready = closes & live
    hit1 = ready & (c1 >= q) & (c1 > c0)
    hit0 = ready & (c0 >= q) & (c0 > c1)
    hit = hit0 | hit1
    decided = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    rows = np.arange(ts.shape[0])
    return decided, ts[rows, first], hit1[rows, first].astype(np.int8)


# ═══════════════════════════════════════════════════════════════════════════════
# MONTE CARLO
# ═══════════════════════════════════════════════════════════════════════════════


def _atom_table(profile: DecisionProfile, hypothesis: int, horizon: int) -> np.ndarray:
    """Per-SDM outcome probabilities: (say0, say1) for t = 1..horizon, then undecided."""
    h = profile.branch(hypothesis)
    atoms = np.empty(2 * horizon + 1)
    atoms[0:-1:2] = h.p_say0[:horizon]
    atoms[1:-1:2] = h.p_say1[:horizon]
    atoms[-1] = max(1.0 - float(atoms[:-1].sum()), 0.0)
    return atoms


def _atoms_to_decisions(index: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    times = np.where(index < 2 * horizon, index // 2 + 1, horizon + 1).astype(np.int64)
    return times, (index % 2).astype(np.int8)


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Independent Philox substream for one block of replicates."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _run_block(cfg: SimConfig, hypothesis: int, block: int) -> tuple:
    size = min(MC_BLOCK, cfg.replicates - block * MC_BLOCK)
    rng = block_generator(cfg.seed, block)
    cap = cfg.horizon
    draws = size * cfg.n
    if isinstance(cfg.source, DecisionProfile):
        cdf = np.cumsum(_atom_table(cfg.source, hypothesis, cap))
        index = np.searchsorted(cdf / cdf[-1], rng.random(draws), side="right")
        times, verdicts = _atoms_to_decisions(np.minimum(index, cdf.size - 1), cap)
    else:
        times, verdicts = SprtAgent(cfg.source).sample_decisions(rng, draws, hypothesis, cap)
    decided, group_t, group_v = replay_fusion(times.reshape(size, cfg.n),
                                              verdicts.reshape(size, cfg.n), cfg.q, cap)
    t_say0 = group_t[decided & (group_v == 0)]
    t_say1 = group_t[decided & (group_v == 1)]
    c0 = np.bincount(t_say0 - 1, minlength=cap).astype(np.int64)
    c1 = np.bincount(t_say1 - 1, minlength=cap).astype(np.int64)
    t_all = group_t[decided].astype(np.int64)
    return c0, c1, int(size - decided.sum()), int(t_all.sum()), int(np.dot(t_all, t_all))


def simulate_group(cfg: SimConfig, hypothesis: int = 1, workers: int = WORKERS) -> EmpiricalOutcome:
    """
    Monte Carlo estimate of the group decision law.

    Replicates are split into blocks of MC_BLOCK, each drawn from its own
    (seed, block) substream, so results do not depend on the worker count.
    """
    if hypothesis not in (0, 1):
        raise ValueError(f"hypothesis must be 0 or 1, got {hypothesis!r}")
    blocks = range(math.ceil(cfg.replicates / MC_BLOCK))
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, [cfg] * len(blocks), [hypothesis] * len(blocks), blocks))
    else:
        parts = [_run_block(cfg, hypothesis, b) for b in blocks]

    cap = cfg.horizon
    c0 = np.zeros(cap, dtype=np.int64)
    c1 = np.zeros(cap, dtype=np.int64)
    nd = t_sum = t_sq = 0
    for b0, b1, b_nd, b_sum, b_sq in parts:
        c0 += b0
        c1 += b1
        nd += b_nd
        t_sum += b_sum
        t_sq += b_sq
    # Tallies end at the last time any run decided.
    seen = np.flatnonzero(c0 + c1)
    last = int(seen[-1]) + 1 if seen.size else 1
    c0, c1 = c0[:last], c1[:last]
    log.info(f"[MC] N={cfg.n} q={cfg.q} H{hypothesis}: {cfg.replicates} replicates, "
             f"{nd} undecided by t={cap}")
    return EmpiricalOutcome(cfg.n, cfg.q, hypothesis, cfg.replicates, c0, c1, nd, t_sum, t_sq)


# ═══════════════════════════════════════════════════════════════════════════════
# EXHAUSTIVE ENUMERATION
# ═══════════════════════════════════════════════════════════════════════════════


def enumerate_exact(profile: DecisionProfile, n: int, q: int, horizon: int | None = None,
                    hypothesis: int = 1, enum_cap: int = ENUM_CAP,
                    tail_tol: float = TAIL_TOL) -> GroupOutcome:
    """
    Exact group law by summing over all (2*horizon + 1)^N joint SDM outcomes.

    Raises:
        EnumerationCapError: when the outcome space exceeds enum_cap.
    """
    spec = GroupSpec(n, q)
    horizon = profile.t_max if horizon is None else min(horizon, profile.t_max)
    atoms = _atom_table(profile, hypothesis, horizon)
    k = atoms.size
    total = k ** n
    if total > enum_cap:
        raise EnumerationCapError(f"{k}^{n} = {total} joint outcomes exceed the enumeration cap "
                                  f"{enum_cap}; use simulate_group instead")

    say0 = np.zeros(horizon)
    say1 = np.zeros(horizon)
    for start in range(0, total, _ENUM_CHUNK):
        index = np.arange(start, min(start + _ENUM_CHUNK, total))
        digits = np.stack(np.unravel_index(index, (k,) * n), axis=1)
        prob = np.prod(atoms[digits], axis=1)
        times, verdicts = _atoms_to_decisions(digits, horizon)
        decided, group_t, group_v = replay_fusion(times, verdicts, q, horizon)
        for verdict, out in ((0, say0), (1, say1)):
            mask = decided & (group_v == verdict)
            out += np.bincount(group_t[mask] - 1, weights=prob[mask], minlength=horizon)

    log.debug(f"[MC] enumerated {total} outcomes for N={n} q={q}")
    return build_outcome(spec, hypothesis, say0, say1, tail_tol,
                         {"source": "enumeration", "outcomes": total})
